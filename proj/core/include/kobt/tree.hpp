#pragma once

#include "kobt/rng.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kobt {

enum class Booster { gbrt, dart };
enum class Objective { squared_error, logistic };

std::string to_string(Booster b);
std::string to_string(Objective o);
Booster booster_from_string(const std::string& s);
Objective objective_from_string(const std::string& s);

/// Boosting and regularization knobs. gamma penalizes each leaf, lambda is
/// the L2 and alpha the L1 penalty on leaf weights.
struct BoostParams {
    double eta = 0.1;
    double gamma = 0.0;
    double lambda = 1.0;
    double alpha = 0.0;
    int max_depth = 6;
    double min_child_weight = 1.0;
    double subsample_rows = 1.0;
    double subsample_cols = 1.0;
    Booster booster = Booster::gbrt;
    double dart_dropout = 0.1;  // ignored for gbrt
    int max_trees = 100;
    int early_stopping_rounds = 5;
    Objective objective = Objective::squared_error;

    void validate() const;
};

/// One node of a regression tree. Internal nodes route x[feature] < threshold
/// to `left` and x[feature] >= threshold to `right`; leaves carry the fitted
/// weight. cover is the hessian sum of the training rows that reached the
/// node (the row count under unit hessians).
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;
    double split_gain = 0.0;
    double cover = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    int depth = 0;

    double predict_row(const Eigen::MatrixXd& x, Eigen::Index row) const;
    int leaf_count() const;
};

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Leaf weight -soft(G, alpha) / (H + lambda) for the penalized objective.
double leaf_weight(double grad_sum, double hess_sum, const BoostParams& params);

/// Regularized gain of splitting (G,H) into (GL,HL) and the complement;
/// already includes the -gamma structure penalty.
double split_gain_value(double g_total, double h_total, double g_left, double h_left,
                        const BoostParams& params);

/// Exact greedy scan over midpoints of consecutive distinct sorted values of
/// each candidate feature. Returns the best split with gain > 0 and both
/// children at or above min_child_weight; ties break to the lowest feature
/// index, then the lowest threshold. nullopt when no valid split exists.
std::optional<Split> find_best_split(const Eigen::MatrixXd& x, std::span<const int> rows,
                                     std::span<const double> grad, std::span<const double> hess,
                                     std::span<const int> features, const BoostParams& params);

/// Grows a single tree depth-first to max_depth with the exact greedy
/// splitter. Row and column subsampling (if configured) are drawn from rng
/// before growth. grad/hess are indexed by absolute row id.
RegressionTree fit_tree(const Eigen::MatrixXd& x, std::span<const int> rows,
                        std::span<const double> grad, std::span<const double> hess,
                        const BoostParams& params, RngStream& rng);

}  // namespace kobt
