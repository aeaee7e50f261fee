#pragma once

#include "kobt/data.hpp"
#include "kobt/rng.hpp"
#include "kobt/tree.hpp"

#include <string>
#include <vector>

namespace kobt {

/// Additive tree ensemble. The raw (margin) prediction is
///   base_score + sum_b tree_weights[b] * tree_b(x),
/// passed through a sigmoid for the logistic objective. base_score is stored
/// on the margin scale (mean response for squared error, logit of the mean
/// for logistic).
struct BoostedModel {
    std::vector<RegressionTree> trees;
    std::vector<double> tree_weights;
    double base_score = 0.0;
    BoostParams params;
    int best_iteration = 0;
    Eigen::Index num_features = 0;

    /// Margin-scale ensemble output truncated at num_trees
    /// (-1 = best_iteration).
    Eigen::VectorXd predict_margin(const Eigen::MatrixXd& x, int num_trees = -1) const;

    /// Response-scale prediction: identical to the margin for squared error,
    /// probabilities in (0,1) for logistic.
    Eigen::VectorXd predict(const Eigen::MatrixXd& x, int num_trees = -1) const;
    Eigen::VectorXd predict(const DataMatrix& x, int num_trees = -1) const;
};

/// Forward stagewise fit. When validation rows are given they are held out
/// of training, the validation metric (MSE, or classification error for
/// logistic) is tracked per round, and fitting stops once the metric has not
/// improved for early_stopping_rounds consecutive rounds; best_iteration
/// records the prefix with the best metric.
BoostedModel fit_boosted(const Dataset& dataset, const BoostParams& params, RngStream& rng,
                         const std::vector<int>* validation_rows = nullptr);

struct CvResult {
    double cvte = 0.0;
    int best_num_trees = 0;
    std::vector<double> fold_scores;
};

/// K-fold cross-validation error: rows are partitioned by rng, each fold is
/// held out once, and cvte is the mean held-out loss at each fold's best
/// iteration (MSE for squared error, classification error for logistic).
CvResult cross_validate(const Dataset& dataset, const BoostParams& params, int k,
                        RngStream& rng);

/// JSON round-trip; preserves predictions exactly.
std::string model_to_json(const BoostedModel& model);
BoostedModel model_from_json(const std::string& text);

}  // namespace kobt
