#pragma once

#include "kobt/booster.hpp"
#include "kobt/data.hpp"

#include <Eigen/Core>

#include <string>

namespace kobt {

enum class ImportanceKind { gain, cover, frequency, shap_mean_abs, saabas_mean_abs };
enum class AttributionKind { shap, saabas };

/// Per-feature global importance aligned to the model's feature order.
/// Features never used by any tree are exactly zero.
struct ImportanceVector {
    Eigen::VectorXd values;
    ImportanceKind kind = ImportanceKind::gain;
};

/// Per-sample, per-feature attributions on the margin scale, plus the base
/// value. Local accuracy: base_value + row sum == margin prediction.
struct AttributionMatrix {
    Eigen::MatrixXd values;  // n x p
    double base_value = 0.0;
    AttributionKind kind = AttributionKind::shap;
};

/// Structural importances summed over every internal node: total split gain,
/// total cover, or split count, per feature.
ImportanceVector structural_importance(const BoostedModel& model, ImportanceKind kind);

/// Path attributions: each split transfers the change in cover-weighted
/// subtree expectation to its split feature.
AttributionMatrix saabas_values(const BoostedModel& model, const DataMatrix& x);
AttributionMatrix saabas_values(const BoostedModel& model, const Eigen::MatrixXd& x);

/// Exact SHAP values under the path-dependent (cover-weighted) conditional
/// expectation, via the polynomial-time per-tree recursion. Additive across
/// trees; satisfies local accuracy.
AttributionMatrix tree_shap_values(const BoostedModel& model, const DataMatrix& x);
AttributionMatrix tree_shap_values(const BoostedModel& model, const Eigen::MatrixXd& x);

/// Brute-force Shapley attributions by subset enumeration (2^p evaluations
/// of the cover-weighted descent). Test oracle; p must be <= 15.
Eigen::VectorXd exact_shapley_oracle(const BoostedModel& model, const Eigen::VectorXd& x_row);

/// Cover-weighted conditional expectation E[f(X) | X_S = x_S] used by the
/// oracle, exposed for tests. subset_mask bit j set means feature j is known.
double tree_expectation_given(const RegressionTree& tree, const Eigen::VectorXd& x_row,
                              std::uint64_t subset_mask);

/// Per-feature mean of absolute attributions over samples.
ImportanceVector mean_abs_aggregate(const AttributionMatrix& attr);

std::string to_string(ImportanceKind k);

}  // namespace kobt
