#pragma once

#include "kobt/bayes_opt.hpp"
#include "kobt/booster.hpp"
#include "kobt/data.hpp"
#include "kobt/importance.hpp"
#include "kobt/knockoff.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kobt {

enum class Statistic { gain, cover, frequency, shap, saabas };

std::string to_string(Statistic s);
Statistic statistic_from_string(const std::string& s);

/// One selection job: q knockoff replicates, boosted fits on the
/// column-concatenated (X, Z), per-feature importance differences, and the
/// FDR-thresholded cut at level delta.
struct FilterConfig {
    int q = 1;
    double delta = 0.1;
    Statistic statistic = Statistic::shap;
    KnockoffConfig knockoff;
    BoostParams boost;
    bool tune_penalties = false;
    int cv_folds = 10;
    std::uint64_t master_seed = 0;

    void validate() const;
};

/// Accumulated mean absolute importances for original and knockoff columns
/// and their difference T_j = mean_abs_orig - mean_abs_knock.
struct KnockoffStats {
    Eigen::VectorXd mean_abs_orig;
    Eigen::VectorXd mean_abs_knock;
    Eigen::VectorXd t;
    int replicates_used = 0;
};

/// Threshold, selected set, and the estimated-FDP path over candidate cuts.
struct SelectionResult {
    double tau = std::numeric_limits<double>::infinity();
    std::vector<int> selected;  // ascending feature indices
    std::vector<std::pair<double, double>> fdp_path;  // (t, fdp_hat), t ascending
    KnockoffStats stats;
    std::vector<std::string> feature_names;
    // provenance
    std::string config_hash;
    std::uint64_t master_seed = 0;
    std::optional<HyperPoint> tuned;
    std::string notes;
};

/// Least-squares residuals of y0 on W plus an intercept; the result is
/// orthogonal to every covariate column.
Eigen::VectorXd residualize_covariates(const Eigen::VectorXd& y0, const DataMatrix& w);

/// The q-replicate accumulation loop (pipeline steps 1-3 repeated q times).
/// Replicate m uses RngStream(master_seed, m). A replicate whose fit grows
/// no trees contributes zeros and is still counted.
KnockoffStats accumulate_statistics(const Dataset& dataset, const FilterConfig& config);

/// Same loop evaluated for several statistics over shared fits.
std::vector<KnockoffStats> accumulate_statistics_multi(const Dataset& dataset,
                                                       const FilterConfig& config,
                                                       std::span<const Statistic> statistics);

/// Estimated false discovery proportion at cut t > 0:
/// min(#{T_j <= -t} / max(#{T_j >= t}, 1), 1).
double fdp_hat(std::span<const double> t_values, double t);

/// Smallest candidate cut whose (+1-corrected) estimated FDP is <= delta;
/// +infinity when no candidate qualifies. Candidates are the unique positive
/// |T_j|.
double knockoff_threshold(std::span<const double> t_values, double delta);

/// Applies the threshold and records the FDP path at every candidate cut.
SelectionResult select(const KnockoffStats& stats, double delta);

/// End-to-end pipeline: optional covariate residualization (regression only),
/// optional one-time penalty tuning on X alone, accumulation, selection.
SelectionResult run_kobt(const Dataset& dataset, const FilterConfig& config);

}  // namespace kobt
