#pragma once

#include "kobt/booster.hpp"
#include "kobt/data.hpp"
#include "kobt/rng.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace kobt {

/// A point in the (gamma, lambda, alpha) tuning cube [0,20]^3.
struct HyperPoint {
    double gamma = 0.0;
    double lambda = 0.0;
    double alpha = 0.0;

    void validate() const;
};

inline constexpr double kTuneLow = 0.0;
inline constexpr double kTuneHigh = 20.0;

struct Observation {
    HyperPoint point;
    double cvte = 0.0;
};

/// Gaussian-process posterior over the tuning cube: Matern-5/2 kernel with a
/// shared length scale picked from a small grid by marginal likelihood,
/// inputs normalized to [0,1]^3, outputs standardized, fixed diagonal jitter.
class Surrogate {
public:
    static Surrogate fit(const std::vector<Observation>& observations);

    /// Posterior mean and variance on the standardized-output scale at a
    /// normalized input.
    void predict_normalized(const Eigen::Vector3d& u, double& mean, double& variance) const;

    /// Posterior mean in original cvte units at an unnormalized point.
    double posterior_mean(const HyperPoint& point) const;
    double posterior_variance(const HyperPoint& point) const;

    double best_observed_standardized() const { return best_standardized_; }
    double length_scale() const { return length_scale_; }
    const std::vector<Observation>& observations() const { return observations_; }

private:
    std::vector<Observation> observations_;
    Eigen::MatrixXd inputs_;  // normalized, one row per observation
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    double length_scale_ = 0.3;
    double out_mean_ = 0.0;
    double out_sd_ = 1.0;
    double best_standardized_ = 0.0;
};

/// Expected-improvement maximizer over a Halton candidate set plus local
/// perturbations of the incumbent. Deterministic given rng; ties resolve to
/// the first candidate.
HyperPoint propose_next(const Surrogate& surrogate, RngStream& rng);
HyperPoint propose_next(const Surrogate& surrogate, RngStream& rng, int candidate_offset);

struct TuneHistoryEntry {
    HyperPoint point;
    double cvte = 0.0;
    std::string stage;  // "init" or "bo"
    int order = 0;
};

struct TuneResult {
    HyperPoint best;
    double cvte = 0.0;
    std::vector<TuneHistoryEntry> history;
};

/// Black-box objective over the tuning cube; eval_id is a stable index used
/// to derive per-evaluation randomness.
using TuneObjective = std::function<double(const HyperPoint&, std::uint64_t eval_id)>;

/// The optimization loop itself: n_init Halton points, then n_iter rounds of
/// surrogate fit + proposal + evaluation. Initial evaluations may run in
/// parallel; the incumbent comes from the full history.
TuneResult optimize_objective(const TuneObjective& evaluate, int n_init, int n_iter,
                              RngStream& rng);

/// Full tuning loop: the objective is the k-fold CV error of the boosted fit
/// with (gamma, lambda, alpha) overridden. Pure function of
/// (dataset, base, rng).
TuneResult tune(const Dataset& dataset, const BoostParams& base, int n_init, int n_iter, int k,
                RngStream& rng);

/// Halton sequence point (bases 2,3,5) for index i >= 1, in [0,1)^3.
Eigen::Vector3d halton3(std::uint64_t index);

}  // namespace kobt
