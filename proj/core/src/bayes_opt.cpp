#include "kobt/bayes_opt.hpp"

#include "kobt/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kobt {

namespace {

constexpr double kJitter = 1e-6;
constexpr double kXi = 0.01;  // exploration margin in the improvement term
constexpr int kNumCandidates = 1024;
constexpr std::array<double, 3> kLengthScaleGrid{0.1, 0.3, 1.0};
constexpr std::array<double, 3> kLocalSigmas{0.2, 0.05, 0.0125};
constexpr int kLocalPerSigma = 8;

double halton1(std::uint64_t i, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

double matern52(double dist, double ls) {
    double z = dist / ls;
    double s = std::sqrt(5.0) * z;
    return (1.0 + s + 5.0 * z * z / 3.0) * std::exp(-s);
}

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

Eigen::Vector3d normalize_point(const HyperPoint& p) {
    const double span = kTuneHigh - kTuneLow;
    return {(p.gamma - kTuneLow) / span, (p.lambda - kTuneLow) / span, (p.alpha - kTuneLow) / span};
}

HyperPoint denormalize_point(const Eigen::Vector3d& u) {
    const double span = kTuneHigh - kTuneLow;
    return {kTuneLow + span * u[0], kTuneLow + span * u[1], kTuneLow + span * u[2]};
}

}  // namespace

void HyperPoint::validate() const {
    auto in_range = [](double v) { return v >= kTuneLow && v <= kTuneHigh; };
    if (!in_range(gamma) || !in_range(lambda) || !in_range(alpha))
        throw std::invalid_argument("HyperPoint: coordinates must lie in [0,20]");
}

Eigen::Vector3d halton3(std::uint64_t index) {
    return {halton1(index, 2), halton1(index, 3), halton1(index, 5)};
}

Surrogate Surrogate::fit(const std::vector<Observation>& observations) {
    if (observations.size() < 2)
        throw std::invalid_argument("Surrogate::fit: need at least 2 observations");
    bool distinct = false;
    for (std::size_t i = 1; i < observations.size() && !distinct; ++i) {
        const auto& a = observations[i].point;
        const auto& b = observations[0].point;
        distinct = a.gamma != b.gamma || a.lambda != b.lambda || a.alpha != b.alpha;
    }
    if (!distinct)
        throw std::invalid_argument("Surrogate::fit: observations are all at the same point");

    Surrogate s;
    s.observations_ = observations;
    const auto n = static_cast<Eigen::Index>(observations.size());
    s.inputs_.resize(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s.inputs_.row(i) = normalize_point(observations[static_cast<std::size_t>(i)].point);
        y[i] = observations[static_cast<std::size_t>(i)].cvte;
    }
    s.out_mean_ = y.mean();
    double var = (y.array() - s.out_mean_).square().sum() / std::max<double>(1.0, n - 1);
    s.out_sd_ = var > 1e-24 ? std::sqrt(var) : 1.0;
    Eigen::VectorXd yn = (y.array() - s.out_mean_) / s.out_sd_;
    s.best_standardized_ = yn.minCoeff();

    Eigen::MatrixXd dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            dist(i, j) = (s.inputs_.row(i) - s.inputs_.row(j)).norm();

    double best_ll = -std::numeric_limits<double>::infinity();
    for (double ls : kLengthScaleGrid) {
        Eigen::MatrixXd K(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) K(i, j) = matern52(dist(i, j), ls);
        K.diagonal().array() += kJitter;
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() != Eigen::Success) continue;
        Eigen::VectorXd a = llt.solve(yn);
        double ll = -0.5 * yn.dot(a);
        for (Eigen::Index i = 0; i < n; ++i)
            ll -= std::log(Eigen::MatrixXd(llt.matrixL())(i, i));
        if (ll > best_ll) {
            best_ll = ll;
            s.length_scale_ = ls;
            s.chol_ = llt.matrixL();
            s.alpha_ = a;
        }
    }
    if (!std::isfinite(best_ll))
        throw std::runtime_error("Surrogate::fit: kernel matrix factorization failed");
    return s;
}

void Surrogate::predict_normalized(const Eigen::Vector3d& u, double& mean,
                                   double& variance) const {
    const Eigen::Index n = inputs_.rows();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k[i] = matern52((inputs_.row(i).transpose() - u).norm(), length_scale_);
    mean = k.dot(alpha_);
    Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
    variance = std::max(0.0, 1.0 + kJitter - v.squaredNorm());
}

double Surrogate::posterior_mean(const HyperPoint& point) const {
    double m, v;
    predict_normalized(normalize_point(point), m, v);
    return m * out_sd_ + out_mean_;
}

double Surrogate::posterior_variance(const HyperPoint& point) const {
    double m, v;
    predict_normalized(normalize_point(point), m, v);
    return v * out_sd_ * out_sd_;
}

HyperPoint propose_next(const Surrogate& surrogate, RngStream& rng) {
    return propose_next(surrogate, rng, 0);
}

HyperPoint propose_next(const Surrogate& surrogate, RngStream& rng, int candidate_offset) {
    // Global Halton candidates, then local refinement around the incumbent.
    std::vector<Eigen::Vector3d> candidates;
    candidates.reserve(kNumCandidates + kLocalPerSigma * kLocalSigmas.size());
    const std::uint64_t start =
        13 + 1000ULL * (static_cast<std::uint64_t>(candidate_offset) + 1);
    for (int i = 0; i < kNumCandidates; ++i)
        candidates.push_back(halton3(start + static_cast<std::uint64_t>(i)));

    Eigen::Vector3d incumbent = Eigen::Vector3d::Zero();
    double best_y = std::numeric_limits<double>::infinity();
    for (const auto& obs : surrogate.observations()) {
        if (obs.cvte < best_y) {
            best_y = obs.cvte;
            incumbent = normalize_point(obs.point);
        }
    }
    for (double sigma : kLocalSigmas) {
        for (int i = 0; i < kLocalPerSigma; ++i) {
            Eigen::Vector3d u;
            for (int d = 0; d < 3; ++d)
                u[d] = std::clamp(incumbent[d] + sigma * rng.next_normal(), 0.0, 1.0);
            candidates.push_back(u);
        }
    }

    const double f_best = surrogate.best_observed_standardized();
    double best_ei = -std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        double mean, var;
        surrogate.predict_normalized(candidates[c], mean, var);
        double sd = std::sqrt(var);
        double improvement = f_best - mean - kXi;
        double ei = 0.0;
        if (sd > 0.0) {
            double z = improvement / sd;
            ei = improvement * norm_cdf(z) + sd * norm_pdf(z);
        }
        if (ei > best_ei) {
            best_ei = ei;
            best_idx = c;
        }
    }
    return denormalize_point(candidates[best_idx]);
}

TuneResult optimize_objective(const TuneObjective& evaluate, int n_init, int n_iter,
                              RngStream& rng) {
    if (n_init < 2) throw std::invalid_argument("tune: need n_init >= 2");
    if (n_iter < 0) throw std::invalid_argument("tune: n_iter must be >= 0");

    TuneResult result;
    result.history.resize(static_cast<std::size_t>(n_init));
    parallel_for(static_cast<std::size_t>(n_init), [&](std::size_t i) {
        HyperPoint pt = denormalize_point(halton3(static_cast<std::uint64_t>(i) + 1));
        TuneHistoryEntry entry;
        entry.point = pt;
        entry.cvte = evaluate(pt, static_cast<std::uint64_t>(i));
        entry.stage = "init";
        entry.order = static_cast<int>(i);
        result.history[i] = entry;
    });

    for (int it = 0; it < n_iter; ++it) {
        std::vector<Observation> obs;
        obs.reserve(result.history.size());
        for (const auto& h : result.history) obs.push_back({h.point, h.cvte});
        Surrogate surrogate = Surrogate::fit(obs);
        RngStream local_rng = rng.derive(100000 + static_cast<std::uint64_t>(it));
        HyperPoint next = propose_next(surrogate, local_rng, it);
        TuneHistoryEntry entry;
        entry.point = next;
        entry.cvte = evaluate(next, static_cast<std::uint64_t>(n_init + it));
        entry.stage = "bo";
        entry.order = n_init + it;
        result.history.push_back(entry);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < result.history.size(); ++i)
        if (result.history[i].cvte < result.history[best].cvte) best = i;
    result.best = result.history[best].point;
    result.cvte = result.history[best].cvte;
    return result;
}

TuneResult tune(const Dataset& dataset, const BoostParams& base, int n_init, int n_iter, int k,
                RngStream& rng) {
    dataset.validate();
    TuneObjective evaluate = [&](const HyperPoint& pt, std::uint64_t eval_id) {
        BoostParams params = base;
        params.gamma = pt.gamma;
        params.lambda = pt.lambda;
        params.alpha = pt.alpha;
        RngStream cv_rng = rng.derive(eval_id);
        return cross_validate(dataset, params, k, cv_rng).cvte;
    };
    return optimize_objective(evaluate, n_init, n_iter, rng);
}

}  // namespace kobt
