#include "kobt/filter.hpp"

#include "kobt/parallel.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

namespace kobt {

std::string to_string(Statistic s) {
    switch (s) {
        case Statistic::gain: return "gain";
        case Statistic::cover: return "cover";
        case Statistic::frequency: return "frequency";
        case Statistic::shap: return "shap";
        case Statistic::saabas: return "saabas";
    }
    return "?";
}

Statistic statistic_from_string(const std::string& s) {
    if (s == "gain") return Statistic::gain;
    if (s == "cover") return Statistic::cover;
    if (s == "frequency" || s == "weight") return Statistic::frequency;
    if (s == "shap") return Statistic::shap;
    if (s == "saabas") return Statistic::saabas;
    throw std::invalid_argument("unknown statistic '" + s + "'");
}

void FilterConfig::validate() const {
    if (q < 1) throw std::invalid_argument("filter.q must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("filter.delta must be in (0,1)");
    if (cv_folds < 2) throw std::invalid_argument("filter.cv_folds must be >= 2");
    knockoff.validate();
    boost.validate();
}

Eigen::VectorXd residualize_covariates(const Eigen::VectorXd& y0, const DataMatrix& w) {
    if (w.n() != y0.size())
        throw std::invalid_argument("residualize_covariates: covariate rows != response length");
    const Eigen::Index n = w.n();

    // W itself must be full column rank; the appended intercept may coincide
    // with a constant covariate column (the residual only depends on the
    // fitted column space, which rank-revealing QR handles).
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> wqr(w.values);
    if (wqr.rank() < w.p())
        throw std::invalid_argument("residualize_covariates: covariates are rank deficient");

    Eigen::MatrixXd design(n, w.p() + 1);
    design.col(0).setOnes();
    design.rightCols(w.p()) = w.values;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    Eigen::VectorXd coef = qr.solve(y0);
    return y0 - design * coef;
}

namespace {

Eigen::VectorXd structural_abs(const BoostedModel& model, ImportanceKind kind) {
    return structural_importance(model, kind).values.cwiseAbs();
}

}  // namespace

std::vector<KnockoffStats> accumulate_statistics_multi(const Dataset& dataset,
                                                       const FilterConfig& config,
                                                       std::span<const Statistic> statistics) {
    config.validate();
    dataset.validate();
    if (statistics.empty())
        throw std::invalid_argument("accumulate_statistics: no statistics requested");
    const Eigen::Index n = dataset.x.n();
    const Eigen::Index p = dataset.x.p();

    const bool want_shap =
        std::find(statistics.begin(), statistics.end(), Statistic::shap) != statistics.end();
    const bool want_saabas =
        std::find(statistics.begin(), statistics.end(), Statistic::saabas) != statistics.end();

    // Per-replicate absolute importances for all 2p columns, reduced in
    // fixed replicate order afterwards.
    std::vector<std::vector<Eigen::VectorXd>> per_rep(
        static_cast<std::size_t>(config.q),
        std::vector<Eigen::VectorXd>(statistics.size()));

    parallel_for(static_cast<std::size_t>(config.q), [&](std::size_t m) {
        RngStream rep_stream(config.master_seed, static_cast<std::uint64_t>(m) + 1);
        RngStream knock_rng = rep_stream.derive(1);
        RngStream fit_rng = rep_stream.derive(2);
        RngStream swap_rng = rep_stream.derive(3);

        KnockoffSet ks = generate_knockoffs(dataset.x, config.knockoff, knock_rng);

        // Each pair lands in (column j, column p+j) in a random order. Any
        // positional preference of the fitter (deterministic tie-breaks see
        // near-copy knockoffs as exact ties) would otherwise leak into T_j;
        // the swap makes the pair exchangeable and is undone on read-out.
        std::vector<char> swapped(static_cast<std::size_t>(p));
        for (Eigen::Index j = 0; j < p; ++j)
            swapped[static_cast<std::size_t>(j)] = swap_rng.next_double() < 0.5 ? 1 : 0;

        Eigen::MatrixXd combined(n, 2 * p);
        std::vector<std::string> names(static_cast<std::size_t>(2 * p));
        for (Eigen::Index j = 0; j < p; ++j) {
            const bool sw = swapped[static_cast<std::size_t>(j)] != 0;
            combined.col(j) = sw ? Eigen::VectorXd(ks.z.values.col(j))
                                 : Eigen::VectorXd(dataset.x.values.col(j));
            combined.col(p + j) = sw ? Eigen::VectorXd(dataset.x.values.col(j))
                                     : Eigen::VectorXd(ks.z.values.col(j));
            names[static_cast<std::size_t>(j)] =
                sw ? ks.z.column_names[static_cast<std::size_t>(j)]
                   : dataset.x.column_names[static_cast<std::size_t>(j)];
            names[static_cast<std::size_t>(p + j)] =
                sw ? dataset.x.column_names[static_cast<std::size_t>(j)]
                   : ks.z.column_names[static_cast<std::size_t>(j)];
        }

        Dataset fit_data;
        fit_data.x = DataMatrix(std::move(combined), std::move(names));
        fit_data.y = dataset.y;
        fit_data.task = dataset.task;

        BoostedModel model = fit_boosted(fit_data, config.boost, fit_rng);

        if (model.trees.empty()) {
            for (std::size_t s = 0; s < statistics.size(); ++s)
                per_rep[m][s] = Eigen::VectorXd::Zero(2 * p);
            return;
        }

        // Undo the positional swap: head(p) = original columns, tail(p) =
        // knockoffs, no matter where each pair member sat during the fit.
        auto unswap = [&](const Eigen::VectorXd& imp) {
            Eigen::VectorXd fixed(2 * p);
            for (Eigen::Index j = 0; j < p; ++j) {
                const bool sw = swapped[static_cast<std::size_t>(j)] != 0;
                fixed[j] = imp[sw ? p + j : j];
                fixed[p + j] = imp[sw ? j : p + j];
            }
            return fixed;
        };

        // Attribution matrices are the expensive part; compute each at most
        // once per replicate and share across the requested statistics.
        Eigen::VectorXd shap_abs, saabas_abs;
        if (want_shap)
            shap_abs = unswap(
                mean_abs_aggregate(tree_shap_values(model, fit_data.x.values)).values);
        if (want_saabas)
            saabas_abs =
                unswap(mean_abs_aggregate(saabas_values(model, fit_data.x.values)).values);

        for (std::size_t s = 0; s < statistics.size(); ++s) {
            switch (statistics[s]) {
                case Statistic::gain:
                    per_rep[m][s] = unswap(structural_abs(model, ImportanceKind::gain));
                    break;
                case Statistic::cover:
                    per_rep[m][s] = unswap(structural_abs(model, ImportanceKind::cover));
                    break;
                case Statistic::frequency:
                    per_rep[m][s] = unswap(structural_abs(model, ImportanceKind::frequency));
                    break;
                case Statistic::shap:
                    per_rep[m][s] = shap_abs;
                    break;
                case Statistic::saabas:
                    per_rep[m][s] = saabas_abs;
                    break;
            }
        }
    });

    std::vector<KnockoffStats> out(statistics.size());
    for (std::size_t s = 0; s < statistics.size(); ++s) {
        Eigen::VectorXd sum_orig = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd sum_knock = Eigen::VectorXd::Zero(p);
        for (int m = 0; m < config.q; ++m) {
            const Eigen::VectorXd& imp = per_rep[static_cast<std::size_t>(m)][s];
            sum_orig += imp.head(p);
            sum_knock += imp.tail(p);
        }
        KnockoffStats ks;
        ks.mean_abs_orig = sum_orig / static_cast<double>(config.q);
        ks.mean_abs_knock = sum_knock / static_cast<double>(config.q);
        ks.t = ks.mean_abs_orig - ks.mean_abs_knock;
        ks.replicates_used = config.q;
        out[s] = std::move(ks);
    }
    return out;
}

KnockoffStats accumulate_statistics(const Dataset& dataset, const FilterConfig& config) {
    std::array<Statistic, 1> stats{config.statistic};
    return accumulate_statistics_multi(dataset, config, stats)[0];
}

double fdp_hat(std::span<const double> t_values, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("fdp_hat: t must be > 0");
    std::ptrdiff_t below = 0, above = 0;
    for (double v : t_values) {
        if (v <= -t) ++below;
        if (v >= t) ++above;
    }
    double ratio = static_cast<double>(below) / static_cast<double>(std::max<std::ptrdiff_t>(above, 1));
    return std::min(ratio, 1.0);
}

double knockoff_threshold(std::span<const double> t_values, double delta) {
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("knockoff_threshold: delta must be in (0,1)");
    std::set<double> candidates;
    for (double v : t_values)
        if (std::abs(v) > 0.0) candidates.insert(std::abs(v));
    for (double t : candidates) {
        std::ptrdiff_t below = 0, above = 0;
        for (double v : t_values) {
            if (v <= -t) ++below;
            if (v >= t) ++above;
        }
        double corrected = static_cast<double>(below + 1) /
                           static_cast<double>(std::max<std::ptrdiff_t>(above, 1));
        if (corrected <= delta) return t;
    }
    return std::numeric_limits<double>::infinity();
}

SelectionResult select(const KnockoffStats& stats, double delta) {
    SelectionResult result;
    result.stats = stats;
    std::span<const double> t(stats.t.data(), static_cast<std::size_t>(stats.t.size()));
    result.tau = knockoff_threshold(t, delta);

    std::set<double> candidates;
    for (double v : t)
        if (std::abs(v) > 0.0) candidates.insert(std::abs(v));
    for (double c : candidates) result.fdp_path.emplace_back(c, fdp_hat(t, c));

    if (std::isfinite(result.tau)) {
        for (Eigen::Index j = 0; j < stats.t.size(); ++j)
            if (stats.t[j] >= result.tau) result.selected.push_back(static_cast<int>(j));
    }
    return result;
}

SelectionResult run_kobt(const Dataset& dataset, const FilterConfig& config) {
    config.validate();
    dataset.validate();

    Dataset working;
    working.x = dataset.x;
    working.y = dataset.y;
    working.task = dataset.task;
    working.response_name = dataset.response_name;

    std::string notes;
    if (dataset.w) {
        if (dataset.task == Task::regression) {
            working.y = residualize_covariates(dataset.y, *dataset.w);
        } else {
            notes = "covariates ignored: residualization is regression-only";
        }
    }

    FilterConfig effective = config;
    std::optional<HyperPoint> tuned;
    if (config.tune_penalties) {
        RngStream tune_rng(config.master_seed, 0);
        TuneResult tr = tune(working, config.boost, 10, 20, config.cv_folds, tune_rng);
        effective.boost.gamma = tr.best.gamma;
        effective.boost.lambda = tr.best.lambda;
        effective.boost.alpha = tr.best.alpha;
        tuned = tr.best;
    }

    KnockoffStats stats = accumulate_statistics(working, effective);
    SelectionResult result = select(stats, config.delta);
    result.feature_names = dataset.x.column_names;
    result.master_seed = config.master_seed;
    result.tuned = tuned;
    result.notes = notes;
    return result;
}

}  // namespace kobt
