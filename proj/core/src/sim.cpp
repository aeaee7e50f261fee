#include "kobt/sim.hpp"

#include "kobt/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kobt {

std::string to_string(DesignFamily f) { return f == DesignFamily::normal ? "normal" : "poisson"; }

std::string to_string(ModelStructure s) {
    switch (s) {
        case ModelStructure::main: return "main";
        case ModelStructure::interaction: return "interaction";
        case ModelStructure::exponential: return "exponential";
        case ModelStructure::quadratic: return "quadratic";
    }
    return "?";
}

DesignFamily family_from_string(const std::string& s) {
    if (s == "normal") return DesignFamily::normal;
    if (s == "poisson") return DesignFamily::poisson;
    throw std::invalid_argument("unknown design family '" + s + "'");
}

ModelStructure structure_from_string(const std::string& s) {
    if (s == "main") return ModelStructure::main;
    if (s == "interaction") return ModelStructure::interaction;
    if (s == "exponential") return ModelStructure::exponential;
    if (s == "quadratic") return ModelStructure::quadratic;
    throw std::invalid_argument("unknown model structure '" + s + "'");
}

int SimDesign::signal_count() const {
    double raw = pi * static_cast<double>(p);
    return static_cast<int>(std::lround(raw));
}

void SimDesign::validate() const {
    if (n < 2) throw std::invalid_argument("design.n must be >= 2");
    if (p < 1) throw std::invalid_argument("design.p must be >= 1");
    if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("design.pi must be in (0,1)");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("design.rho must be in [0,1)");
    if (!(strength > 0.0)) throw std::invalid_argument("design.strength must be > 0");
    if (noise_sd < 0.0) throw std::invalid_argument("design.noise_sd must be >= 0");
    double raw = pi * static_cast<double>(p);
    if (std::abs(raw - std::lround(raw)) > 1e-9 || std::lround(raw) < 1)
        throw std::invalid_argument("design.pi * p must be a positive integer");
    if (structure == ModelStructure::interaction && signal_count() % 2 != 0)
        throw std::invalid_argument("design: interaction structure needs an even signal count");
}

Eigen::MatrixXd gen_block_cov(int p, double pi, double rho) {
    double raw = pi * static_cast<double>(p);
    long bs = std::lround(raw);
    if (std::abs(raw - static_cast<double>(bs)) > 1e-9 || bs < 1)
        throw std::invalid_argument("gen_block_cov: pi * p must be a positive integer");
    if (p % bs != 0)
        throw std::invalid_argument("gen_block_cov: block size must divide p");
    if (!(rho >= 0.0 && rho < 1.0))
        throw std::invalid_argument("gen_block_cov: rho must be in [0,1)");

    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
    for (long b = 0; b < p / bs; ++b) {
        long base = b * bs;
        for (long j = 0; j < bs; ++j)
            for (long k = 0; k < bs; ++k)
                sigma(base + j, base + k) = std::pow(rho, std::abs(j - k));
    }
    return sigma;
}

namespace {

// Smallest k with P(Poisson(mean) <= k) >= u, via a precomputed CDF table.
class PoissonQuantile {
public:
    explicit PoissonQuantile(double mean) {
        double pmf = std::exp(-mean);
        double cdf = pmf;
        cdf_.push_back(cdf);
        int k = 0;
        while (cdf < 1.0 - 1e-16 && k < 4096) {
            ++k;
            pmf *= mean / static_cast<double>(k);
            cdf += pmf;
            cdf_.push_back(cdf);
        }
    }

    double operator()(double u) const {
        auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        return static_cast<double>(it - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<std::string> design_names(int p) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(p));
    for (int j = 1; j <= p; ++j) names.push_back("x" + std::to_string(j));
    return names;
}

}  // namespace

DataMatrix gen_design(const SimDesign& design, RngStream& rng) {
    design.validate();
    Eigen::MatrixXd sigma = gen_block_cov(design.p, design.pi, design.rho);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("gen_design: covariance Cholesky failed");
    Eigen::MatrixXd chol = llt.matrixL();

    Eigen::MatrixXd latent(design.n, design.p);
    for (int i = 0; i < design.n; ++i)
        for (int j = 0; j < design.p; ++j) latent(i, j) = rng.next_normal();
    Eigen::MatrixXd x = latent * chol.transpose();

    if (design.family == DesignFamily::poisson) {
        PoissonQuantile quantile(design.poisson_mean);
        for (int i = 0; i < design.n; ++i)
            for (int j = 0; j < design.p; ++j) x(i, j) = quantile(std_normal_cdf(x(i, j)));
    }
    return DataMatrix(std::move(x), design_names(design.p));
}

DataMatrix transform_design(const DataMatrix& x0, ModelStructure structure, int signal_count) {
    if (signal_count < 0 || signal_count > x0.p())
        throw std::invalid_argument("transform_design: signal_count out of range");
    if (structure == ModelStructure::interaction && signal_count % 2 != 0)
        throw std::invalid_argument("transform_design: interaction needs an even signal count");

    Eigen::MatrixXd out = x0.values;
    switch (structure) {
        case ModelStructure::main:
            break;
        case ModelStructure::interaction:
            for (int i = 0; i < signal_count / 2; ++i)
                out.col(i) =
                    x0.values.col(2 * i).cwiseProduct(x0.values.col(2 * i + 1));
            break;
        case ModelStructure::exponential:
            for (int i = 0; i < signal_count; ++i) out.col(i) = x0.values.col(i).array().exp();
            break;
        case ModelStructure::quadratic:
            for (int i = 0; i < signal_count; ++i) out.col(i) = x0.values.col(i).array().square();
            break;
    }
    return DataMatrix(std::move(out), x0.column_names);
}

Eigen::VectorXd gen_response(const DataMatrix& x_transformed, int signal_count, double strength,
                             RngStream& rng, double noise_sd) {
    if (signal_count < 1 || signal_count > x_transformed.p())
        throw std::invalid_argument("gen_response: signal_count out of range");
    Eigen::VectorXd y =
        strength * x_transformed.values.leftCols(signal_count).rowwise().sum();
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise_sd * rng.next_normal();
    return y;
}

SimTruth simulate_dataset(const SimDesign& design, RngStream& rng) {
    design.validate();
    SimTruth truth;
    truth.x_raw = gen_design(design, rng);
    const int sc = design.signal_count();
    DataMatrix transformed = transform_design(truth.x_raw, design.structure, sc);
    // Interaction responses sum the pairwise-product columns only; the other
    // structures sum every transformed signal column.
    const int response_terms = design.structure == ModelStructure::interaction ? sc / 2 : sc;
    truth.y = gen_response(transformed, response_terms, design.strength, rng, design.noise_sd);
    for (int j = 0; j < sc; ++j) truth.signal_indices.insert(j);
    return truth;
}

std::optional<double> ranking_ratio(const ImportanceVector& importance,
                                    const std::set<int>& signal_indices) {
    std::vector<int> used;
    for (Eigen::Index j = 0; j < importance.values.size(); ++j)
        if (importance.values[j] > 0.0) used.push_back(static_cast<int>(j));

    std::vector<int> used_signals, used_noise;
    for (int j : used) {
        if (signal_indices.count(j))
            used_signals.push_back(j);
        else
            used_noise.push_back(j);
    }
    if (used_signals.empty() || used_noise.empty()) return std::nullopt;

    // Descending importance; ties break to the lower feature index.
    std::sort(used.begin(), used.end(), [&](int a, int b) {
        double ia = importance.values[a], ib = importance.values[b];
        if (ia != ib) return ia > ib;
        return a < b;
    });

    std::size_t last_signal_rank = 0;
    for (std::size_t r = 0; r < used.size(); ++r)
        if (signal_indices.count(used[r])) last_signal_rank = r;

    std::size_t noise_above = 0;
    for (std::size_t r = 0; r < last_signal_rank; ++r)
        if (!signal_indices.count(used[r])) ++noise_above;

    return static_cast<double>(noise_above) / static_cast<double>(used_noise.size());
}

PowerFdp evaluate_power_fdr(const std::vector<int>& selected, const std::set<int>& signals) {
    PowerFdp out;
    std::size_t hits = 0;
    for (int j : selected) hits += signals.count(j) ? 1 : 0;
    out.power = signals.empty()
                    ? 0.0
                    : static_cast<double>(hits) / static_cast<double>(signals.size());
    out.fdp = static_cast<double>(selected.size() - hits) /
              static_cast<double>(std::max<std::size_t>(selected.size(), 1));
    return out;
}

// ---------------------------------------------------------------------------
// Experiment protocols
// ---------------------------------------------------------------------------

KnockoffConfig knockoff_config_for(const std::string& label, double sparse_threshold) {
    KnockoffConfig cfg;
    if (label == "sparse" || label == "sparse_gaussian") {
        cfg.kind = KnockoffKind::sparse_gaussian;
        cfg.sparse_threshold = sparse_threshold;
    } else if (label == "shrunk" || label == "shrunk_gaussian") {
        cfg.kind = KnockoffKind::shrunk_gaussian;
    } else if (label.rfind("pc", 0) == 0 && label.size() > 2) {
        cfg.kind = KnockoffKind::pc_permute;
        cfg.num_pcs = std::stoi(label.substr(2));
    } else {
        throw std::invalid_argument("unknown knockoff kind label '" + label + "'");
    }
    return cfg;
}

void ExperimentSpec::validate() const {
    if (protocol != "cv_error" && protocol != "ranking" && protocol != "power_fdr" &&
        protocol != "knockoff_quality")
        throw std::invalid_argument("experiment.protocol must be one of cv_error|ranking|power_fdr|knockoff_quality");
    if (reps < 1) throw std::invalid_argument("experiment.reps must be >= 1");
    design.validate();
    if (protocol == "cv_error") {
        if (depths.empty() || boosters.empty() || structures.empty())
            throw std::invalid_argument("experiment.cv_error needs depths/boosters/structures");
        if (cv_folds < 2) throw std::invalid_argument("experiment.cv_folds must be >= 2");
    }
    if (protocol == "ranking" || protocol == "power_fdr") {
        if (statistics.empty()) throw std::invalid_argument("experiment.statistics is empty");
    }
    if (protocol == "power_fdr" || protocol == "knockoff_quality") {
        if (knockoff_kinds.empty())
            throw std::invalid_argument("experiment.knockoff_kinds is empty");
        for (const auto& kind : knockoff_kinds) knockoff_config_for(kind, sparse_threshold);
    }
    if (protocol == "power_fdr") {
        if (q < 1) throw std::invalid_argument("experiment.q must be >= 1");
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("experiment.delta must be in (0,1)");
    }
    if (protocol == "knockoff_quality" && knockoffs_per_design < 1)
        throw std::invalid_argument("experiment.knockoffs_per_design must be >= 1");
}

namespace {

struct CellAccumulator {
    std::vector<double> values;

    void add(double v) { values.push_back(v); }

    TableRow row(const std::string& cell) const {
        TableRow r;
        r.cell = cell;
        r.reps = static_cast<int>(values.size());
        if (values.empty()) return r;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        r.mean = mean;
        r.se = values.size() > 1
                   ? std::sqrt(ss / static_cast<double>(values.size() - 1) /
                               static_cast<double>(values.size()))
                   : 0.0;
        return r;
    }
};

std::vector<TableRow> run_cv_error(const ExperimentSpec& spec) {
    struct Case {
        ModelStructure structure;
        Booster booster;
        int depth;
    };
    std::vector<Case> cases;
    for (auto structure : spec.structures)
        for (auto booster : spec.boosters)
            for (int depth : spec.depths) cases.push_back({structure, booster, depth});

    std::vector<std::vector<double>> scores(cases.size(),
                                            std::vector<double>(static_cast<std::size_t>(spec.reps)));
    parallel_for(static_cast<std::size_t>(spec.reps), [&](std::size_t rep) {
        RngStream rep_stream(spec.master_seed, rep + 1);
        // One design draw per replicate, shared by every structure/case.
        RngStream design_rng = rep_stream.derive(0);
        SimDesign base = spec.design;
        base.structure = ModelStructure::main;
        DataMatrix x0 = gen_design(base, design_rng);
        RngStream noise_rng = rep_stream.derive(1);

        for (std::size_t c = 0; c < cases.size(); ++c) {
            SimDesign d = spec.design;
            d.structure = cases[c].structure;
            const int sc = d.signal_count();
            DataMatrix transformed = transform_design(x0, d.structure, sc);
            const int terms = d.structure == ModelStructure::interaction ? sc / 2 : sc;
            RngStream case_noise = noise_rng.derive(c);
            Eigen::VectorXd y =
                gen_response(transformed, terms, d.strength, case_noise, d.noise_sd);

            Dataset data;
            data.x = x0;
            data.y = y;

            BoostParams params = spec.boost;
            params.max_depth = cases[c].depth;
            params.booster = cases[c].booster;
            RngStream cv_rng = rep_stream.derive(1000 + c);
            scores[c][rep] = cross_validate(data, params, spec.cv_folds, cv_rng).cvte;
        }
    });

    std::vector<TableRow> rows;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        CellAccumulator acc;
        for (double v : scores[c]) acc.add(v);
        rows.push_back(acc.row("cv_error/" + to_string(cases[c].structure) + "/" +
                               to_string(cases[c].booster) + "/depth" +
                               std::to_string(cases[c].depth)));
    }
    return rows;
}

std::vector<TableRow> run_ranking(const ExperimentSpec& spec) {
    const auto n_stats = spec.statistics.size();
    std::vector<std::vector<std::optional<double>>> rr(
        n_stats, std::vector<std::optional<double>>(static_cast<std::size_t>(spec.reps)));

    parallel_for(static_cast<std::size_t>(spec.reps), [&](std::size_t rep) {
        RngStream rep_stream(spec.master_seed, rep + 1);
        RngStream sim_rng = rep_stream.derive(0);
        SimTruth truth = simulate_dataset(spec.design, sim_rng);

        Dataset data;
        data.x = truth.x_raw;
        data.y = truth.y;
        RngStream fit_rng = rep_stream.derive(1);
        BoostedModel model = fit_boosted(data, spec.boost, fit_rng);

        AttributionMatrix shap_attr, saabas_attr;
        bool have_shap = false, have_saabas = false;
        for (std::size_t s = 0; s < n_stats; ++s) {
            ImportanceVector imp;
            switch (spec.statistics[s]) {
                case Statistic::gain:
                    imp = structural_importance(model, ImportanceKind::gain);
                    break;
                case Statistic::cover:
                    imp = structural_importance(model, ImportanceKind::cover);
                    break;
                case Statistic::frequency:
                    imp = structural_importance(model, ImportanceKind::frequency);
                    break;
                case Statistic::shap:
                    if (!have_shap) {
                        shap_attr = tree_shap_values(model, data.x.values);
                        have_shap = true;
                    }
                    imp = mean_abs_aggregate(shap_attr);
                    break;
                case Statistic::saabas:
                    if (!have_saabas) {
                        saabas_attr = saabas_values(model, data.x.values);
                        have_saabas = true;
                    }
                    imp = mean_abs_aggregate(saabas_attr);
                    break;
            }
            rr[s][rep] = ranking_ratio(imp, truth.signal_indices);
        }
    });

    std::vector<TableRow> rows;
    for (std::size_t s = 0; s < n_stats; ++s) {
        CellAccumulator acc;
        for (const auto& v : rr[s])
            if (v) acc.add(*v);
        rows.push_back(acc.row("ranking/" + to_string(spec.design.structure) + "/" +
                               to_string(spec.boost.booster) + "/strength" +
                               std::to_string(spec.design.strength).substr(0, 4) + "/" +
                               to_string(spec.statistics[s])));
    }
    return rows;
}

std::vector<TableRow> run_power_fdr(const ExperimentSpec& spec) {
    const auto n_kinds = spec.knockoff_kinds.size();
    const auto n_stats = spec.statistics.size();
    // results[kind][stat][rep] -> (power, fdp)
    std::vector<std::vector<std::vector<PowerFdp>>> results(
        n_kinds, std::vector<std::vector<PowerFdp>>(
                     n_stats, std::vector<PowerFdp>(static_cast<std::size_t>(spec.reps))));

    for (std::size_t k = 0; k < n_kinds; ++k) {
        parallel_for(static_cast<std::size_t>(spec.reps), [&](std::size_t rep) {
            RngStream rep_stream(spec.master_seed, rep + 1);
            RngStream sim_rng = rep_stream.derive(0);
            SimTruth truth = simulate_dataset(spec.design, sim_rng);

            Dataset data;
            data.x = truth.x_raw;
            data.y = truth.y;

            FilterConfig config;
            config.q = spec.q;
            config.delta = spec.delta;
            config.boost = spec.boost;
            config.knockoff = knockoff_config_for(spec.knockoff_kinds[k], spec.sparse_threshold);
            config.master_seed = RngStream::mix_key(
                RngStream::mix_key(spec.master_seed, rep + 1), 1000 + k);

            auto stats = accumulate_statistics_multi(data, config, spec.statistics);
            for (std::size_t s = 0; s < n_stats; ++s) {
                SelectionResult sel = select(stats[s], spec.delta);
                results[k][s][rep] = evaluate_power_fdr(sel.selected, truth.signal_indices);
            }
        });
    }

    std::vector<TableRow> rows;
    for (std::size_t k = 0; k < n_kinds; ++k) {
        for (std::size_t s = 0; s < n_stats; ++s) {
            CellAccumulator power_acc, fdr_acc;
            for (const auto& pf : results[k][s]) {
                power_acc.add(pf.power);
                fdr_acc.add(pf.fdp);
            }
            const std::string base = spec.knockoff_kinds[k] + "/" + to_string(spec.statistics[s]);
            rows.push_back(power_acc.row("power/" + base));
            rows.push_back(fdr_acc.row("fdr/" + base));
        }
    }
    return rows;
}

std::vector<TableRow> run_knockoff_quality(const ExperimentSpec& spec) {
    const auto n_kinds = spec.knockoff_kinds.size();
    // Per design draw: the mean MAAC/KMMD over knockoffs_per_design samples.
    std::vector<std::vector<double>> maac_vals(n_kinds,
                                               std::vector<double>(static_cast<std::size_t>(spec.reps)));
    std::vector<std::vector<double>> kmmd_vals(n_kinds,
                                               std::vector<double>(static_cast<std::size_t>(spec.reps)));

    parallel_for(static_cast<std::size_t>(spec.reps), [&](std::size_t rep) {
        RngStream rep_stream(spec.master_seed, rep + 1);
        RngStream design_rng = rep_stream.derive(0);
        SimDesign d = spec.design;
        DataMatrix x = gen_design(d, design_rng);

        for (std::size_t k = 0; k < n_kinds; ++k) {
            double maac_sum = 0.0, kmmd_sum = 0.0;
            for (int s = 0; s < spec.knockoffs_per_design; ++s) {
                KnockoffConfig cfg =
                    knockoff_config_for(spec.knockoff_kinds[k], spec.sparse_threshold);
                RngStream knock_rng =
                    rep_stream.derive(1 + k * static_cast<std::size_t>(spec.knockoffs_per_design) +
                                      static_cast<std::size_t>(s));
                KnockoffSet ks = generate_knockoffs(x, cfg, knock_rng);
                maac_sum += maac(x, ks.z);
                kmmd_sum += kmmd_statistic(x, ks.z);
            }
            maac_vals[k][rep] = maac_sum / spec.knockoffs_per_design;
            kmmd_vals[k][rep] = kmmd_sum / spec.knockoffs_per_design;
        }
    });

    std::vector<TableRow> rows;
    for (std::size_t k = 0; k < n_kinds; ++k) {
        CellAccumulator macc, kacc;
        for (double v : maac_vals[k]) macc.add(v);
        for (double v : kmmd_vals[k]) kacc.add(v);
        rows.push_back(macc.row("maac/" + spec.knockoff_kinds[k]));
        rows.push_back(kacc.row("kmmd/" + spec.knockoff_kinds[k]));
    }
    return rows;
}

}  // namespace

std::vector<TableRow> run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.protocol == "cv_error") return run_cv_error(spec);
    if (spec.protocol == "ranking") return run_ranking(spec);
    if (spec.protocol == "power_fdr") return run_power_fdr(spec);
    return run_knockoff_quality(spec);
}

}  // namespace kobt
