#include "kobt/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace kobt {

namespace {

using nlohmann::json;

std::string format17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

json tau_to_json(double tau) {
    if (std::isinf(tau)) return "inf";
    return tau;
}

double tau_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw std::invalid_argument("selection.tau: unknown string value");
    }
    return j.get<double>();
}

json knockoff_config_to_json(const KnockoffConfig& cfg) {
    json j{{"kind", to_string(cfg.kind)},
           {"master_seed", cfg.master_seed},
           {"stream_id", cfg.stream_id}};
    if (cfg.num_pcs) j["num_pcs"] = *cfg.num_pcs;
    if (cfg.sparse_threshold) j["sparse_threshold"] = *cfg.sparse_threshold;
    return j;
}

KnockoffConfig knockoff_config_from_json(const json& j) {
    KnockoffConfig cfg;
    cfg.kind = knockoff_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("num_pcs")) cfg.num_pcs = j.at("num_pcs").get<int>();
    if (j.contains("sparse_threshold"))
        cfg.sparse_threshold = j.at("sparse_threshold").get<double>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("stream_id")) cfg.stream_id = j.at("stream_id").get<std::uint64_t>();
    return cfg;
}

json boost_params_to_json(const BoostParams& p) {
    return json{{"eta", p.eta},
                {"gamma", p.gamma},
                {"lambda", p.lambda},
                {"alpha", p.alpha},
                {"max_depth", p.max_depth},
                {"min_child_weight", p.min_child_weight},
                {"subsample_rows", p.subsample_rows},
                {"subsample_cols", p.subsample_cols},
                {"booster", to_string(p.booster)},
                {"dart_dropout", p.dart_dropout},
                {"max_trees", p.max_trees},
                {"early_stopping_rounds", p.early_stopping_rounds},
                {"objective", to_string(p.objective)}};
}

BoostParams boost_params_from_json(const json& j) {
    BoostParams p;
    if (j.contains("eta")) p.eta = j.at("eta").get<double>();
    if (j.contains("gamma")) p.gamma = j.at("gamma").get<double>();
    if (j.contains("lambda")) p.lambda = j.at("lambda").get<double>();
    if (j.contains("alpha")) p.alpha = j.at("alpha").get<double>();
    if (j.contains("max_depth")) p.max_depth = j.at("max_depth").get<int>();
    if (j.contains("min_child_weight"))
        p.min_child_weight = j.at("min_child_weight").get<double>();
    if (j.contains("subsample_rows")) p.subsample_rows = j.at("subsample_rows").get<double>();
    if (j.contains("subsample_cols")) p.subsample_cols = j.at("subsample_cols").get<double>();
    if (j.contains("booster")) p.booster = booster_from_string(j.at("booster").get<std::string>());
    if (j.contains("dart_dropout")) p.dart_dropout = j.at("dart_dropout").get<double>();
    if (j.contains("max_trees")) p.max_trees = j.at("max_trees").get<int>();
    if (j.contains("early_stopping_rounds"))
        p.early_stopping_rounds = j.at("early_stopping_rounds").get<int>();
    if (j.contains("objective"))
        p.objective = objective_from_string(j.at("objective").get<std::string>());
    return p;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string selection_to_json(const SelectionResult& result) {
    json fdp = json::array();
    for (const auto& [t, v] : result.fdp_path) fdp.push_back(json{{"t", t}, {"fdp_hat", v}});

    json selected_names = json::array();
    for (int j : result.selected)
        selected_names.push_back(result.feature_names.empty()
                                     ? std::to_string(j)
                                     : result.feature_names[static_cast<std::size_t>(j)]);

    json doc{{"tau", tau_to_json(result.tau)},
             {"selected", result.selected},
             {"selected_names", selected_names},
             {"fdp_path", std::move(fdp)},
             {"feature_names", result.feature_names},
             {"mean_abs_orig", vector_to_json(result.stats.mean_abs_orig)},
             {"mean_abs_knock", vector_to_json(result.stats.mean_abs_knock)},
             {"t_values", vector_to_json(result.stats.t)},
             {"replicates_used", result.stats.replicates_used},
             {"config_hash", result.config_hash},
             {"master_seed", result.master_seed},
             {"notes", result.notes}};
    if (result.tuned)
        doc["tuned"] = json{{"gamma", result.tuned->gamma},
                            {"lambda", result.tuned->lambda},
                            {"alpha", result.tuned->alpha}};
    return doc.dump(2);
}

SelectionResult selection_from_json(const std::string& text) {
    json doc = json::parse(text);
    SelectionResult r;
    r.tau = tau_from_json(doc.at("tau"));
    r.selected = doc.at("selected").get<std::vector<int>>();
    for (const auto& e : doc.at("fdp_path"))
        r.fdp_path.emplace_back(e.at("t").get<double>(), e.at("fdp_hat").get<double>());
    r.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    r.stats.mean_abs_orig = vector_from_json(doc.at("mean_abs_orig"));
    r.stats.mean_abs_knock = vector_from_json(doc.at("mean_abs_knock"));
    r.stats.t = vector_from_json(doc.at("t_values"));
    r.stats.replicates_used = doc.at("replicates_used").get<int>();
    r.config_hash = doc.at("config_hash").get<std::string>();
    r.master_seed = doc.at("master_seed").get<std::uint64_t>();
    r.notes = doc.at("notes").get<std::string>();
    if (doc.contains("tuned")) {
        HyperPoint h;
        h.gamma = doc["tuned"].at("gamma").get<double>();
        h.lambda = doc["tuned"].at("lambda").get<double>();
        h.alpha = doc["tuned"].at("alpha").get<double>();
        r.tuned = h;
    }
    return r;
}

std::vector<std::string> write_selection_report(const SelectionResult& result,
                                                const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    // Selected features sorted by descending T.
    std::vector<int> order = result.selected;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double ta = result.stats.t[a], tb = result.stats.t[b];
        if (ta != tb) return ta > tb;
        return a < b;
    });
    std::string tsv = "feature\tmean_abs_orig\tmean_abs_knock\tT\n";
    for (int j : order) {
        tsv += (result.feature_names.empty() ? std::to_string(j)
                                             : result.feature_names[static_cast<std::size_t>(j)]) +
               "\t" + format17(result.stats.mean_abs_orig[j]) + "\t" +
               format17(result.stats.mean_abs_knock[j]) + "\t" + format17(result.stats.t[j]) +
               "\n";
    }

    std::string tsv_path = (fs::path(dir) / "selection.tsv").string();
    std::string json_path = (fs::path(dir) / "selection.json").string();
    write_file_atomic(tsv_path, tsv);
    write_file_atomic(json_path, selection_to_json(result));
    return {tsv_path, json_path};
}

std::vector<std::string> write_table_report(const std::vector<TableRow>& rows,
                                            const std::string& dir, const std::string& name,
                                            const std::string& provenance_json) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string tsv = "cell\tmean\tse\treps\n";
    for (const auto& row : rows)
        tsv += row.cell + "\t" + format17(row.mean) + "\t" + format17(row.se) + "\t" +
               std::to_string(row.reps) + "\n";
    std::string tsv_path = (fs::path(dir) / (name + ".tsv")).string();
    std::string json_path = (fs::path(dir) / (name + ".json")).string();
    write_file_atomic(tsv_path, tsv);
    write_file_atomic(json_path, provenance_json);
    return {tsv_path, json_path};
}

std::string quality_long_tsv(const std::vector<TableRow>& rows) {
    std::string tsv = "metric\tkind\tmean\tse\treps\n";
    for (const auto& row : rows) {
        auto slash = row.cell.find('/');
        if (slash == std::string::npos) continue;
        tsv += row.cell.substr(0, slash) + "\t" + row.cell.substr(slash + 1) + "\t" +
               format17(row.mean) + "\t" + format17(row.se) + "\t" + std::to_string(row.reps) +
               "\n";
    }
    return tsv;
}

std::string tune_history_to_json(const TuneResult& result) {
    json history = json::array();
    for (const auto& h : result.history) {
        history.push_back(json{{"gamma", h.point.gamma},
                               {"lambda", h.point.lambda},
                               {"alpha", h.point.alpha},
                               {"cvte", h.cvte},
                               {"stage", h.stage},
                               {"order", h.order}});
    }
    json doc{{"best", json{{"gamma", result.best.gamma},
                           {"lambda", result.best.lambda},
                           {"alpha", result.best.alpha}}},
             {"cvte", result.cvte},
             {"history", std::move(history)}};
    return doc.dump(2);
}

std::string filter_config_to_json(const FilterConfig& config) {
    json doc{{"q", config.q},
             {"delta", config.delta},
             {"statistic", to_string(config.statistic)},
             {"knockoff", knockoff_config_to_json(config.knockoff)},
             {"boost", boost_params_to_json(config.boost)},
             {"tune_penalties", config.tune_penalties},
             {"cv_folds", config.cv_folds},
             {"master_seed", config.master_seed}};
    return doc.dump(2);
}

FilterConfig filter_config_from_json(const std::string& text) {
    json doc = json::parse(text);
    FilterConfig c;
    if (doc.contains("q")) c.q = doc.at("q").get<int>();
    if (doc.contains("delta")) c.delta = doc.at("delta").get<double>();
    if (doc.contains("statistic"))
        c.statistic = statistic_from_string(doc.at("statistic").get<std::string>());
    if (doc.contains("knockoff")) c.knockoff = knockoff_config_from_json(doc.at("knockoff"));
    if (doc.contains("boost")) c.boost = boost_params_from_json(doc.at("boost"));
    if (doc.contains("tune_penalties")) c.tune_penalties = doc.at("tune_penalties").get<bool>();
    if (doc.contains("cv_folds")) c.cv_folds = doc.at("cv_folds").get<int>();
    if (doc.contains("master_seed")) c.master_seed = doc.at("master_seed").get<std::uint64_t>();
    return c;
}

std::string experiment_spec_to_json(const ExperimentSpec& spec) {
    json boosters = json::array();
    for (auto b : spec.boosters) boosters.push_back(to_string(b));
    json structures = json::array();
    for (auto s : spec.structures) structures.push_back(to_string(s));
    json statistics = json::array();
    for (auto s : spec.statistics) statistics.push_back(to_string(s));

    json doc{{"protocol", spec.protocol},
             {"design",
              json{{"n", spec.design.n},
                   {"p", spec.design.p},
                   {"pi", spec.design.pi},
                   {"rho", spec.design.rho},
                   {"strength", spec.design.strength},
                   {"family", to_string(spec.design.family)},
                   {"poisson_mean", spec.design.poisson_mean},
                   {"structure", to_string(spec.design.structure)},
                   {"noise_sd", spec.design.noise_sd}}},
             {"reps", spec.reps},
             {"master_seed", spec.master_seed},
             {"depths", spec.depths},
             {"boosters", std::move(boosters)},
             {"structures", std::move(structures)},
             {"cv_folds", spec.cv_folds},
             {"statistics", std::move(statistics)},
             {"knockoff_kinds", spec.knockoff_kinds},
             {"q", spec.q},
             {"delta", spec.delta},
             {"sparse_threshold", spec.sparse_threshold},
             {"knockoffs_per_design", spec.knockoffs_per_design},
             {"boost", boost_params_to_json(spec.boost)}};
    return doc.dump(2);
}

ExperimentSpec experiment_spec_from_json(const std::string& text) {
    json doc = json::parse(text);
    ExperimentSpec spec;
    spec.protocol = doc.at("protocol").get<std::string>();
    if (doc.contains("design")) {
        const json& d = doc.at("design");
        if (d.contains("n")) spec.design.n = d.at("n").get<int>();
        if (d.contains("p")) spec.design.p = d.at("p").get<int>();
        if (d.contains("pi")) spec.design.pi = d.at("pi").get<double>();
        if (d.contains("rho")) spec.design.rho = d.at("rho").get<double>();
        if (d.contains("strength")) spec.design.strength = d.at("strength").get<double>();
        if (d.contains("family"))
            spec.design.family = family_from_string(d.at("family").get<std::string>());
        if (d.contains("poisson_mean")) spec.design.poisson_mean = d.at("poisson_mean").get<double>();
        if (d.contains("structure"))
            spec.design.structure = structure_from_string(d.at("structure").get<std::string>());
        if (d.contains("noise_sd")) spec.design.noise_sd = d.at("noise_sd").get<double>();
    }
    if (doc.contains("reps")) spec.reps = doc.at("reps").get<int>();
    if (doc.contains("master_seed")) spec.master_seed = doc.at("master_seed").get<std::uint64_t>();
    if (doc.contains("depths")) spec.depths = doc.at("depths").get<std::vector<int>>();
    if (doc.contains("boosters")) {
        spec.boosters.clear();
        for (const auto& b : doc.at("boosters"))
            spec.boosters.push_back(booster_from_string(b.get<std::string>()));
    }
    if (doc.contains("structures")) {
        spec.structures.clear();
        for (const auto& s : doc.at("structures"))
            spec.structures.push_back(structure_from_string(s.get<std::string>()));
    }
    if (doc.contains("cv_folds")) spec.cv_folds = doc.at("cv_folds").get<int>();
    if (doc.contains("statistics")) {
        spec.statistics.clear();
        for (const auto& s : doc.at("statistics"))
            spec.statistics.push_back(statistic_from_string(s.get<std::string>()));
    }
    if (doc.contains("knockoff_kinds"))
        spec.knockoff_kinds = doc.at("knockoff_kinds").get<std::vector<std::string>>();
    if (doc.contains("q")) spec.q = doc.at("q").get<int>();
    if (doc.contains("delta")) spec.delta = doc.at("delta").get<double>();
    if (doc.contains("sparse_threshold"))
        spec.sparse_threshold = doc.at("sparse_threshold").get<double>();
    if (doc.contains("knockoffs_per_design"))
        spec.knockoffs_per_design = doc.at("knockoffs_per_design").get<int>();
    if (doc.contains("boost")) spec.boost = boost_params_from_json(doc.at("boost"));
    return spec;
}

}  // namespace kobt
