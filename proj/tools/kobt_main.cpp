// Command-line front end for knockoff-filtered boosted tree selection:
//   kobt select   --config job.json   [--seed N] [--out DIR] [overrides]
//   kobt knockoff --config job.json   [--seed N] [--out DIR]
//   kobt tune     --config job.json   [--seed N] [--out DIR]
//   kobt simulate --spec   table.json [--seed N] [--out DIR] [--reps N]
// Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.

#include "kobt/booster.hpp"
#include "kobt/data.hpp"
#include "kobt/filter.hpp"
#include "kobt/knockoff.hpp"
#include "kobt/parallel.hpp"
#include "kobt/report.hpp"
#include "kobt/sim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

json parse_config(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

struct InputSpec {
    std::string path;
    bool has_header = true;
    std::string response;
    std::vector<std::string> covariates;
    kobt::Task task = kobt::Task::regression;
    bool clean = true;
};

InputSpec input_from_json(const json& j) {
    InputSpec in;
    if (!j.contains("path")) throw ConfigError("input.path is required");
    in.path = j.at("path").get<std::string>();
    if (j.contains("has_header")) in.has_header = j.at("has_header").get<bool>();
    if (j.contains("response")) in.response = j.at("response").get<std::string>();
    if (j.contains("covariates"))
        in.covariates = j.at("covariates").get<std::vector<std::string>>();
    if (j.contains("task")) {
        std::string t = j.at("task").get<std::string>();
        if (t == "regression")
            in.task = kobt::Task::regression;
        else if (t == "binary_classification")
            in.task = kobt::Task::binary_classification;
        else
            throw ConfigError("input.task must be regression|binary_classification");
    }
    if (j.contains("clean")) in.clean = j.at("clean").get<bool>();
    return in;
}

kobt::Dataset load_dataset(const InputSpec& in) {
    if (in.response.empty()) throw ConfigError("input.response is required");
    if (!fs::exists(in.path)) throw ConfigError("input.path '" + in.path + "' does not exist");
    kobt::Dataset d = kobt::load_csv(in.path, in.has_header, in.response, in.covariates);
    d.task = in.task;
    if (in.clean) {
        auto cleaned = kobt::clean_columns(d.x);
        if (!cleaned.dropped.empty()) {
            std::cerr << "dropped " << cleaned.dropped.size()
                      << " degenerate column(s) during cleaning\n";
        }
        d.x = std::move(cleaned.matrix);
    }
    d.validate();
    return d;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_hash, std::uint64_t seed,
                    const std::vector<std::string>& outputs, double wall_ms) {
    json doc{{"command", command},
             {"config_hash", config_hash},
             {"master_seed", seed},
             {"version", kVersion},
             {"wall_time_ms", wall_ms},
             {"outputs", json::array()}};
    for (const auto& o : outputs) doc["outputs"].push_back(fs::path(o).filename().string());
    kobt::write_file_atomic((fs::path(out_dir) / "manifest.json").string(), doc.dump(2));
}

struct CommonFlags {
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    int threads = 0;
};

void apply_threads(const CommonFlags& flags) {
    if (flags.threads > 0) {
        kobt::set_max_threads(flags.threads);
    } else if (const char* env = std::getenv("KOBT_THREADS")) {
        kobt::set_max_threads(std::max(1, std::atoi(env)));
    }
}

int run_select(const std::string& config_path, const CommonFlags& flags,
               const std::optional<double>& delta_override,
               const std::optional<int>& q_override,
               const std::optional<std::string>& statistic_override,
               const std::optional<std::string>& kind_override) {
    json doc = parse_config(config_path);
    if (!doc.contains("input")) throw ConfigError("input block is required");
    InputSpec in = input_from_json(doc.at("input"));

    kobt::FilterConfig config =
        kobt::filter_config_from_json(doc.contains("filter") ? doc.at("filter").dump() : "{}");
    if (delta_override) config.delta = *delta_override;
    if (q_override) config.q = *q_override;
    if (statistic_override) config.statistic = kobt::statistic_from_string(*statistic_override);
    if (kind_override) {
        double thr = config.knockoff.sparse_threshold.value_or(-1.0);
        config.knockoff = kobt::knockoff_config_for(*kind_override, thr);
        if (thr < 0.0) config.knockoff.sparse_threshold.reset();
    }
    if (flags.seed) config.master_seed = *flags.seed;
    if (in.task == kobt::Task::binary_classification)
        config.boost.objective = kobt::Objective::logistic;
    try {
        config.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    auto t0 = std::chrono::steady_clock::now();
    kobt::Dataset dataset = load_dataset(in);
    kobt::SelectionResult result = kobt::run_kobt(dataset, config);
    result.config_hash = kobt::fnv1a_hex(kobt::filter_config_to_json(config));

    auto outputs = kobt::write_selection_report(result, flags.out_dir);
    double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    write_manifest(flags.out_dir, "select", result.config_hash, config.master_seed, outputs,
                   wall);
    std::cout << "selected " << result.selected.size() << " feature(s); tau="
              << (std::isinf(result.tau) ? std::string("inf") : std::to_string(result.tau))
              << "\n";
    return 0;
}

int run_knockoff(const std::string& config_path, const CommonFlags& flags) {
    json doc = parse_config(config_path);
    if (!doc.contains("input")) throw ConfigError("input block is required");
    const json& jin = doc.at("input");
    if (!jin.contains("path")) throw ConfigError("input.path is required");
    std::string path = jin.at("path").get<std::string>();
    bool has_header = jin.value("has_header", true);
    if (!fs::exists(path)) throw ConfigError("input.path '" + path + "' does not exist");

    kobt::KnockoffConfig config;
    if (doc.contains("knockoff")) {
        json k = doc.at("knockoff");
        config.kind = kobt::knockoff_kind_from_string(k.value("kind", "shrunk_gaussian"));
        if (k.contains("num_pcs")) config.num_pcs = k.at("num_pcs").get<int>();
        if (k.contains("sparse_threshold"))
            config.sparse_threshold = k.at("sparse_threshold").get<double>();
        if (k.contains("master_seed"))
            config.master_seed = k.at("master_seed").get<std::uint64_t>();
    }
    if (flags.seed) config.master_seed = *flags.seed;
    try {
        config.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    auto t0 = std::chrono::steady_clock::now();
    kobt::DataMatrix x = kobt::load_csv_matrix(path, has_header);
    auto cleaned = kobt::clean_columns(x);
    kobt::KnockoffSet ks = kobt::generate_knockoffs(cleaned.matrix, config);

    fs::create_directories(flags.out_dir);
    std::string csv_path = (fs::path(flags.out_dir) / "knockoffs.csv").string();
    {
        // DataMatrix CSVs are written atomically through a temp file as well
        std::string tmp = csv_path + ".tmp";
        kobt::write_csv(ks.z, tmp);
        fs::rename(tmp, csv_path);
    }

    json sidecar{{"kind", kobt::to_string(config.kind)},
                 {"master_seed", config.master_seed},
                 {"input", path},
                 {"columns", ks.z.column_names},
                 {"dropped_columns", cleaned.dropped},
                 {"pcc_clipped_steps", ks.pcc_clipped_steps}};
    if (config.num_pcs) sidecar["num_pcs"] = *config.num_pcs;
    if (config.sparse_threshold) sidecar["sparse_threshold"] = *config.sparse_threshold;
    std::string sidecar_path = (fs::path(flags.out_dir) / "knockoff_config.json").string();
    kobt::write_file_atomic(sidecar_path, sidecar.dump(2));

    double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    write_manifest(flags.out_dir, "knockoff", kobt::fnv1a_hex(sidecar.dump()),
                   config.master_seed, {csv_path, sidecar_path}, wall);
    std::cout << "wrote " << ks.z.p() << " knockoff column(s) to " << csv_path << "\n";
    return 0;
}

int run_tune(const std::string& config_path, const CommonFlags& flags) {
    json doc = parse_config(config_path);
    if (!doc.contains("input")) throw ConfigError("input block is required");
    InputSpec in = input_from_json(doc.at("input"));

    kobt::BoostParams base;
    kobt::FilterConfig scratch =
        kobt::filter_config_from_json(doc.contains("boost")
                                          ? json{{"boost", doc.at("boost")}}.dump()
                                          : "{}");
    base = scratch.boost;
    int n_init = doc.value("n_init", 10);
    int n_iter = doc.value("n_iter", 20);
    int folds = doc.value("cv_folds", 10);
    std::uint64_t seed = doc.value("master_seed", 0ULL);
    if (flags.seed) seed = *flags.seed;
    if (n_init < 2) throw ConfigError("n_init must be >= 2");
    if (n_iter < 0) throw ConfigError("n_iter must be >= 0");
    if (folds < 2) throw ConfigError("cv_folds must be >= 2");
    if (in.task == kobt::Task::binary_classification)
        base.objective = kobt::Objective::logistic;
    try {
        base.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    auto t0 = std::chrono::steady_clock::now();
    kobt::Dataset dataset = load_dataset(in);
    kobt::RngStream rng(seed, 0);
    kobt::TuneResult result = kobt::tune(dataset, base, n_init, n_iter, folds, rng);

    std::string history_path = (fs::path(flags.out_dir) / "tune_history.json").string();
    kobt::write_file_atomic(history_path, kobt::tune_history_to_json(result));
    double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    write_manifest(flags.out_dir, "tune", kobt::fnv1a_hex(doc.dump() + std::to_string(seed)),
                   seed, {history_path}, wall);
    std::cout << "best cvte " << result.cvte << " at gamma=" << result.best.gamma
              << " lambda=" << result.best.lambda << " alpha=" << result.best.alpha << "\n";
    return 0;
}

int run_simulate(const std::string& spec_path, const CommonFlags& flags,
                 const std::optional<int>& reps_override) {
    kobt::ExperimentSpec spec;
    try {
        spec = kobt::experiment_spec_from_json(read_file(spec_path));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("spec: ") + e.what());
    }
    if (reps_override) spec.reps = *reps_override;
    if (flags.seed) spec.master_seed = *flags.seed;
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    auto t0 = std::chrono::steady_clock::now();
    std::vector<kobt::TableRow> rows = kobt::run_experiment(spec);

    json provenance{{"spec", json::parse(kobt::experiment_spec_to_json(spec))},
                    {"version", kVersion},
                    {"cells", json::array()}};
    for (const auto& r : rows)
        provenance["cells"].push_back(
            json{{"cell", r.cell}, {"mean", r.mean}, {"se", r.se}, {"reps", r.reps}});

    auto outputs = kobt::write_table_report(rows, flags.out_dir, spec.protocol,
                                            provenance.dump(2));
    if (spec.protocol == "knockoff_quality") {
        std::string long_path = (fs::path(flags.out_dir) / "quality_long.tsv").string();
        kobt::write_file_atomic(long_path, kobt::quality_long_tsv(rows));
        outputs.push_back(long_path);
    }
    double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    write_manifest(flags.out_dir, "simulate",
                   kobt::fnv1a_hex(kobt::experiment_spec_to_json(spec)), spec.master_seed,
                   outputs, wall);
    std::cout << "wrote " << rows.size() << " table cell(s)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knockoff boosted tree selection toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string config_path, spec_path;
    std::optional<double> delta_override;
    std::optional<int> q_override, reps_override;
    std::optional<std::string> statistic_override, kind_override;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", flags.out_dir, "Output directory");
        cmd->add_option("--seed", flags.seed, "Master seed (overrides the config)");
        cmd->add_option("--threads", flags.threads,
                        "Worker thread cap (default: KOBT_THREADS or all cores)");
    };

    CLI::App* select = app.add_subcommand("select", "Run the full selection pipeline");
    select->add_option("--config", config_path, "Job config JSON")->required();
    select->add_option("--delta", delta_override, "Target FDR level");
    select->add_option("--q", q_override, "Knockoff replicate count");
    select->add_option("--statistic", statistic_override,
                       "gain|cover|frequency|shap|saabas");
    select->add_option("--knockoff-kind", kind_override, "sparse|shrunk|pc<k>");
    add_common(select);

    CLI::App* knockoff = app.add_subcommand("knockoff", "Sample a knockoff matrix");
    knockoff->add_option("--config", config_path, "Job config JSON")->required();
    add_common(knockoff);

    CLI::App* tune = app.add_subcommand("tune", "Tune penalties by Bayesian optimization");
    tune->add_option("--config", config_path, "Job config JSON")->required();
    add_common(tune);

    CLI::App* simulate = app.add_subcommand("simulate", "Run a simulation experiment");
    simulate->add_option("--spec", spec_path, "Experiment spec JSON")->required();
    simulate->add_option("--reps", reps_override, "Replicate count override");
    add_common(simulate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        apply_threads(flags);
        if (select->parsed())
            return run_select(config_path, flags, delta_override, q_override,
                              statistic_override, kind_override);
        if (knockoff->parsed()) return run_knockoff(config_path, flags);
        if (tune->parsed()) return run_tune(config_path, flags);
        if (simulate->parsed()) return run_simulate(spec_path, flags, reps_override);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
