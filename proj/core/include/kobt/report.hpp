#pragma once

#include "kobt/bayes_opt.hpp"
#include "kobt/filter.hpp"
#include "kobt/sim.hpp"

#include <string>
#include <vector>

namespace kobt {

/// Atomic file write: temp file in the target directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);

/// 64-bit FNV-1a over a canonical string; used for config hashes.
std::string fnv1a_hex(const std::string& text);

/// Selection report: "selection.tsv" lists the selected features sorted by
/// descending T (header-only when empty); "selection.json" carries the full
/// per-feature table, tau, the fdp path, and provenance. Returns the paths.
std::vector<std::string> write_selection_report(const SelectionResult& result,
                                                const std::string& dir);

std::string selection_to_json(const SelectionResult& result);
SelectionResult selection_from_json(const std::string& text);

/// Experiment table report: "<name>.tsv" with cell/mean/se/reps rows plus
/// "<name>.json" provenance. Returns the paths.
std::vector<std::string> write_table_report(const std::vector<TableRow>& rows,
                                            const std::string& dir, const std::string& name,
                                            const std::string& provenance_json);

/// Tuning history as JSON (point, cvte, stage, order).
std::string tune_history_to_json(const TuneResult& result);

/// Experiment spec JSON round-trip for the CLI.
std::string experiment_spec_to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const std::string& text);

/// FilterConfig JSON round-trip (knockoff + boost nested).
std::string filter_config_to_json(const FilterConfig& config);
FilterConfig filter_config_from_json(const std::string& text);

/// Long-format TSV for MAAC/KMMD sweeps: metric, kind, mean, se, reps.
std::string quality_long_tsv(const std::vector<TableRow>& rows);

}  // namespace kobt
