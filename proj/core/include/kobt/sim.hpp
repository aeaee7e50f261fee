#pragma once

#include "kobt/data.hpp"
#include "kobt/filter.hpp"
#include "kobt/rng.hpp"

#include <Eigen/Core>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace kobt {

enum class DesignFamily { normal, poisson };
enum class ModelStructure { main, interaction, exponential, quadratic };

std::string to_string(DesignFamily f);
std::string to_string(ModelStructure s);
DesignFamily family_from_string(const std::string& s);
ModelStructure structure_from_string(const std::string& s);

/// Synthetic design: block-diagonal AR correlation (entries rho^|j-k| inside
/// pi*p sized blocks), Gaussian or Poisson marginals, and one of four true
/// response structures built from the first pi*p columns.
struct SimDesign {
    int n = 100;
    int p = 200;
    double pi = 0.04;
    double rho = 0.1;
    double strength = 1.5;
    DesignFamily family = DesignFamily::normal;
    double poisson_mean = 5.0;
    ModelStructure structure = ModelStructure::main;
    double noise_sd = 1.0;

    int signal_count() const;
    void validate() const;
};

struct SimTruth {
    std::set<int> signal_indices;
    DataMatrix x_raw;   // the matrix handed to the fitter (untransformed)
    Eigen::VectorXd y;
};

/// Block-diagonal covariance with within-block entries rho^|j-k| and unit
/// diagonal. Block size pi*p must be a positive integer dividing p.
Eigen::MatrixXd gen_block_cov(int p, double pi, double rho);

/// Draws the raw design: i.i.d. N(0, Sigma) rows, or a Gaussian copula with
/// Poisson(poisson_mean) marginals.
DataMatrix gen_design(const SimDesign& design, RngStream& rng);

/// Applies the response structure to the signal columns; all other columns
/// are copied unchanged.
DataMatrix transform_design(const DataMatrix& x0, ModelStructure structure, int signal_count);

/// y = strength * (sum of the first signal_count transformed columns) + noise.
Eigen::VectorXd gen_response(const DataMatrix& x_transformed, int signal_count, double strength,
                             RngStream& rng, double noise_sd = 1.0);

/// Design + transform + response in one step. The returned x_raw is the
/// untransformed matrix, so fits see related-but-incorrect variables for the
/// non-main structures.
SimTruth simulate_dataset(const SimDesign& design, RngStream& rng);

/// Among the features a model actually used (importance > 0), the fraction
/// of used noise features ranked above the worst-ranked used signal.
/// Undefined when no signal or no noise feature was used.
std::optional<double> ranking_ratio(const ImportanceVector& importance,
                                    const std::set<int>& signal_indices);

struct PowerFdp {
    double power = 0.0;
    double fdp = 0.0;
};

PowerFdp evaluate_power_fdr(const std::vector<int>& selected, const std::set<int>& signals);

/// One table cell: mean and standard error of a metric over replicates.
struct TableRow {
    std::string cell;
    double mean = 0.0;
    double se = 0.0;
    int reps = 0;
};

/// Experiment protocols:
///   cv_error          k-fold CV error by structure / depth / booster
///   ranking           ranking ratio per importance statistic
///   power_fdr         selection power and FDP per knockoff kind x statistic
///   knockoff_quality  MAAC and KMMD per knockoff kind
/// All scale knobs are overridable for desk-scale runs.
struct ExperimentSpec {
    std::string protocol = "knockoff_quality";
    SimDesign design;
    int reps = 10;
    std::uint64_t master_seed = 0;

    // cv_error
    std::vector<int> depths{2};
    std::vector<Booster> boosters{Booster::gbrt};
    std::vector<ModelStructure> structures{ModelStructure::main};
    int cv_folds = 10;

    // ranking / power_fdr
    std::vector<Statistic> statistics{Statistic::shap};

    // power_fdr / knockoff_quality
    std::vector<std::string> knockoff_kinds{"sparse"};  // sparse|shrunk|pc10|pc30|pc<k>
    int q = 100;
    double delta = 0.1;
    double sparse_threshold = 0.05;
    int knockoffs_per_design = 50;  // knockoff_quality only

    BoostParams boost;

    void validate() const;
};

/// Runs the named protocol with one RngStream per replicate and emits
/// mean +/- SE per cell, deterministically for a given (spec, master_seed).
std::vector<TableRow> run_experiment(const ExperimentSpec& spec);

/// Resolves a knockoff-kind label ("sparse", "shrunk", "pc10", ...) into a
/// config; the seed fields are filled by the caller.
KnockoffConfig knockoff_config_for(const std::string& label, double sparse_threshold);

}  // namespace kobt
