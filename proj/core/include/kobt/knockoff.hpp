#pragma once

#include "kobt/covariance.hpp"
#include "kobt/data.hpp"
#include "kobt/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace kobt {

enum class KnockoffKind { shrunk_gaussian, sparse_gaussian, pc_permute };

std::string to_string(KnockoffKind k);
KnockoffKind knockoff_kind_from_string(const std::string& s);

/// How to sample a knockoff copy of a design matrix. Kind-specific fields
/// must be present exactly when the kind needs them.
struct KnockoffConfig {
    KnockoffKind kind = KnockoffKind::shrunk_gaussian;
    std::optional<int> num_pcs;              // pc_permute only
    std::optional<double> sparse_threshold;  // sparse_gaussian only; empty = universal
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    void validate() const;
    RngStream stream() const { return RngStream(master_seed, stream_id); }
};

/// A sampled knockoff matrix, column-paired with the original design.
/// Column names carry a "_knockoff" suffix.
struct KnockoffSet {
    DataMatrix z;
    KnockoffConfig config;
    int pcc_clipped_steps = 0;  // steps where the PC count had to be reduced
};

/// Second-order Gaussian knockoffs with the equicorrelated s-vector
/// s = min(2 lambda_min(sigma), 1). Expects standardized x; rows are drawn
/// independently from the conditional law
///   z_i ~ N(x_i - x_i sigma^{-1} diag(s), 2 diag(s) - diag(s) sigma^{-1} diag(s)),
/// with the conditional covariance eigenvalue-floored before factoring.
KnockoffSet sample_gaussian_knockoffs(const DataMatrix& x, const CovarianceEstimate& cov,
                                      RngStream& rng);

/// Principal-component construction: for each column j in turn, regress x_j
/// (with intercept) on the top-k principal component scores of
/// (X_{-j}, Z_{1:j-1}), then add a random permutation of the residuals to the
/// fitted values. k is clipped when fewer components exist.
KnockoffSet sample_pcc_knockoffs(const DataMatrix& x, int k, RngStream& rng);

/// Full pipeline used by the filter and CLI: standardize, estimate the
/// covariance if needed, sample on the standardized scale, map back to the
/// original scale with the stored means/sds.
KnockoffSet generate_knockoffs(const DataMatrix& x, const KnockoffConfig& config);
KnockoffSet generate_knockoffs(const DataMatrix& x, const KnockoffConfig& config,
                               RngStream& rng);

/// Mean absolute angle between corresponding columns, in radians in
/// [0, pi/2]. 0 means identical column spans, pi/2 orthogonal.
double maac(const DataMatrix& a, const DataMatrix& b);

struct KmmdResult {
    double statistic = 0.0;
    double threshold = 0.0;
    bool reject = false;
};

/// Squared maximum mean discrepancy (biased V-statistic) between the row
/// samples of x and z, Gaussian RBF kernel with the median heuristic
/// bandwidth over the pooled rows.
double kmmd_statistic(const DataMatrix& x, const DataMatrix& z);

/// Permutation test: threshold is the (1-alpha) quantile of the statistic
/// under random reassignment of the pooled rows into two groups of n.
KmmdResult kmmd_test(const DataMatrix& x, const DataMatrix& z, int num_permutations,
                     double alpha, RngStream& rng);

}  // namespace kobt
