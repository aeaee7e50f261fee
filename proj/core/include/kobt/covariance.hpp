#pragma once

#include "kobt/data.hpp"

#include <Eigen/Core>

namespace kobt {

enum class CovMethod { shrunk, sparse };

/// Positive-definite covariance estimate on the standardized (unit-variance)
/// scale. min_eigenvalue is the smallest eigenvalue after the repair floor.
struct CovarianceEstimate {
    Eigen::MatrixXd sigma;
    CovMethod method = CovMethod::shrunk;
    double shrinkage_intensity = 0.0;
    double min_eigenvalue = 0.0;

    Eigen::Index p() const { return sigma.rows(); }
};

/// Eigenvalue floor applied by both estimators and by the knockoff sampler's
/// conditional covariance repair.
inline constexpr double kEigenvalueFloor = 1e-8;

/// Default soft-threshold for the sparse estimator: sqrt(log p / n).
double universal_threshold(Eigen::Index n, Eigen::Index p);

/// Linear shrinkage of the sample covariance toward the identity,
/// sigma = (1 - rho) S + rho I, with the analytic variance-minimizing
/// intensity rho. Input columns must be standardized (mean 0, sd 1) and
/// n >= 3.
CovarianceEstimate estimate_shrunk_covariance(const DataMatrix& x);

/// Sample covariance with off-diagonal entries soft-thresholded, then
/// repaired to positive definite by clipping eigenvalues at the floor.
CovarianceEstimate estimate_sparse_covariance(const DataMatrix& x, double threshold);
CovarianceEstimate estimate_sparse_covariance(const DataMatrix& x);  // universal threshold

/// Clips eigenvalues at `floor` and re-symmetrizes.
Eigen::MatrixXd eigenvalue_floor(const Eigen::MatrixXd& m, double floor);

}  // namespace kobt
