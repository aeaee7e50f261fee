#include "kobt/covariance.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace kobt {

namespace {

void check_standardized(const DataMatrix& x) {
    if (x.n() < 3) throw std::invalid_argument("covariance: need n >= 3");
    const Eigen::Index n = x.n();
    for (Eigen::Index c = 0; c < x.p(); ++c) {
        double mean = x.values.col(c).mean();
        double sd = std::sqrt((x.values.col(c).array() - mean).square().sum() /
                              static_cast<double>(n - 1));
        if (std::abs(sd - 1.0) > 1e-6 || std::abs(mean) > 1e-6)
            throw std::invalid_argument(
                "covariance: input not standardized (column '" +
                x.column_names[static_cast<std::size_t>(c)] + "')");
    }
}

Eigen::MatrixXd sample_covariance(const DataMatrix& x) {
    const double n = static_cast<double>(x.n());
    Eigen::MatrixXd centered = x.values.rowwise() - x.values.colwise().mean();
    return (centered.transpose() * centered) / (n - 1.0);
}

}  // namespace

double universal_threshold(Eigen::Index n, Eigen::Index p) {
    return std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

Eigen::MatrixXd eigenvalue_floor(const Eigen::MatrixXd& m, double floor) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("eigenvalue_floor: eigendecomposition failed");
    // Already above the floor: return unchanged so exact entries (zeros from
    // thresholding, identity fixed points) survive bit-for-bit.
    if (eig.eigenvalues().minCoeff() >= floor) return sym;
    // Clip slightly above the floor; reconstruction roundoff must not push
    // the smallest eigenvalue back under it.
    Eigen::VectorXd w = eig.eigenvalues().cwiseMax(floor * 1.0625);
    Eigen::MatrixXd repaired =
        eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (repaired + repaired.transpose());
}

CovarianceEstimate estimate_shrunk_covariance(const DataMatrix& x) {
    check_standardized(x);
    const double n = static_cast<double>(x.n());
    Eigen::MatrixXd S = sample_covariance(x);

    // Analytic intensity: sum of estimated variances of the off-diagonal
    // entries over their squared magnitudes, clipped to [0,1].
    Eigen::MatrixXd centered = x.values.rowwise() - x.values.colwise().mean();
    Eigen::MatrixXd Q = centered.cwiseProduct(centered);  // n x p
    Eigen::MatrixXd sum_w2 = Q.transpose() * Q;           // sum_k w_kij^2
    Eigen::MatrixXd wbar = S * ((n - 1.0) / n);
    Eigen::MatrixXd var_s =
        (sum_w2 - n * wbar.cwiseProduct(wbar)) * (n / ((n - 1.0) * (n - 1.0) * (n - 1.0)));

    double num = var_s.sum() - var_s.diagonal().sum();
    double den = S.cwiseProduct(S).sum() - S.diagonal().cwiseProduct(S.diagonal()).sum();
    double rho = den > 0.0 ? num / den : 1.0;
    rho = std::min(1.0, std::max(0.0, rho));

    Eigen::MatrixXd sigma = (1.0 - rho) * S;
    sigma.diagonal().array() += rho;

    CovarianceEstimate est;
    est.sigma = eigenvalue_floor(sigma, kEigenvalueFloor);
    est.method = CovMethod::shrunk;
    est.shrinkage_intensity = rho;
    est.min_eigenvalue =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(est.sigma).eigenvalues().minCoeff();
    return est;
}

CovarianceEstimate estimate_sparse_covariance(const DataMatrix& x, double threshold) {
    check_standardized(x);
    if (threshold < 0.0)
        throw std::invalid_argument("estimate_sparse_covariance: threshold must be >= 0");
    Eigen::MatrixXd S = sample_covariance(x);
    Eigen::VectorXd diag = S.diagonal();
    Eigen::MatrixXd T =
        (S.array().abs() - threshold).max(0.0) * S.array().sign();
    T.diagonal() = diag;

    CovarianceEstimate est;
    est.sigma = eigenvalue_floor(T, kEigenvalueFloor);
    est.method = CovMethod::sparse;
    est.shrinkage_intensity = threshold;
    est.min_eigenvalue =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(est.sigma).eigenvalues().minCoeff();
    return est;
}

CovarianceEstimate estimate_sparse_covariance(const DataMatrix& x) {
    return estimate_sparse_covariance(x, universal_threshold(x.n(), x.p()));
}

}  // namespace kobt
