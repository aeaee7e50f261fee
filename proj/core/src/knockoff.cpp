#include "kobt/knockoff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kobt {

namespace {

std::vector<std::string> knockoff_names(const std::vector<std::string>& orig) {
    std::vector<std::string> names;
    names.reserve(orig.size());
    for (const auto& n : orig) names.push_back(n + "_knockoff");
    return names;
}

}  // namespace

std::string to_string(KnockoffKind k) {
    switch (k) {
        case KnockoffKind::shrunk_gaussian: return "shrunk_gaussian";
        case KnockoffKind::sparse_gaussian: return "sparse_gaussian";
        case KnockoffKind::pc_permute: return "pc_permute";
    }
    return "?";
}

KnockoffKind knockoff_kind_from_string(const std::string& s) {
    if (s == "shrunk_gaussian" || s == "shrunk") return KnockoffKind::shrunk_gaussian;
    if (s == "sparse_gaussian" || s == "sparse") return KnockoffKind::sparse_gaussian;
    if (s == "pc_permute" || s == "pc") return KnockoffKind::pc_permute;
    throw std::invalid_argument("unknown knockoff kind '" + s + "'");
}

void KnockoffConfig::validate() const {
    if (kind == KnockoffKind::pc_permute) {
        if (!num_pcs) throw std::invalid_argument("knockoff.num_pcs required for pc_permute");
        if (*num_pcs < 1) throw std::invalid_argument("knockoff.num_pcs must be >= 1");
        if (sparse_threshold)
            throw std::invalid_argument("knockoff.sparse_threshold not valid for pc_permute");
    } else {
        if (num_pcs) throw std::invalid_argument("knockoff.num_pcs only valid for pc_permute");
        if (kind == KnockoffKind::shrunk_gaussian && sparse_threshold)
            throw std::invalid_argument("knockoff.sparse_threshold only valid for sparse_gaussian");
        if (sparse_threshold && *sparse_threshold < 0.0)
            throw std::invalid_argument("knockoff.sparse_threshold must be >= 0");
    }
}

KnockoffSet sample_gaussian_knockoffs(const DataMatrix& x, const CovarianceEstimate& cov,
                                      RngStream& rng) {
    if (cov.p() != x.p())
        throw std::invalid_argument("sample_gaussian_knockoffs: covariance size != p");
    const Eigen::Index n = x.n();
    const Eigen::Index p = x.p();

    const double s = std::min(2.0 * cov.min_eigenvalue, 1.0);

    Eigen::LLT<Eigen::MatrixXd> llt(cov.sigma);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("sample_gaussian_knockoffs: covariance not positive definite");

    // Conditional mean M = X - s * X Sigma^{-1}; conditional covariance
    // C = 2 s I - s^2 Sigma^{-1}, floored to stay PSD.
    Eigen::MatrixXd sigma_inv_xt = llt.solve(x.values.transpose());  // p x n
    Eigen::MatrixXd mean = x.values - s * sigma_inv_xt.transpose();

    Eigen::MatrixXd cond = -(s * s) * llt.solve(Eigen::MatrixXd::Identity(p, p));
    cond.diagonal().array() += 2.0 * s;
    cond = eigenvalue_floor(cond, kEigenvalueFloor);
    Eigen::LLT<Eigen::MatrixXd> cond_llt(cond);
    if (cond_llt.info() != Eigen::Success)
        throw std::runtime_error("sample_gaussian_knockoffs: conditional covariance repair failed");
    Eigen::MatrixXd L = cond_llt.matrixL();

    Eigen::MatrixXd noise(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) noise(i, j) = rng.next_normal();

    KnockoffSet ks;
    ks.z = DataMatrix(mean + noise * L.transpose(), knockoff_names(x.column_names));
    return ks;
}

KnockoffSet sample_pcc_knockoffs(const DataMatrix& x, int k, RngStream& rng) {
    if (k < 1) throw std::invalid_argument("sample_pcc_knockoffs: k must be >= 1");
    if (x.n() < 4) throw std::invalid_argument("sample_pcc_knockoffs: need n >= 4");
    if (x.p() < 2) throw std::invalid_argument("sample_pcc_knockoffs: need p >= 2");
    const Eigen::Index n = x.n();
    const Eigen::Index p = x.p();

    // Gram matrix of the centered working set (X without column j plus the
    // knockoffs built so far), maintained by rank-one updates. Principal
    // component scores are eigenvectors of this n x n matrix; eigenvectors
    // with positive eigenvalue are automatically mean-zero, so a regression
    // on them plus an intercept is just mean(x_j) + projections.
    Eigen::MatrixXd centered = x.values.rowwise() - x.values.colwise().mean();
    Eigen::MatrixXd gram_x = centered * centered.transpose();
    Eigen::MatrixXd gram_z = Eigen::MatrixXd::Zero(n, n);

    Eigen::MatrixXd z(n, p);
    int clipped = 0;
    std::vector<int> perm(static_cast<std::size_t>(n));

    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::VectorXd xj = x.values.col(j);
        Eigen::VectorXd xjc = centered.col(j);
        Eigen::MatrixXd gram = gram_x + gram_z;
        gram.noalias() -= xjc * xjc.transpose();

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        if (eig.info() != Eigen::Success)
            throw std::runtime_error("sample_pcc_knockoffs: eigendecomposition failed");

        const Eigen::Index available_cols = p - 1 + j;
        Eigen::Index kj = std::min<Eigen::Index>(k, std::min<Eigen::Index>(n - 2, available_cols));
        // Numeric rank guard: components need a genuinely positive eigenvalue.
        const double max_ev = std::max(eig.eigenvalues().maxCoeff(), 0.0);
        const double rank_tol = 1e-10 * std::max(max_ev, 1.0);
        Eigen::Index rank = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (eig.eigenvalues()[i] > rank_tol) ++rank;
        kj = std::min(kj, rank);
        if (kj < k) ++clipped;

        // Eigenvalues are sorted ascending; the top kj live in the tail.
        double mean_j = xj.mean();
        Eigen::VectorXd fitted = Eigen::VectorXd::Constant(n, mean_j);
        for (Eigen::Index i = 0; i < kj; ++i) {
            const auto u = eig.eigenvectors().col(n - 1 - i);
            fitted.noalias() += u * (u.dot(xj));
        }
        Eigen::VectorXd resid = xj - fitted;

        for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
        rng.shuffle(perm);
        Eigen::VectorXd zj = fitted;
        for (Eigen::Index i = 0; i < n; ++i) zj[i] += resid[perm[static_cast<std::size_t>(i)]];

        z.col(j) = zj;
        Eigen::VectorXd zjc = zj.array() - zj.mean();
        gram_z.noalias() += zjc * zjc.transpose();
    }

    KnockoffSet ks;
    ks.z = DataMatrix(std::move(z), knockoff_names(x.column_names));
    ks.pcc_clipped_steps = clipped;
    return ks;
}

KnockoffSet generate_knockoffs(const DataMatrix& x, const KnockoffConfig& config) {
    RngStream rng = config.stream();
    return generate_knockoffs(x, config, rng);
}

KnockoffSet generate_knockoffs(const DataMatrix& x, const KnockoffConfig& config,
                               RngStream& rng) {
    config.validate();
    StandardizeResult std_x = standardize_columns(x);

    KnockoffSet ks;
    switch (config.kind) {
        case KnockoffKind::shrunk_gaussian: {
            CovarianceEstimate cov = estimate_shrunk_covariance(std_x.matrix);
            ks = sample_gaussian_knockoffs(std_x.matrix, cov, rng);
            break;
        }
        case KnockoffKind::sparse_gaussian: {
            CovarianceEstimate cov =
                config.sparse_threshold
                    ? estimate_sparse_covariance(std_x.matrix, *config.sparse_threshold)
                    : estimate_sparse_covariance(std_x.matrix);
            ks = sample_gaussian_knockoffs(std_x.matrix, cov, rng);
            break;
        }
        case KnockoffKind::pc_permute:
            ks = sample_pcc_knockoffs(std_x.matrix, *config.num_pcs, rng);
            break;
    }

    // Back to the original scale.
    for (Eigen::Index c = 0; c < ks.z.p(); ++c)
        ks.z.values.col(c) = ks.z.values.col(c).array() * std_x.sds[c] + std_x.means[c];
    ks.config = config;
    return ks;
}

double maac(const DataMatrix& a, const DataMatrix& b) {
    if (a.n() != b.n() || a.p() != b.p())
        throw std::invalid_argument("maac: shape mismatch");
    double total = 0.0;
    for (Eigen::Index j = 0; j < a.p(); ++j) {
        double na = a.values.col(j).norm();
        double nb = b.values.col(j).norm();
        if (na == 0.0 || nb == 0.0)
            throw std::invalid_argument("maac: zero-norm column at index " + std::to_string(j));
        double c = std::abs(a.values.col(j).dot(b.values.col(j))) / (na * nb);
        total += std::acos(std::clamp(c, -1.0, 1.0));
    }
    return total / static_cast<double>(a.p());
}

namespace {

// Pooled-row kernel matrix with the median-heuristic bandwidth.
Eigen::MatrixXd pooled_kernel(const DataMatrix& x, const DataMatrix& z) {
    if (x.n() != z.n() || x.p() != z.p())
        throw std::invalid_argument("kmmd: shape mismatch");
    const Eigen::Index n = x.n();
    const Eigen::Index m = 2 * n;
    Eigen::MatrixXd pooled(m, x.p());
    pooled.topRows(n) = x.values;
    pooled.bottomRows(n) = z.values;

    Eigen::VectorXd sq = pooled.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = sq.replicate(1, m) + sq.transpose().replicate(m, 1) -
                         2.0 * pooled * pooled.transpose();
    d2 = d2.cwiseMax(0.0);

    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) dists.push_back(std::sqrt(d2(i, j)));
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double bandwidth = *mid;
    if (dists.size() % 2 == 0) {
        auto lo = std::max_element(dists.begin(), mid);
        bandwidth = 0.5 * (bandwidth + *lo);
    }
    if (bandwidth <= 0.0)
        throw std::invalid_argument("kmmd: degenerate bandwidth (all pooled rows identical)");

    return (-d2 / (2.0 * bandwidth * bandwidth)).array().exp();
}

double vstat_from_kernel(const Eigen::MatrixXd& K, const std::vector<int>& group_a,
                         const std::vector<int>& group_b) {
    const double n = static_cast<double>(group_a.size());
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (int i : group_a)
        for (int j : group_a) kaa += K(i, j);
    for (int i : group_b)
        for (int j : group_b) kbb += K(i, j);
    for (int i : group_a)
        for (int j : group_b) kab += K(i, j);
    return (kaa + kbb - 2.0 * kab) / (n * n);
}

}  // namespace

double kmmd_statistic(const DataMatrix& x, const DataMatrix& z) {
    Eigen::MatrixXd K = pooled_kernel(x, z);
    const int n = static_cast<int>(x.n());
    std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i)] = i;
        b[static_cast<std::size_t>(i)] = n + i;
    }
    return vstat_from_kernel(K, a, b);
}

KmmdResult kmmd_test(const DataMatrix& x, const DataMatrix& z, int num_permutations,
                     double alpha, RngStream& rng) {
    if (num_permutations < 100)
        throw std::invalid_argument("kmmd_test: need num_permutations >= 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("kmmd_test: alpha in (0,1)");

    Eigen::MatrixXd K = pooled_kernel(x, z);
    const int n = static_cast<int>(x.n());
    std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i)] = i;
        b[static_cast<std::size_t>(i)] = n + i;
    }
    KmmdResult res;
    res.statistic = vstat_from_kernel(K, a, b);

    std::vector<int> pool(static_cast<std::size_t>(2 * n));
    for (int i = 0; i < 2 * n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<double> null_stats(static_cast<std::size_t>(num_permutations));
    for (int perm = 0; perm < num_permutations; ++perm) {
        rng.shuffle(pool);
        std::vector<int> ga(pool.begin(), pool.begin() + n);
        std::vector<int> gb(pool.begin() + n, pool.end());
        null_stats[static_cast<std::size_t>(perm)] = vstat_from_kernel(K, ga, gb);
    }
    std::sort(null_stats.begin(), null_stats.end());
    // Conservative permutation quantile: k-th smallest with
    // k = ceil((1 - alpha) (P + 1)), clipped to P.
    std::size_t k = static_cast<std::size_t>(
        std::ceil((1.0 - alpha) * static_cast<double>(num_permutations + 1)));
    if (k < 1) k = 1;
    if (k > null_stats.size()) k = null_stats.size();
    res.threshold = null_stats[k - 1];
    res.reject = res.statistic > res.threshold;
    return res;
}

}  // namespace kobt
