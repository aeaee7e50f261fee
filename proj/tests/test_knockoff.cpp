#include "kobt/knockoff.hpp"
#include "kobt/sim.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace kobt;

namespace {

DataMatrix gaussian_block_design(int n, int p, double pi, double rho, std::uint64_t seed) {
    SimDesign d;
    d.n = n;
    d.p = p;
    d.pi = pi;
    d.rho = rho;
    d.strength = 1.0;
    RngStream rng(seed, 0);
    return gen_design(d, rng);
}

double column_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd ac = a.array() - a.mean();
    Eigen::VectorXd bc = b.array() - b.mean();
    return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

}  // namespace

TEST_CASE("identity covariance gives near-independent gaussian knockoffs") {
    const int n = 2000, p = 6;
    RngStream rng(42, 0);
    Eigen::MatrixXd z(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) z(i, j) = rng.next_normal();
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    DataMatrix x = standardize_columns(DataMatrix(z, names)).matrix;

    CovarianceEstimate cov;
    cov.sigma = Eigen::MatrixXd::Identity(p, p);
    cov.min_eigenvalue = 1.0;
    RngStream krng(43, 0);
    KnockoffSet ks = sample_gaussian_knockoffs(x, cov, krng);
    for (int j = 0; j < p; ++j)
        CHECK(std::abs(column_corr(x.values.col(j), ks.z.values.col(j))) < 0.1);
    CHECK(ks.z.column_names[0] == "x0_knockoff");
}

TEST_CASE("gaussian knockoffs are deterministic given the stream") {
    DataMatrix x = gaussian_block_design(50, 10, 0.5, 0.1, 9);
    KnockoffConfig cfg;
    cfg.kind = KnockoffKind::shrunk_gaussian;
    cfg.master_seed = 77;
    KnockoffSet a = generate_knockoffs(x, cfg);
    KnockoffSet b = generate_knockoffs(x, cfg);
    CHECK((a.z.values - b.z.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("second-order exchangeability: cross covariances match at large n") {
    // cov(z_j, x_k) should reproduce cov(x_j, x_k) for j != k.
    const int n = 2000, p = 10;
    DataMatrix x0 = gaussian_block_design(n, p, 0.5, 0.5, 11);
    DataMatrix x = standardize_columns(x0).matrix;
    auto cov = estimate_shrunk_covariance(x);
    RngStream rng(12, 0);
    KnockoffSet ks = sample_gaussian_knockoffs(x, cov, rng);

    Eigen::MatrixXd xc = x.values.rowwise() - x.values.colwise().mean();
    Eigen::MatrixXd zc = ks.z.values.rowwise() - ks.z.values.colwise().mean();
    Eigen::MatrixXd cov_xx = xc.transpose() * xc / (n - 1.0);
    Eigen::MatrixXd cov_zx = zc.transpose() * xc / (n - 1.0);
    for (int j = 0; j < p; ++j)
        for (int k = 0; k < p; ++k)
            if (j != k) CHECK(std::abs(cov_zx(j, k) - cov_xx(j, k)) < 0.1);
}

TEST_CASE("pcc knockoffs preserve column means exactly") {
    DataMatrix x = gaussian_block_design(60, 12, 0.25, 0.1, 21);
    RngStream rng(5, 0);
    KnockoffSet ks = sample_pcc_knockoffs(x, 4, rng);
    for (int j = 0; j < 12; ++j)
        CHECK(ks.z.values.col(j).mean() ==
              doctest::Approx(x.values.col(j).mean()).epsilon(1e-10));
}

TEST_CASE("pcc knockoff spread tracks the original columns") {
    DataMatrix x = gaussian_block_design(100, 20, 0.25, 0.1, 31);
    RngStream rng(6, 0);
    KnockoffSet ks = sample_pcc_knockoffs(x, 10, rng);
    for (int j = 0; j < 20; ++j) {
        double sx = std::sqrt((x.values.col(j).array() - x.values.col(j).mean()).square().sum());
        double sz =
            std::sqrt((ks.z.values.col(j).array() - ks.z.values.col(j).mean()).square().sum());
        CHECK(sz > 0.8 * sx);
        CHECK(sz < 1.2 * sx);
    }
}

TEST_CASE("more principal components make knockoffs more like the originals") {
    DataMatrix x = gaussian_block_design(100, 30, 0.2, 0.1, 41);
    double corr_small = 0.0, corr_large = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
        RngStream ra(7, static_cast<std::uint64_t>(rep));
        RngStream rb(8, static_cast<std::uint64_t>(rep));
        KnockoffSet small_k = sample_pcc_knockoffs(x, 10, ra);
        KnockoffSet large_k = sample_pcc_knockoffs(x, 98, rb);  // clipped to n-2
        for (int j = 0; j < 30; ++j) {
            corr_small += std::abs(column_corr(x.values.col(j), small_k.z.values.col(j)));
            corr_large += std::abs(column_corr(x.values.col(j), large_k.z.values.col(j)));
        }
    }
    CHECK(corr_large > corr_small);
}

TEST_CASE("pcc preconditions") {
    DataMatrix x = gaussian_block_design(10, 4, 0.5, 0.1, 51);
    RngStream rng(1, 0);
    CHECK_THROWS(sample_pcc_knockoffs(x, 0, rng));
    Eigen::MatrixXd small(3, 4);
    small << 1, 2, 3, 4, 2, 1, 4, 3, 3, 4, 1, 2;
    CHECK_THROWS(sample_pcc_knockoffs(DataMatrix(small, {"a", "b", "c", "d"}), 1, rng));
}

TEST_CASE("maac basics") {
    Eigen::MatrixXd a(2, 2);
    a << 1, 0, 0, 1;
    DataMatrix ma(a, {"a", "b"});
    CHECK(maac(ma, ma) == doctest::Approx(0.0));

    Eigen::MatrixXd b(2, 2);
    b << 0, 1, 1, 0;  // columns orthogonal to ma's
    CHECK(maac(ma, DataMatrix(b, {"a", "b"})) == doctest::Approx(std::numbers::pi / 2));

    Eigen::MatrixXd c(2, 2);
    const double s = 1.0 / std::sqrt(2.0);
    c << s, s, s, -s;
    CHECK(maac(ma, DataMatrix(c, {"a", "b"})) == doctest::Approx(std::numbers::pi / 4));
}

TEST_CASE("maac is symmetric and scale invariant") {
    DataMatrix a = gaussian_block_design(30, 6, 0.5, 0.1, 61);
    DataMatrix b = gaussian_block_design(30, 6, 0.5, 0.1, 62);
    double base = maac(a, b);
    CHECK(maac(b, a) == doctest::Approx(base));
    CHECK(base >= 0.0);
    CHECK(base <= std::numbers::pi / 2);

    DataMatrix scaled = b;
    scaled.values.col(0) *= 17.0;
    scaled.values.col(1) *= -0.03;
    scaled.values.col(2) *= 4.0;
    CHECK(maac(a, scaled) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("maac rejects shape mismatch and zero columns") {
    DataMatrix a = gaussian_block_design(10, 4, 0.5, 0.1, 71);
    DataMatrix b = gaussian_block_design(10, 2, 0.5, 0.1, 72);
    CHECK_THROWS(maac(a, b));
    DataMatrix z = a;
    z.values.col(1).setZero();
    CHECK_THROWS(maac(a, z));
}

TEST_CASE("kmmd accepts row permutations of the same sample") {
    DataMatrix x = gaussian_block_design(40, 5, 0.2, 0.1, 81);
    DataMatrix z = x;
    // reverse rows
    z.values = x.values.colwise().reverse().eval();
    RngStream rng(9, 0);
    KmmdResult r = kmmd_test(x, z, 200, 0.05, rng);
    CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(r.reject);
}

TEST_CASE("kmmd detects a mean shift") {
    const int n = 100, p = 5;
    RngStream rng(91, 0);
    Eigen::MatrixXd xa(n, p), xb(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            xa(i, j) = rng.next_normal();
            xb(i, j) = rng.next_normal() + 3.0;
        }
    std::vector<std::string> names{"a", "b", "c", "d", "e"};
    RngStream prng(92, 0);
    KmmdResult r = kmmd_test(DataMatrix(xa, names), DataMatrix(xb, names), 200, 0.05, prng);
    CHECK(r.reject);
}

TEST_CASE("kmmd permutation test is calibrated under the null") {
    const int n = 50, p = 3, trials = 200;
    std::vector<std::string> names{"a", "b", "c"};
    int rejections = 0;
    for (int t = 0; t < trials; ++t) {
        RngStream rng(400 + static_cast<std::uint64_t>(t), 0);
        Eigen::MatrixXd xa(n, p), xb(n, p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) {
                xa(i, j) = rng.next_normal();
                xb(i, j) = rng.next_normal();
            }
        RngStream prng(500 + static_cast<std::uint64_t>(t), 0);
        KmmdResult r =
            kmmd_test(DataMatrix(xa, names), DataMatrix(xb, names), 100, 0.05, prng);
        rejections += r.reject ? 1 : 0;
    }
    CHECK(static_cast<double>(rejections) / trials <= 0.10);
}

TEST_CASE("kmmd rejects degenerate bandwidth") {
    // all pooled rows identical
    DataMatrix a(Eigen::MatrixXd::Ones(5, 2), {"a", "b"});
    DataMatrix b(Eigen::MatrixXd::Ones(5, 2), {"a", "b"});
    RngStream rng(1, 1);
    CHECK_THROWS(kmmd_test(a, b, 100, 0.05, rng));
}

TEST_CASE("generate_knockoffs maps back to the original scale") {
    // n < p keeps the raw sample covariance singular, so a zero threshold
    // yields near-copy knockoffs on the standardized scale
    DataMatrix x = gaussian_block_design(30, 40, 0.1, 0.1, 101);
    x.values.col(0).array() += 50.0;  // forced large mean
    x.values.col(1) *= 9.0;
    KnockoffConfig cfg;
    cfg.kind = KnockoffKind::sparse_gaussian;
    cfg.sparse_threshold = 0.0;
    cfg.master_seed = 3;
    KnockoffSet ks = generate_knockoffs(x, cfg);
    // threshold 0 keeps the full singular sample covariance: s ~ 0 and the
    // knockoffs are near copies, so moments must track closely
    CHECK(std::abs(ks.z.values.col(0).mean() - x.values.col(0).mean()) < 1.0);
    CHECK(maac(x, ks.z) < 0.05);
}

TEST_CASE("knockoff config validation") {
    KnockoffConfig cfg;
    cfg.kind = KnockoffKind::pc_permute;
    CHECK_THROWS(cfg.validate());  // missing num_pcs
    cfg.num_pcs = 5;
    CHECK_NOTHROW(cfg.validate());
    cfg.sparse_threshold = 0.1;
    CHECK_THROWS(cfg.validate());  // threshold not valid for pc
    KnockoffConfig g;
    g.kind = KnockoffKind::shrunk_gaussian;
    g.num_pcs = 3;
    CHECK_THROWS(g.validate());
}
