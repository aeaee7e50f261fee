#include "kobt/filter.hpp"
#include "kobt/report.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <set>

using namespace kobt;

namespace {

// Brute-force threshold oracle: scan every positive candidate directly.
double threshold_oracle(const std::vector<double>& t, double delta) {
    std::set<double> candidates;
    for (double v : t)
        if (std::abs(v) > 0.0) candidates.insert(std::abs(v));
    for (double c : candidates) {
        int below = 0, above = 0;
        for (double v : t) {
            if (v <= -c) ++below;
            if (v >= c) ++above;
        }
        if (static_cast<double>(below + 1) / std::max(above, 1) <= delta) return c;
    }
    return std::numeric_limits<double>::infinity();
}

Dataset toy_dataset(int n, int p, std::uint64_t seed, double signal = 2.0) {
    RngStream rng(seed, 0);
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) x(i, j) = rng.next_normal();
        y[i] = signal * x(i, 0) + rng.next_normal();
    }
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) names.push_back("f" + std::to_string(j));
    Dataset d;
    d.x = DataMatrix(std::move(x), names);
    d.y = std::move(y);
    return d;
}

}  // namespace

TEST_CASE("residualization centers against an intercept-only covariate") {
    Eigen::VectorXd y(5);
    y << 1, 2, 3, 4, 10;
    DataMatrix w(Eigen::MatrixXd::Ones(5, 1), {"const"});
    Eigen::VectorXd r = residualize_covariates(y, w);
    CHECK(std::abs(r.mean()) < 1e-12);
    CHECK(r[4] == doctest::Approx(10.0 - 4.0));
}

TEST_CASE("exact linear responses residualize to zero") {
    RngStream rng(1, 0);
    Eigen::MatrixXd wv(20, 2);
    for (int i = 0; i < 20; ++i) {
        wv(i, 0) = rng.next_normal();
        wv(i, 1) = rng.next_normal();
    }
    DataMatrix w(wv, {"w1", "w2"});
    Eigen::VectorXd y = 2.0 * wv.col(0) - 3.0 * wv.col(1) +
                        Eigen::VectorXd::Constant(20, 0.7);
    Eigen::VectorXd r = residualize_covariates(y, w);
    CHECK(r.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("residuals are orthogonal to every covariate column") {
    RngStream rng(2, 0);
    Eigen::MatrixXd wv(50, 3);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < 3; ++j) wv(i, j) = rng.next_normal();
        y[i] = rng.next_normal() * 4.0 + 1.0;
    }
    DataMatrix w(wv, {"a", "b", "c"});
    Eigen::VectorXd r = residualize_covariates(y, w);
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(wv.col(j).dot(r)) / (wv.col(j).norm() * (r.norm() + 1e-30)) < 1e-8);
    CHECK(std::abs(r.sum()) < 1e-8);
}

TEST_CASE("rank-deficient covariates are rejected") {
    Eigen::MatrixXd wv(10, 2);
    for (int i = 0; i < 10; ++i) {
        wv(i, 0) = i;
        wv(i, 1) = 2.0 * i;  // collinear
    }
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 9);
    CHECK_THROWS(residualize_covariates(y, DataMatrix(wv, {"a", "b"})));
}

TEST_CASE("fdp_hat counts signed exceedances") {
    std::vector<double> t{3, 2, 1, -1};
    CHECK(fdp_hat(t, 1.0) == doctest::Approx(1.0 / 3.0));
    CHECK(fdp_hat(t, 2.0) == doctest::Approx(0.0));
    std::vector<double> pos{5, 4, 0.5};
    CHECK(fdp_hat(pos, 0.25) == doctest::Approx(0.0));
    std::vector<double> neg{-2, -1};
    CHECK(fdp_hat(neg, 1.0) == doctest::Approx(1.0));
    CHECK_THROWS(fdp_hat(t, 0.0));
    CHECK_THROWS(fdp_hat(t, -1.0));
}

TEST_CASE("knockoff threshold matches the worked example") {
    std::vector<double> t{3, 2, 1, -1};
    CHECK(knockoff_threshold(t, 0.5) == doctest::Approx(2.0));
    std::vector<double> allneg{-3, -2, -1};
    CHECK(std::isinf(knockoff_threshold(allneg, 0.2)));
}

TEST_CASE("threshold equals the brute-force oracle on random vectors") {
    RngStream rng(3, 0);
    for (int trial = 0; trial < 200; ++trial) {
        int p = 2 + static_cast<int>(rng.next_below(60));
        std::vector<double> t(static_cast<std::size_t>(p));
        for (auto& v : t) {
            v = rng.next_normal();
            if (rng.next_double() < 0.1) v = 0.0;
            if (rng.next_double() < 0.2) v = std::round(v * 4.0) / 4.0;  // force ties
        }
        double delta = 0.05 + 0.9 * rng.next_double();
        double mine = knockoff_threshold(t, delta);
        double oracle = threshold_oracle(t, delta);
        if (std::isinf(oracle))
            CHECK(std::isinf(mine));
        else
            CHECK(mine == doctest::Approx(oracle));
        // consistency with fdp_hat on every candidate
        for (double v : t) {
            if (!(std::abs(v) > 0.0)) continue;
            CHECK_NOTHROW(fdp_hat(t, std::abs(v)));
        }
    }
}

TEST_CASE("threshold only decreases as delta grows") {
    std::vector<double> t{4, 3, 2.5, 1, 0.5, -0.7, -2};
    double prev = std::numeric_limits<double>::infinity();
    for (double delta = 0.05; delta < 1.0; delta += 0.05) {
        double tau = knockoff_threshold(t, delta);
        CHECK(tau <= prev + 1e-15);
        prev = tau;
    }
}

TEST_CASE("selection applies the threshold and records the fdp path") {
    KnockoffStats stats;
    stats.mean_abs_orig.resize(4);
    stats.mean_abs_orig << 3, 2, 1, 0;
    stats.mean_abs_knock.resize(4);
    stats.mean_abs_knock << 0, 0, 0, 1;
    stats.t = stats.mean_abs_orig - stats.mean_abs_knock;
    stats.replicates_used = 1;

    SelectionResult r = select(stats, 0.5);
    CHECK(r.tau == doctest::Approx(2.0));
    CHECK(r.selected == std::vector<int>{0, 1});
    REQUIRE(r.fdp_path.size() == 3);  // candidates {1, 2, 3}; |-1| dedups with 1
    // path is ascending in t
    for (std::size_t i = 1; i < r.fdp_path.size(); ++i)
        CHECK(r.fdp_path[i].first > r.fdp_path[i - 1].first);

    SelectionResult empty = select(stats, 0.01);
    CHECK(std::isinf(empty.tau));
    CHECK(empty.selected.empty());
}

TEST_CASE("selection is invariant under positive rescaling of T") {
    RngStream rng(4, 0);
    for (int trial = 0; trial < 50; ++trial) {
        int p = 5 + static_cast<int>(rng.next_below(40));
        KnockoffStats stats;
        stats.mean_abs_orig = Eigen::VectorXd::Zero(p);
        stats.mean_abs_knock = Eigen::VectorXd::Zero(p);
        for (int j = 0; j < p; ++j) stats.mean_abs_orig[j] = rng.next_normal();
        stats.t = stats.mean_abs_orig - stats.mean_abs_knock;
        double scale = 0.1 + 10.0 * rng.next_double();
        KnockoffStats scaled = stats;
        scaled.mean_abs_orig *= scale;
        scaled.t *= scale;
        SelectionResult a = select(stats, 0.3);
        SelectionResult b = select(scaled, 0.3);
        CHECK(a.selected == b.selected);
    }
}

TEST_CASE("swapping accumulated halves negates T exactly") {
    KnockoffStats stats;
    stats.mean_abs_orig.resize(3);
    stats.mean_abs_orig << 0.5, 1.25, 0.0;
    stats.mean_abs_knock.resize(3);
    stats.mean_abs_knock << 0.25, 2.0, 0.125;
    stats.t = stats.mean_abs_orig - stats.mean_abs_knock;

    KnockoffStats swapped;
    swapped.mean_abs_orig = stats.mean_abs_knock;
    swapped.mean_abs_knock = stats.mean_abs_orig;
    swapped.t = swapped.mean_abs_orig - swapped.mean_abs_knock;
    CHECK((swapped.t + stats.t).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("accumulate_statistics keeps the T identity and is deterministic") {
    Dataset d = toy_dataset(40, 5, 7);
    FilterConfig config;
    config.q = 3;
    config.delta = 0.2;
    config.statistic = Statistic::saabas;
    config.knockoff.kind = KnockoffKind::sparse_gaussian;
    config.knockoff.sparse_threshold = 0.1;
    config.boost.max_trees = 10;
    config.boost.max_depth = 3;
    config.master_seed = 99;

    KnockoffStats a = accumulate_statistics(d, config);
    KnockoffStats b = accumulate_statistics(d, config);
    CHECK(a.replicates_used == 3);
    CHECK((a.t - (a.mean_abs_orig - a.mean_abs_knock)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.t - b.t).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.mean_abs_orig - b.mean_abs_orig).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multi-statistic accumulation shares fits consistently") {
    Dataset d = toy_dataset(40, 4, 17);
    FilterConfig config;
    config.q = 2;
    config.statistic = Statistic::gain;
    config.knockoff.kind = KnockoffKind::shrunk_gaussian;
    config.boost.max_trees = 8;
    config.master_seed = 5;

    std::vector<Statistic> stats{Statistic::gain, Statistic::frequency, Statistic::shap};
    auto multi = accumulate_statistics_multi(d, config, stats);
    REQUIRE(multi.size() == 3);
    KnockoffStats gain_only = accumulate_statistics(d, config);
    CHECK((multi[0].t - gain_only.t).cwiseAbs().maxCoeff() == 0.0);
    for (const auto& ks : multi) {
        CHECK(ks.mean_abs_orig.minCoeff() >= 0.0);
        CHECK(ks.mean_abs_knock.minCoeff() >= 0.0);
    }
}

TEST_CASE("run_kobt smoke test returns coherent fields") {
    Dataset d = toy_dataset(30, 5, 27);
    FilterConfig config;
    config.q = 1;
    config.delta = 0.2;
    config.statistic = Statistic::frequency;
    config.knockoff.kind = KnockoffKind::sparse_gaussian;
    config.knockoff.sparse_threshold = 0.05;
    config.boost.max_trees = 5;
    config.master_seed = 11;

    SelectionResult r = run_kobt(d, config);
    CHECK(r.stats.replicates_used == 1);
    CHECK(r.feature_names.size() == 5);
    for (int j : r.selected) {
        CHECK(j >= 0);
        CHECK(j < 5);
        CHECK(r.stats.t[j] >= r.tau);
    }
    if (std::isinf(r.tau)) CHECK(r.selected.empty());
}

TEST_CASE("intercept covariate equals pre-centered response") {
    Dataset d = toy_dataset(36, 4, 37);
    d.y.array() += 100.0;  // big offset soaked up by the covariate

    Dataset with_w = d;
    with_w.w = DataMatrix(Eigen::MatrixXd::Ones(36, 1), {"const"});

    Dataset centered = d;
    centered.y.array() -= centered.y.mean();

    FilterConfig config;
    config.q = 2;
    config.statistic = Statistic::saabas;
    config.knockoff.kind = KnockoffKind::shrunk_gaussian;
    config.boost.max_trees = 6;
    config.master_seed = 21;

    SelectionResult a = run_kobt(with_w, config);
    SelectionResult b = run_kobt(centered, config);
    // the two responses agree only to floating roundoff, which can flip
    // near-tied splits, so the contract is on the selection itself
    CHECK(a.selected == b.selected);
    CHECK(std::isinf(a.tau) == std::isinf(b.tau));
}

TEST_CASE("classification runs skip residualization with a note") {
    RngStream rng(5, 0);
    Eigen::MatrixXd x(30, 3);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.next_normal();
        y[i] = x(i, 0) > 0 ? 1.0 : 0.0;
    }
    Dataset d;
    d.x = DataMatrix(x, {"a", "b", "c"});
    d.y = y;
    d.task = Task::binary_classification;
    d.w = DataMatrix(Eigen::MatrixXd::Random(30, 1).cwiseAbs(), {"w"});

    FilterConfig config;
    config.q = 1;
    config.statistic = Statistic::frequency;
    config.knockoff.kind = KnockoffKind::shrunk_gaussian;
    config.boost.max_trees = 4;
    config.boost.objective = Objective::logistic;
    SelectionResult r = run_kobt(d, config);
    CHECK(r.notes.find("covariates ignored") != std::string::npos);
}

TEST_CASE("filter config validation reports bad fields") {
    FilterConfig config;
    config.q = 0;
    CHECK_THROWS(config.validate());
    config = FilterConfig{};
    config.delta = 1.5;
    try {
        config.validate();
        FAIL("expected throw");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("delta") != std::string::npos);
    }
}

TEST_CASE("selection json round-trips exactly") {
    KnockoffStats stats;
    stats.mean_abs_orig.resize(3);
    stats.mean_abs_orig << 0.5, 0.25, 1.0 / 3.0;
    stats.mean_abs_knock.resize(3);
    stats.mean_abs_knock << 0.125, 0.5, 0.0;
    stats.t = stats.mean_abs_orig - stats.mean_abs_knock;
    stats.replicates_used = 7;
    SelectionResult r = select(stats, 0.6);
    r.feature_names = {"g1", "g2", "g3"};
    r.config_hash = "abc123";
    r.master_seed = 42;
    r.notes = "";

    SelectionResult back = selection_from_json(selection_to_json(r));
    CHECK(back.tau == r.tau);
    CHECK(back.selected == r.selected);
    CHECK(back.feature_names == r.feature_names);
    CHECK((back.stats.t - r.stats.t).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.master_seed == 42);
    REQUIRE(back.fdp_path.size() == r.fdp_path.size());
    for (std::size_t i = 0; i < r.fdp_path.size(); ++i) {
        CHECK(back.fdp_path[i].first == r.fdp_path[i].first);
        CHECK(back.fdp_path[i].second == r.fdp_path[i].second);
    }

    // infinite tau serializes as the string "inf"
    SelectionResult empty = select(stats, 0.01);
    std::string text = selection_to_json(empty);
    CHECK(text.find("\"inf\"") != std::string::npos);
    CHECK(std::isinf(selection_from_json(text).tau));
}
