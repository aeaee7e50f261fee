#include "kobt/tree.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <vector>

using namespace kobt;

namespace {

// Brute-force split oracle: enumerate every feature and every midpoint of
// consecutive distinct sorted values, same tie-break (lowest feature, lowest
// threshold), entirely independent of the scan in find_best_split.
std::optional<Split> brute_force_split(const Eigen::MatrixXd& x, const std::vector<int>& rows,
                                       const std::vector<double>& grad,
                                       const std::vector<double>& hess,
                                       const BoostParams& params) {
    double g_total = 0.0, h_total = 0.0;
    for (int r : rows) {
        g_total += grad[static_cast<std::size_t>(r)];
        h_total += hess[static_cast<std::size_t>(r)];
    }
    auto leaf_obj = [&](double g, double h) {
        double denom = h + params.lambda;
        if (!(denom > 0.0)) return 0.0;
        double gs = g > params.alpha ? g - params.alpha : (g < -params.alpha ? g + params.alpha : 0.0);
        return gs * gs / denom;
    };

    std::optional<Split> best;
    for (int f = 0; f < x.cols(); ++f) {
        // Prefix sums over rows sorted by (value, row id): fixed summation
        // order, so exactly tied gains resolve identically in both
        // implementations (lowest feature, then lowest threshold).
        std::vector<std::pair<double, int>> order;
        for (int r : rows) order.emplace_back(x(r, f), r);
        std::sort(order.begin(), order.end());
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            gl += grad[static_cast<std::size_t>(order[i].second)];
            hl += hess[static_cast<std::size_t>(order[i].second)];
            if (!(order[i + 1].first > order[i].first)) continue;
            double mid = 0.5 * (order[i].first + order[i + 1].first);
            if (!(mid > order[i].first)) mid = order[i + 1].first;
            if (hl < params.min_child_weight || h_total - hl < params.min_child_weight) continue;
            double gain =
                0.5 * (leaf_obj(gl, hl) + leaf_obj(g_total - gl, h_total - hl) -
                       leaf_obj(g_total, h_total)) -
                params.gamma;
            if (!(gain > 0.0)) continue;
            if (!best || gain > best->gain) best = Split{f, mid, gain};
        }
    }
    return best;
}

struct RandomNode {
    Eigen::MatrixXd x;
    std::vector<int> rows;
    std::vector<double> grad, hess;
};

RandomNode random_node(RngStream& rng, int max_n = 50, int max_p = 8) {
    RandomNode node;
    int n = 2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_n - 1)));
    int p = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_p)));
    node.x.resize(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            // duplicate-heavy values exercise the distinct-midpoint logic
            node.x(i, j) = rng.next_double() < 0.3
                               ? static_cast<double>(rng.next_below(4))
                               : rng.next_normal();
        }
    node.rows.resize(static_cast<std::size_t>(n));
    node.grad.resize(static_cast<std::size_t>(n));
    node.hess.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        node.rows[static_cast<std::size_t>(i)] = i;
        node.grad[static_cast<std::size_t>(i)] = 2.0 * rng.next_normal();
        node.hess[static_cast<std::size_t>(i)] = rng.next_double() < 0.8 ? 1.0 : rng.next_double();
    }
    return node;
}

std::vector<int> all_features(const Eigen::MatrixXd& x) {
    std::vector<int> f(static_cast<std::size_t>(x.cols()));
    for (int j = 0; j < x.cols(); ++j) f[static_cast<std::size_t>(j)] = j;
    return f;
}

}  // namespace

TEST_CASE("perfectly separable node splits at the midpoint") {
    Eigen::MatrixXd x(4, 1);
    x << 1, 2, 3, 4;
    std::vector<double> y{0, 0, 10, 10};
    std::vector<double> grad(4), hess(4, 1.0);
    for (int i = 0; i < 4; ++i) grad[static_cast<std::size_t>(i)] = 0.0 - y[static_cast<std::size_t>(i)];
    std::vector<int> rows{0, 1, 2, 3};
    BoostParams params;
    params.lambda = 0.0;
    params.gamma = 0.0;
    params.alpha = 0.0;
    params.min_child_weight = 0.0;

    auto split = find_best_split(x, rows, grad, hess, all_features(x), params);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(split->threshold == doctest::Approx(2.5));
    // W_L = 0, W_R = 400/2, W_P = 400/4 -> gain = (0 + 200 - 100)/2
    CHECK(split->gain == doctest::Approx(50.0));

    params.gamma = 1e6;
    CHECK_FALSE(find_best_split(x, rows, grad, hess, all_features(x), params).has_value());
}

TEST_CASE("split oracle equivalence on random nodes") {
    RngStream rng(2025, 0);
    BoostParams params;
    params.min_child_weight = 0.0;
    for (int trial = 0; trial < 80; ++trial) {
        RandomNode node = random_node(rng);
        params.lambda = trial % 3 == 0 ? 0.0 : rng.next_double() * 2.0;
        params.alpha = trial % 4 == 0 ? rng.next_double() : 0.0;
        params.gamma = trial % 5 == 0 ? rng.next_double() * 0.5 : 0.0;
        params.min_child_weight = trial % 2 == 0 ? 0.0 : 1.0;

        auto fast = find_best_split(node.x, node.rows, node.grad, node.hess,
                                    all_features(node.x), params);
        auto slow = brute_force_split(node.x, node.rows, node.grad, node.hess, params);
        REQUIRE(fast.has_value() == slow.has_value());
        if (fast) {
            CHECK(fast->feature == slow->feature);
            CHECK(fast->threshold == slow->threshold);
            CHECK(fast->gain == doctest::Approx(slow->gain).epsilon(1e-10));
        }
    }
}

TEST_CASE("equal-gain ties go to the lowest feature index") {
    Eigen::MatrixXd x(4, 3);
    x.col(0) << 5, 5, 9, 9;   // same split quality as col 2
    x.col(1) << 1, 1, 1, 1;   // constant, unusable
    x.col(2) << 5, 5, 9, 9;
    std::vector<double> grad{-1, -1, 1, 1};
    std::vector<double> hess(4, 1.0);
    std::vector<int> rows{0, 1, 2, 3};
    BoostParams params;
    params.lambda = 0.0;
    params.min_child_weight = 0.0;
    auto split = find_best_split(x, rows, grad, hess, all_features(x), params);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
}

TEST_CASE("single-row or splitless nodes return nothing") {
    Eigen::MatrixXd x(3, 1);
    x << 2, 2, 2;
    std::vector<double> grad{1, -3, 2}, hess{1, 1, 1};
    std::vector<int> one{0};
    BoostParams params;
    CHECK_FALSE(find_best_split(x, one, grad, hess, all_features(x), params).has_value());
    std::vector<int> rows{0, 1, 2};
    CHECK_FALSE(find_best_split(x, rows, grad, hess, all_features(x), params).has_value());
}

TEST_CASE("leaf weights follow the penalized closed form") {
    // Residuals 1,2,3 against prediction 0 under squared loss: G=-6, H=3.
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 1, 1.0);  // no split possible
    std::vector<double> grad{-1, -2, -3}, hess{1, 1, 1};
    std::vector<int> rows{0, 1, 2};
    RngStream rng(1, 0);
    BoostParams params;
    params.lambda = 0.0;
    params.alpha = 0.0;

    RegressionTree t1 = fit_tree(x, rows, grad, hess, params, rng);
    REQUIRE(t1.nodes.size() == 1);
    CHECK(t1.nodes[0].weight == doctest::Approx(2.0));
    CHECK(t1.nodes[0].cover == doctest::Approx(3.0));

    params.lambda = 3.0;
    RegressionTree t2 = fit_tree(x, rows, grad, hess, params, rng);
    CHECK(t2.nodes[0].weight == doctest::Approx(1.0));

    params.lambda = 0.0;
    params.alpha = 6.0;
    RegressionTree t3 = fit_tree(x, rows, grad, hess, params, rng);
    CHECK(t3.nodes[0].weight == doctest::Approx(0.0));
}

TEST_CASE("fitted trees respect structure invariants") {
    RngStream data_rng(77, 0);
    const int n = 120, p = 6;
    Eigen::MatrixXd x(n, p);
    std::vector<double> grad(static_cast<std::size_t>(n)), hess(static_cast<std::size_t>(n), 1.0);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rows[static_cast<std::size_t>(i)] = i;
        for (int j = 0; j < p; ++j) x(i, j) = data_rng.next_normal();
        grad[static_cast<std::size_t>(i)] = data_rng.next_normal();
    }
    BoostParams params;
    params.max_depth = 4;
    params.lambda = 0.5;
    RngStream rng(78, 0);
    RegressionTree tree = fit_tree(x, rows, grad, hess, params, rng);

    CHECK(tree.depth <= params.max_depth);
    CHECK(tree.leaf_count() <= 1 << params.max_depth);
    CHECK(tree.nodes[0].cover == doctest::Approx(static_cast<double>(n)));

    // cover conservation and leaf-weight closed form, recomputed by routing
    std::map<int, std::pair<double, double>> leaf_stats;  // leaf node -> (G,H)
    for (int i = 0; i < n; ++i) {
        int node = 0;
        while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
            const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
            node = x(i, nd.feature) < nd.threshold ? nd.left : nd.right;
        }
        leaf_stats[node].first += grad[static_cast<std::size_t>(i)];
        leaf_stats[node].second += hess[static_cast<std::size_t>(i)];
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
        const TreeNode& nd = tree.nodes[k];
        if (nd.is_leaf()) {
            auto [g, h] = leaf_stats[static_cast<int>(k)];
            CHECK(nd.weight ==
                  doctest::Approx(leaf_weight(g, h, params)).epsilon(1e-10));
            CHECK(nd.cover == doctest::Approx(h).epsilon(1e-12));
        } else {
            CHECK(nd.cover == doctest::Approx(
                                  tree.nodes[static_cast<std::size_t>(nd.left)].cover +
                                  tree.nodes[static_cast<std::size_t>(nd.right)].cover));
            CHECK(nd.split_gain > 0.0);
        }
    }
}

TEST_CASE("row subsampling uses the requested fraction") {
    RngStream data_rng(79, 0);
    const int n = 100;
    Eigen::MatrixXd x(n, 2);
    std::vector<double> grad(static_cast<std::size_t>(n)), hess(static_cast<std::size_t>(n), 1.0);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rows[static_cast<std::size_t>(i)] = i;
        x(i, 0) = data_rng.next_normal();
        x(i, 1) = data_rng.next_normal();
        grad[static_cast<std::size_t>(i)] = data_rng.next_normal();
    }
    BoostParams params;
    params.subsample_rows = 0.5;
    RngStream rng(80, 0);
    RegressionTree tree = fit_tree(x, rows, grad, hess, params, rng);
    CHECK(tree.nodes[0].cover == doctest::Approx(50.0));
}

TEST_CASE("fit_tree is deterministic under fixed streams") {
    RngStream data_rng(81, 0);
    const int n = 60;
    Eigen::MatrixXd x(n, 5);
    std::vector<double> grad(static_cast<std::size_t>(n)), hess(static_cast<std::size_t>(n), 1.0);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rows[static_cast<std::size_t>(i)] = i;
        for (int j = 0; j < 5; ++j) x(i, j) = data_rng.next_normal();
        grad[static_cast<std::size_t>(i)] = data_rng.next_normal();
    }
    BoostParams params;
    params.subsample_rows = 0.7;
    params.subsample_cols = 0.6;
    RngStream r1(99, 4), r2(99, 4);
    RegressionTree a = fit_tree(x, rows, grad, hess, params, r1);
    RegressionTree b = fit_tree(x, rows, grad, hess, params, r2);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].feature == b.nodes[i].feature);
        CHECK(a.nodes[i].threshold == b.nodes[i].threshold);
        CHECK(a.nodes[i].weight == b.nodes[i].weight);
    }
}

TEST_CASE("boost params validate their ranges") {
    BoostParams p;
    CHECK_NOTHROW(p.validate());
    p.eta = 0.0;
    CHECK_THROWS(p.validate());
    p = BoostParams{};
    p.dart_dropout = 1.0;
    CHECK_THROWS(p.validate());
    p = BoostParams{};
    p.max_depth = 0;
    CHECK_THROWS(p.validate());
}
