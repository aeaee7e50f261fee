#include "kobt/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kobt {

namespace {

inline double soft_threshold(double g, double alpha) {
    if (g > alpha) return g - alpha;
    if (g < -alpha) return g + alpha;
    return 0.0;
}

inline double leaf_objective(double g, double h, const BoostParams& p) {
    double denom = h + p.lambda;
    if (!(denom > 0.0)) return 0.0;
    double gs = soft_threshold(g, p.alpha);
    return gs * gs / denom;
}

// Midpoint of two consecutive distinct values, nudged so that `lo` always
// routes left under the x < threshold convention.
inline double midpoint(double lo, double hi) {
    double mid = 0.5 * (lo + hi);
    if (!(mid > lo)) mid = hi;
    return mid;
}

}  // namespace

std::string to_string(Booster b) { return b == Booster::gbrt ? "gbrt" : "dart"; }
std::string to_string(Objective o) {
    return o == Objective::squared_error ? "squared_error" : "logistic";
}

Booster booster_from_string(const std::string& s) {
    if (s == "gbrt") return Booster::gbrt;
    if (s == "dart") return Booster::dart;
    throw std::invalid_argument("unknown booster '" + s + "'");
}

Objective objective_from_string(const std::string& s) {
    if (s == "squared_error") return Objective::squared_error;
    if (s == "logistic") return Objective::logistic;
    throw std::invalid_argument("unknown objective '" + s + "'");
}

void BoostParams::validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("boost.eta must be in (0,1]");
    if (gamma < 0.0) throw std::invalid_argument("boost.gamma must be >= 0");
    if (lambda < 0.0) throw std::invalid_argument("boost.lambda must be >= 0");
    if (alpha < 0.0) throw std::invalid_argument("boost.alpha must be >= 0");
    if (max_depth < 1) throw std::invalid_argument("boost.max_depth must be >= 1");
    if (min_child_weight < 0.0)
        throw std::invalid_argument("boost.min_child_weight must be >= 0");
    if (!(subsample_rows > 0.0 && subsample_rows <= 1.0))
        throw std::invalid_argument("boost.subsample_rows must be in (0,1]");
    if (!(subsample_cols > 0.0 && subsample_cols <= 1.0))
        throw std::invalid_argument("boost.subsample_cols must be in (0,1]");
    if (!(dart_dropout >= 0.0 && dart_dropout < 1.0))
        throw std::invalid_argument("boost.dart_dropout must be in [0,1)");
    if (max_trees < 1) throw std::invalid_argument("boost.max_trees must be >= 1");
    if (early_stopping_rounds < 1)
        throw std::invalid_argument("boost.early_stopping_rounds must be >= 1");
}

double RegressionTree::predict_row(const Eigen::MatrixXd& x, Eigen::Index row) const {
    int node = 0;
    while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
        const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
        node = x(row, nd.feature) < nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].weight;
}

int RegressionTree::leaf_count() const {
    int k = 0;
    for (const auto& nd : nodes) k += nd.is_leaf() ? 1 : 0;
    return k;
}

double leaf_weight(double grad_sum, double hess_sum, const BoostParams& params) {
    double denom = hess_sum + params.lambda;
    if (!(denom > 0.0)) return 0.0;
    return -soft_threshold(grad_sum, params.alpha) / denom;
}

double split_gain_value(double g_total, double h_total, double g_left, double h_left,
                        const BoostParams& params) {
    double g_right = g_total - g_left;
    double h_right = h_total - h_left;
    return 0.5 * (leaf_objective(g_left, h_left, params) +
                  leaf_objective(g_right, h_right, params) -
                  leaf_objective(g_total, h_total, params)) -
           params.gamma;
}

std::optional<Split> find_best_split(const Eigen::MatrixXd& x, std::span<const int> rows,
                                     std::span<const double> grad, std::span<const double> hess,
                                     std::span<const int> features, const BoostParams& params) {
    if (rows.size() < 2) return std::nullopt;

    double g_total = 0.0, h_total = 0.0;
    for (int r : rows) {
        g_total += grad[static_cast<std::size_t>(r)];
        h_total += hess[static_cast<std::size_t>(r)];
    }

    Split best;
    best.gain = 0.0;
    bool found = false;

    std::vector<std::pair<double, int>> order;
    order.reserve(rows.size());
    for (int f : features) {
        order.clear();
        for (int r : rows) order.emplace_back(x(r, f), r);
        std::sort(order.begin(), order.end());

        double g_left = 0.0, h_left = 0.0;
        std::size_t taken = 0;
        double prev = 0.0;
        for (const auto& [value, r] : order) {
            if (taken > 0 && value > prev) {
                if (h_left >= params.min_child_weight &&
                    h_total - h_left >= params.min_child_weight) {
                    double gain = split_gain_value(g_total, h_total, g_left, h_left, params);
                    // strict >: the first maximum along (feature asc, threshold asc) wins
                    if (gain > best.gain) {
                        best.gain = gain;
                        best.feature = f;
                        best.threshold = midpoint(prev, value);
                        found = true;
                    }
                }
            }
            g_left += grad[static_cast<std::size_t>(r)];
            h_left += hess[static_cast<std::size_t>(r)];
            prev = value;
            ++taken;
        }
    }

    if (!found || !(best.gain > 0.0)) return std::nullopt;
    return best;
}

namespace {

struct GrowNode {
    int tree_index;
    double g_sum, h_sum;
    int begin, end;  // slice of the row workspace
};

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& x, std::span<const int> rows,
                        std::span<const double> grad, std::span<const double> hess,
                        const BoostParams& params, RngStream& rng) {
    if (rows.empty()) throw std::invalid_argument("fit_tree: need at least one row");
    params.validate();

    // Row subsample, then column subsample, in that order.
    std::vector<int> work_rows(rows.begin(), rows.end());
    if (params.subsample_rows < 1.0) {
        int keep = std::max<int>(1, static_cast<int>(std::floor(
                                        params.subsample_rows *
                                        static_cast<double>(work_rows.size()))));
        std::vector<int> picked =
            rng.sample_without_replacement(static_cast<int>(work_rows.size()), keep);
        std::sort(picked.begin(), picked.end());
        std::vector<int> sub;
        sub.reserve(picked.size());
        for (int i : picked) sub.push_back(work_rows[static_cast<std::size_t>(i)]);
        work_rows = std::move(sub);
    }

    const int p = static_cast<int>(x.cols());
    std::vector<int> features;
    if (params.subsample_cols < 1.0) {
        int keep = std::max<int>(
            1, static_cast<int>(std::floor(params.subsample_cols * static_cast<double>(p))));
        features = rng.sample_without_replacement(p, keep);
        std::sort(features.begin(), features.end());
    } else {
        features.resize(static_cast<std::size_t>(p));
        for (int f = 0; f < p; ++f) features[static_cast<std::size_t>(f)] = f;
    }

    // Presort each candidate feature once; ties resolved by row id so the
    // scan order is deterministic.
    std::vector<std::vector<int>> sorted(features.size());
    {
        std::vector<std::pair<double, int>> order;
        order.reserve(work_rows.size());
        for (std::size_t fi = 0; fi < features.size(); ++fi) {
            order.clear();
            for (int r : work_rows) order.emplace_back(x(r, features[fi]), r);
            std::sort(order.begin(), order.end());
            sorted[fi].resize(order.size());
            for (std::size_t i = 0; i < order.size(); ++i) sorted[fi][i] = order[i].second;
        }
    }

    RegressionTree tree;
    tree.nodes.reserve(2 * work_rows.size());

    const Eigen::Index n_all = x.rows();
    std::vector<int> slot_of_row(static_cast<std::size_t>(n_all), -1);
    std::vector<int> row_ws = work_rows;

    double g0 = 0.0, h0 = 0.0;
    for (int r : row_ws) {
        g0 += grad[static_cast<std::size_t>(r)];
        h0 += hess[static_cast<std::size_t>(r)];
    }
    tree.nodes.push_back(TreeNode{});
    tree.nodes[0].cover = h0;

    std::vector<GrowNode> active{
        GrowNode{0, g0, h0, 0, static_cast<int>(row_ws.size())}};

    int depth = 0;
    while (!active.empty() && depth < params.max_depth) {
        const std::size_t n_active = active.size();
        for (std::size_t s = 0; s < n_active; ++s)
            for (int i = active[s].begin; i < active[s].end; ++i)
                slot_of_row[static_cast<std::size_t>(row_ws[static_cast<std::size_t>(i)])] =
                    static_cast<int>(s);

        std::vector<Split> best(n_active);
        std::vector<double> scan_g(n_active), scan_h(n_active), scan_prev(n_active);
        std::vector<int> scan_count(n_active);

        for (std::size_t fi = 0; fi < features.size(); ++fi) {
            const int f = features[fi];
            std::fill(scan_g.begin(), scan_g.end(), 0.0);
            std::fill(scan_h.begin(), scan_h.end(), 0.0);
            std::fill(scan_count.begin(), scan_count.end(), 0);
            for (int r : sorted[fi]) {
                const int s = slot_of_row[static_cast<std::size_t>(r)];
                if (s < 0) continue;  // row sits in an already-finalized leaf
                const double value = x(r, f);
                GrowNode& nd = active[static_cast<std::size_t>(s)];
                auto su = static_cast<std::size_t>(s);
                if (scan_count[su] > 0 && value > scan_prev[su]) {
                    if (scan_h[su] >= params.min_child_weight &&
                        nd.h_sum - scan_h[su] >= params.min_child_weight) {
                        double gain =
                            split_gain_value(nd.g_sum, nd.h_sum, scan_g[su], scan_h[su], params);
                        if (gain > best[su].gain) {
                            best[su].gain = gain;
                            best[su].feature = f;
                            best[su].threshold = midpoint(scan_prev[su], value);
                        }
                    }
                }
                scan_g[su] += grad[static_cast<std::size_t>(r)];
                scan_h[su] += hess[static_cast<std::size_t>(r)];
                scan_prev[su] = value;
                ++scan_count[su];
            }
        }

        std::vector<GrowNode> next;
        for (std::size_t s = 0; s < n_active; ++s) {
            GrowNode& nd = active[s];
            TreeNode& tn = tree.nodes[static_cast<std::size_t>(nd.tree_index)];
            if (!(best[s].gain > 0.0)) {
                tn.weight = leaf_weight(nd.g_sum, nd.h_sum, params);
                for (int i = nd.begin; i < nd.end; ++i)
                    slot_of_row[static_cast<std::size_t>(row_ws[static_cast<std::size_t>(i)])] = -1;
                continue;
            }
            // In-place stable partition of the node's row slice.
            const int f = best[s].feature;
            const double thr = best[s].threshold;
            std::stable_partition(row_ws.begin() + nd.begin, row_ws.begin() + nd.end,
                                  [&](int r) { return x(r, f) < thr; });
            double g_left = 0.0, h_left = 0.0;
            int mid_idx = nd.begin;
            for (int i = nd.begin; i < nd.end; ++i) {
                int r = row_ws[static_cast<std::size_t>(i)];
                if (x(r, f) < thr) {
                    g_left += grad[static_cast<std::size_t>(r)];
                    h_left += hess[static_cast<std::size_t>(r)];
                    ++mid_idx;
                }
            }

            int left_idx = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(TreeNode{});
            int right_idx = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(TreeNode{});
            TreeNode& parent = tree.nodes[static_cast<std::size_t>(nd.tree_index)];
            parent.feature = f;
            parent.threshold = thr;
            parent.left = left_idx;
            parent.right = right_idx;
            parent.split_gain = best[s].gain;
            tree.nodes[static_cast<std::size_t>(left_idx)].cover = h_left;
            tree.nodes[static_cast<std::size_t>(right_idx)].cover = nd.h_sum - h_left;

            next.push_back(GrowNode{left_idx, g_left, h_left, nd.begin, mid_idx});
            next.push_back(
                GrowNode{right_idx, nd.g_sum - g_left, nd.h_sum - h_left, mid_idx, nd.end});
        }
        if (!next.empty()) ++depth;
        for (std::size_t s = 0; s < n_active; ++s) {
            // clear slots; children re-tag on the next level
            GrowNode& nd = active[s];
            for (int i = nd.begin; i < nd.end; ++i)
                slot_of_row[static_cast<std::size_t>(row_ws[static_cast<std::size_t>(i)])] = -1;
        }
        active = std::move(next);
    }

    // Depth budget exhausted: finalize what is left as leaves.
    for (const GrowNode& nd : active) {
        tree.nodes[static_cast<std::size_t>(nd.tree_index)].weight =
            leaf_weight(nd.g_sum, nd.h_sum, params);
    }
    tree.depth = depth;
    return tree;
}

}  // namespace kobt
