#include "kobt/importance.hpp"

#include "kobt/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace kobt {

std::string to_string(ImportanceKind k) {
    switch (k) {
        case ImportanceKind::gain: return "gain";
        case ImportanceKind::cover: return "cover";
        case ImportanceKind::frequency: return "frequency";
        case ImportanceKind::shap_mean_abs: return "shap";
        case ImportanceKind::saabas_mean_abs: return "saabas";
    }
    return "?";
}

ImportanceVector structural_importance(const BoostedModel& model, ImportanceKind kind) {
    if (model.trees.empty())
        throw std::invalid_argument("structural_importance: model has no trees");
    if (kind != ImportanceKind::gain && kind != ImportanceKind::cover &&
        kind != ImportanceKind::frequency)
        throw std::invalid_argument("structural_importance: kind must be gain/cover/frequency");

    ImportanceVector out;
    out.kind = kind;
    out.values = Eigen::VectorXd::Zero(model.num_features);
    for (const auto& tree : model.trees) {
        for (const auto& nd : tree.nodes) {
            if (nd.is_leaf()) continue;
            switch (kind) {
                case ImportanceKind::gain: out.values[nd.feature] += nd.split_gain; break;
                case ImportanceKind::cover: out.values[nd.feature] += nd.cover; break;
                default: out.values[nd.feature] += 1.0; break;
            }
        }
    }
    return out;
}

namespace {

// Cover-weighted expectation of every subtree, indexed by node.
std::vector<double> node_expectations(const RegressionTree& tree) {
    std::vector<double> e(tree.nodes.size(), 0.0);
    // Children always come after their parent in the node array.
    for (std::size_t i = tree.nodes.size(); i-- > 0;) {
        const TreeNode& nd = tree.nodes[i];
        if (nd.is_leaf()) {
            e[i] = nd.weight;
        } else {
            double cl = tree.nodes[static_cast<std::size_t>(nd.left)].cover;
            double cr = tree.nodes[static_cast<std::size_t>(nd.right)].cover;
            double total = cl + cr;
            e[i] = total > 0.0
                       ? (cl * e[static_cast<std::size_t>(nd.left)] +
                          cr * e[static_cast<std::size_t>(nd.right)]) / total
                       : 0.5 * (e[static_cast<std::size_t>(nd.left)] +
                                e[static_cast<std::size_t>(nd.right)]);
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// Path-dependent SHAP recursion. The path records, per feature met so far,
// the fraction of "zero" (feature unknown, cover-weighted) and "one"
// (feature known, routed) flow, together with the permutation-counting
// weights that make the final unwind produce exact Shapley weights.
// ---------------------------------------------------------------------------

struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double pweight = 0.0;
};

void extend_path(PathElement* path, int unique_depth, double zero_fraction,
                 double one_fraction, int feature) {
    path[unique_depth] =
        PathElement{feature, zero_fraction, one_fraction, unique_depth == 0 ? 1.0 : 0.0};
    const double denom = static_cast<double>(unique_depth + 1);
    for (int i = unique_depth - 1; i >= 0; --i) {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / denom;
        path[i].pweight = zero_fraction * path[i].pweight * (unique_depth - i) / denom;
    }
}

void unwind_path(PathElement* path, int unique_depth, int index) {
    const double one_fraction = path[index].one_fraction;
    const double zero_fraction = path[index].zero_fraction;
    double next_one = path[unique_depth].pweight;
    const double denom = static_cast<double>(unique_depth + 1);
    for (int i = unique_depth - 1; i >= 0; --i) {
        if (one_fraction != 0.0) {
            double tmp = path[i].pweight;
            path[i].pweight = next_one * denom / ((i + 1) * one_fraction);
            next_one = tmp - path[i].pweight * zero_fraction * (unique_depth - i) / denom;
        } else {
            path[i].pweight = path[i].pweight * denom / (zero_fraction * (unique_depth - i));
        }
    }
    for (int i = index; i < unique_depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

double unwound_path_sum(const PathElement* path, int unique_depth, int index) {
    const double one_fraction = path[index].one_fraction;
    const double zero_fraction = path[index].zero_fraction;
    double next_one = path[unique_depth].pweight;
    double total = 0.0;
    const double denom = static_cast<double>(unique_depth + 1);
    if (one_fraction != 0.0) {
        for (int i = unique_depth - 1; i >= 0; --i) {
            double tmp = next_one * denom / ((i + 1) * one_fraction);
            total += tmp;
            next_one = path[i].pweight - tmp * zero_fraction * (unique_depth - i) / denom;
        }
    } else {
        for (int i = unique_depth - 1; i >= 0; --i)
            total += path[i].pweight * denom / (zero_fraction * (unique_depth - i));
    }
    return total;
}

struct ShapWorkspace {
    const RegressionTree* tree = nullptr;
    const Eigen::MatrixXd* x = nullptr;
    Eigen::Index row = 0;
    double scale = 1.0;
    double* phi = nullptr;
    std::vector<PathElement> buffer;
};

void shap_recurse(ShapWorkspace& ws, int node_index, int unique_depth,
                  PathElement* parent_path, double parent_zero_fraction,
                  double parent_one_fraction, int parent_feature) {
    PathElement* path = parent_path + unique_depth + 1;
    std::copy(parent_path, parent_path + unique_depth + 1, path);
    extend_path(path, unique_depth, parent_zero_fraction, parent_one_fraction, parent_feature);

    const TreeNode& nd = ws.tree->nodes[static_cast<std::size_t>(node_index)];
    if (nd.is_leaf()) {
        for (int i = 1; i <= unique_depth; ++i) {
            double w = unwound_path_sum(path, unique_depth, i);
            ws.phi[path[i].feature] +=
                ws.scale * w * (path[i].one_fraction - path[i].zero_fraction) * nd.weight;
        }
        return;
    }

    const double value = (*ws.x)(ws.row, nd.feature);
    const int hot = value < nd.threshold ? nd.left : nd.right;
    const int cold = value < nd.threshold ? nd.right : nd.left;
    const double cover = nd.cover;
    const double hot_zero =
        cover > 0.0 ? ws.tree->nodes[static_cast<std::size_t>(hot)].cover / cover : 0.0;
    const double cold_zero =
        cover > 0.0 ? ws.tree->nodes[static_cast<std::size_t>(cold)].cover / cover : 0.0;

    double incoming_zero = 1.0, incoming_one = 1.0;
    int found = -1;
    for (int i = 0; i <= unique_depth; ++i) {
        if (path[i].feature == nd.feature) {
            found = i;
            break;
        }
    }
    if (found >= 0) {
        incoming_zero = path[found].zero_fraction;
        incoming_one = path[found].one_fraction;
        unwind_path(path, unique_depth, found);
        --unique_depth;
    }

    shap_recurse(ws, hot, unique_depth + 1, path, hot_zero * incoming_zero, incoming_one,
                 nd.feature);
    shap_recurse(ws, cold, unique_depth + 1, path, cold_zero * incoming_zero, 0.0, nd.feature);
}

void tree_shap_row(const RegressionTree& tree, double scale, const Eigen::MatrixXd& x,
                   Eigen::Index row, double* phi) {
    ShapWorkspace ws;
    ws.tree = &tree;
    ws.x = &x;
    ws.row = row;
    ws.scale = scale;
    ws.phi = phi;
    const int d = tree.depth + 2;
    ws.buffer.assign(static_cast<std::size_t>((d + 1) * (d + 2) / 2 + d + 1), PathElement{});
    shap_recurse(ws, 0, 0, ws.buffer.data(), 1.0, 1.0, -1);
}

void check_columns(const BoostedModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.num_features)
        throw std::invalid_argument("attribution: expected " +
                                    std::to_string(model.num_features) + " columns, got " +
                                    std::to_string(x.cols()));
}

}  // namespace

AttributionMatrix saabas_values(const BoostedModel& model, const Eigen::MatrixXd& x) {
    check_columns(model, x);
    const Eigen::Index n = x.rows();
    AttributionMatrix out;
    out.kind = AttributionKind::saabas;
    out.values = Eigen::MatrixXd::Zero(n, model.num_features);
    out.base_value = model.base_score;

    const int use = std::min<int>(model.best_iteration, static_cast<int>(model.trees.size()));
    for (int b = 0; b < use; ++b) {
        const RegressionTree& tree = model.trees[static_cast<std::size_t>(b)];
        const double w = model.tree_weights[static_cast<std::size_t>(b)];
        std::vector<double> expect = node_expectations(tree);
        out.base_value += w * expect[0];
        for (Eigen::Index i = 0; i < n; ++i) {
            int node = 0;
            while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
                const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
                int child = x(i, nd.feature) < nd.threshold ? nd.left : nd.right;
                out.values(i, nd.feature) +=
                    w * (expect[static_cast<std::size_t>(child)] -
                         expect[static_cast<std::size_t>(node)]);
                node = child;
            }
        }
    }
    return out;
}

AttributionMatrix saabas_values(const BoostedModel& model, const DataMatrix& x) {
    return saabas_values(model, x.values);
}

AttributionMatrix tree_shap_values(const BoostedModel& model, const Eigen::MatrixXd& x) {
    check_columns(model, x);
    const Eigen::Index n = x.rows();
    AttributionMatrix out;
    out.kind = AttributionKind::shap;
    out.values = Eigen::MatrixXd::Zero(n, model.num_features);
    out.base_value = model.base_score;

    const int use = std::min<int>(model.best_iteration, static_cast<int>(model.trees.size()));
    std::vector<std::vector<double>> expectations;
    for (int b = 0; b < use; ++b) {
        expectations.push_back(node_expectations(model.trees[static_cast<std::size_t>(b)]));
        out.base_value += model.tree_weights[static_cast<std::size_t>(b)] * expectations.back()[0];
    }

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        auto row = static_cast<Eigen::Index>(i);
        std::vector<double> phi(static_cast<std::size_t>(model.num_features), 0.0);
        for (int b = 0; b < use; ++b) {
            tree_shap_row(model.trees[static_cast<std::size_t>(b)],
                          model.tree_weights[static_cast<std::size_t>(b)], x, row, phi.data());
        }
        for (Eigen::Index j = 0; j < model.num_features; ++j)
            out.values(row, j) = phi[static_cast<std::size_t>(j)];
    });
    return out;
}

AttributionMatrix tree_shap_values(const BoostedModel& model, const DataMatrix& x) {
    return tree_shap_values(model, x.values);
}

double tree_expectation_given(const RegressionTree& tree, const Eigen::VectorXd& x_row,
                              std::uint64_t subset_mask) {
    // Iterative weighted descent over the frontier.
    double total = 0.0;
    std::vector<std::pair<int, double>> frontier{{0, 1.0}};
    while (!frontier.empty()) {
        auto [node, weight] = frontier.back();
        frontier.pop_back();
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
        if (nd.is_leaf()) {
            total += weight * nd.weight;
            continue;
        }
        if (subset_mask >> nd.feature & 1ULL) {
            int child = x_row[nd.feature] < nd.threshold ? nd.left : nd.right;
            frontier.emplace_back(child, weight);
        } else {
            double cl = tree.nodes[static_cast<std::size_t>(nd.left)].cover;
            double cr = tree.nodes[static_cast<std::size_t>(nd.right)].cover;
            double denom = cl + cr;
            double wl = denom > 0.0 ? cl / denom : 0.5;
            frontier.emplace_back(nd.left, weight * wl);
            frontier.emplace_back(nd.right, weight * (1.0 - wl));
        }
    }
    return total;
}

Eigen::VectorXd exact_shapley_oracle(const BoostedModel& model, const Eigen::VectorXd& x_row) {
    const int p = static_cast<int>(model.num_features);
    if (p > 15) throw std::invalid_argument("exact_shapley_oracle: p too large (max 15)");
    if (x_row.size() != p) throw std::invalid_argument("exact_shapley_oracle: row length != p");

    const int use = std::min<int>(model.best_iteration, static_cast<int>(model.trees.size()));
    const std::uint64_t full = 1ULL << p;
    std::vector<double> value(full, 0.0);
    for (std::uint64_t mask = 0; mask < full; ++mask) {
        double v = model.base_score;
        for (int b = 0; b < use; ++b)
            v += model.tree_weights[static_cast<std::size_t>(b)] *
                 tree_expectation_given(model.trees[static_cast<std::size_t>(b)], x_row, mask);
        value[mask] = v;
    }

    std::vector<double> factorial(static_cast<std::size_t>(p) + 1, 1.0);
    for (int i = 1; i <= p; ++i)
        factorial[static_cast<std::size_t>(i)] = factorial[static_cast<std::size_t>(i - 1)] * i;

    Eigen::VectorXd phi = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) {
        for (std::uint64_t mask = 0; mask < full; ++mask) {
            if (mask >> j & 1ULL) continue;
            int s = std::popcount(mask);
            double w = factorial[static_cast<std::size_t>(s)] *
                       factorial[static_cast<std::size_t>(p - s - 1)] /
                       factorial[static_cast<std::size_t>(p)];
            phi[j] += w * (value[mask | (1ULL << j)] - value[mask]);
        }
    }
    return phi;
}

ImportanceVector mean_abs_aggregate(const AttributionMatrix& attr) {
    ImportanceVector out;
    out.kind = attr.kind == AttributionKind::shap ? ImportanceKind::shap_mean_abs
                                                  : ImportanceKind::saabas_mean_abs;
    if (attr.values.rows() == 0) {
        out.values = Eigen::VectorXd::Zero(attr.values.cols());
        return out;
    }
    out.values = attr.values.cwiseAbs().colwise().mean();
    return out;
}

}  // namespace kobt
