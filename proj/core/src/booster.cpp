#include "kobt/booster.hpp"

#include "kobt/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kobt {

namespace {

inline double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

double validation_metric(const Eigen::VectorXd& margins, const Eigen::VectorXd& y,
                         const std::vector<int>& rows, Objective objective) {
    double total = 0.0;
    for (int r : rows) {
        if (objective == Objective::squared_error) {
            double d = margins[r] - y[r];
            total += d * d;
        } else {
            double pred = margins[r] >= 0.0 ? 1.0 : 0.0;
            total += pred != y[r] ? 1.0 : 0.0;
        }
    }
    return total / static_cast<double>(rows.size());
}

}  // namespace

Eigen::VectorXd BoostedModel::predict_margin(const Eigen::MatrixXd& x, int num_trees) const {
    if (x.cols() != num_features)
        throw std::invalid_argument("predict: expected " + std::to_string(num_features) +
                                    " columns, got " + std::to_string(x.cols()));
    int use = num_trees < 0 ? best_iteration : num_trees;
    use = std::min<int>(use, static_cast<int>(trees.size()));
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base_score);
    for (int b = 0; b < use; ++b) {
        const double w = tree_weights[static_cast<std::size_t>(b)];
        const RegressionTree& tree = trees[static_cast<std::size_t>(b)];
        for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] += w * tree.predict_row(x, i);
    }
    return out;
}

Eigen::VectorXd BoostedModel::predict(const Eigen::MatrixXd& x, int num_trees) const {
    Eigen::VectorXd m = predict_margin(x, num_trees);
    if (params.objective == Objective::logistic)
        for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = sigmoid(m[i]);
    return m;
}

Eigen::VectorXd BoostedModel::predict(const DataMatrix& x, int num_trees) const {
    return predict(x.values, num_trees);
}

BoostedModel fit_boosted(const Dataset& dataset, const BoostParams& params, RngStream& rng,
                         const std::vector<int>* validation_rows) {
    params.validate();
    const Eigen::MatrixXd& x = dataset.x.values;
    const Eigen::VectorXd& y = dataset.y;
    const Eigen::Index n = x.rows();
    if (y.size() != n) throw std::invalid_argument("fit_boosted: response length mismatch");
    if (params.objective == Objective::logistic) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw std::invalid_argument(
                    "fit_boosted: logistic objective needs responses in {0,1}");
    }

    std::vector<char> is_validation(static_cast<std::size_t>(n), 0);
    std::vector<int> val_rows;
    if (validation_rows) {
        val_rows = *validation_rows;
        for (int r : val_rows) {
            if (r < 0 || r >= n) throw std::invalid_argument("fit_boosted: validation row out of range");
            is_validation[static_cast<std::size_t>(r)] = 1;
        }
    }
    std::vector<int> train_rows;
    train_rows.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
        if (!is_validation[static_cast<std::size_t>(r)]) train_rows.push_back(r);
    if (train_rows.empty()) throw std::invalid_argument("fit_boosted: no training rows");

    BoostedModel model;
    model.params = params;
    model.num_features = x.cols();

    double mean_y = 0.0;
    for (int r : train_rows) mean_y += y[r];
    mean_y /= static_cast<double>(train_rows.size());
    if (params.objective == Objective::logistic) {
        double pbar = std::clamp(mean_y, 1e-6, 1.0 - 1e-6);
        model.base_score = std::log(pbar / (1.0 - pbar));
    } else {
        model.base_score = mean_y;
    }

    Eigen::VectorXd margins = Eigen::VectorXd::Constant(n, model.base_score);
    std::vector<double> grad(static_cast<std::size_t>(n), 0.0);
    std::vector<double> hess(static_cast<std::size_t>(n), 0.0);

    const bool dart = params.booster == Booster::dart;
    // Per-tree raw predictions, kept only for DART so dropped-tree rescaling
    // can adjust the margins incrementally.
    std::vector<Eigen::VectorXd> tree_preds;

    double best_metric = std::numeric_limits<double>::infinity();
    int rounds_since_best = 0;
    model.best_iteration = 0;

    while (static_cast<int>(model.trees.size()) < params.max_trees) {
        std::vector<int> dropped;
        Eigen::VectorXd reduced;
        const Eigen::VectorXd* grad_margins = &margins;
        if (dart && params.dart_dropout > 0.0 && !model.trees.empty()) {
            for (std::size_t b = 0; b < model.trees.size(); ++b)
                if (rng.next_double() < params.dart_dropout) dropped.push_back(static_cast<int>(b));
            if (!dropped.empty()) {
                reduced = margins;
                for (int b : dropped)
                    reduced -= model.tree_weights[static_cast<std::size_t>(b)] *
                               tree_preds[static_cast<std::size_t>(b)];
                grad_margins = &reduced;
            }
        }

        for (int r : train_rows) {
            double m = (*grad_margins)[r];
            if (params.objective == Objective::squared_error) {
                grad[static_cast<std::size_t>(r)] = m - y[r];
                hess[static_cast<std::size_t>(r)] = 1.0;
            } else {
                double pr = sigmoid(m);
                grad[static_cast<std::size_t>(r)] = pr - y[r];
                hess[static_cast<std::size_t>(r)] = pr * (1.0 - pr);
            }
        }

        RegressionTree tree = fit_tree(x, train_rows, grad, hess, params, rng);

        Eigen::VectorXd pred(n);
        for (Eigen::Index i = 0; i < n; ++i) pred[i] = tree.predict_row(x, i);

        const int k = static_cast<int>(dropped.size());
        double new_weight = params.eta;
        if (dart && k > 0) {
            // Standard dropout normalization: the new tree joins at
            // eta/(k+1) and each dropped tree shrinks by k/(k+1).
            new_weight = params.eta / static_cast<double>(k + 1);
            const double rescale =
                static_cast<double>(k) / static_cast<double>(k + 1);
            for (int b : dropped) {
                double old_w = model.tree_weights[static_cast<std::size_t>(b)];
                double delta = old_w * rescale - old_w;
                model.tree_weights[static_cast<std::size_t>(b)] = old_w * rescale;
                margins += delta * tree_preds[static_cast<std::size_t>(b)];
            }
        }
        margins += new_weight * pred;
        model.trees.push_back(std::move(tree));
        model.tree_weights.push_back(new_weight);
        if (dart) tree_preds.push_back(std::move(pred));

        if (validation_rows && !val_rows.empty()) {
            double metric = validation_metric(margins, y, val_rows, params.objective);
            if (metric < best_metric - 1e-12) {
                best_metric = metric;
                model.best_iteration = static_cast<int>(model.trees.size());
                rounds_since_best = 0;
            } else {
                ++rounds_since_best;
                if (rounds_since_best >= params.early_stopping_rounds) break;
            }
        }
    }

    if (!validation_rows || val_rows.empty())
        model.best_iteration = static_cast<int>(model.trees.size());
    else if (model.best_iteration == 0)
        model.best_iteration = static_cast<int>(model.trees.size());
    return model;
}

CvResult cross_validate(const Dataset& dataset, const BoostParams& params, int k,
                        RngStream& rng) {
    if (k < 2) throw std::invalid_argument("cross_validate: need k >= 2");
    const Eigen::Index n = dataset.x.n();
    if (n < 2 * k) throw std::invalid_argument("cross_validate: need n >= 2k");

    std::vector<int> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
    rng.shuffle(idx);

    std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        std::size_t lo = static_cast<std::size_t>(n) * static_cast<std::size_t>(f) /
                         static_cast<std::size_t>(k);
        std::size_t hi = static_cast<std::size_t>(n) * static_cast<std::size_t>(f + 1) /
                         static_cast<std::size_t>(k);
        if (hi <= lo) throw std::invalid_argument("cross_validate: empty fold");
        folds[static_cast<std::size_t>(f)].assign(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  idx.begin() + static_cast<std::ptrdiff_t>(hi));
    }

    CvResult result;
    result.fold_scores.resize(static_cast<std::size_t>(k));
    std::vector<int> fold_best(static_cast<std::size_t>(k));
    parallel_for(static_cast<std::size_t>(k), [&](std::size_t f) {
        RngStream fold_rng = rng.derive(f);
        BoostedModel model = fit_boosted(dataset, params, fold_rng, &folds[f]);
        Eigen::VectorXd margins = model.predict_margin(dataset.x.values, model.best_iteration);
        result.fold_scores[f] =
            validation_metric(margins, dataset.y, folds[f], params.objective);
        fold_best[f] = model.best_iteration;
    });

    double total = 0.0, trees = 0.0;
    for (int f = 0; f < k; ++f) {
        total += result.fold_scores[static_cast<std::size_t>(f)];
        trees += fold_best[static_cast<std::size_t>(f)];
    }
    result.cvte = total / static_cast<double>(k);
    result.best_num_trees = static_cast<int>(std::lround(trees / static_cast<double>(k)));
    return result;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json params_to_json(const BoostParams& p) {
    return json{{"eta", p.eta},
                {"gamma", p.gamma},
                {"lambda", p.lambda},
                {"alpha", p.alpha},
                {"max_depth", p.max_depth},
                {"min_child_weight", p.min_child_weight},
                {"subsample_rows", p.subsample_rows},
                {"subsample_cols", p.subsample_cols},
                {"booster", to_string(p.booster)},
                {"dart_dropout", p.dart_dropout},
                {"max_trees", p.max_trees},
                {"early_stopping_rounds", p.early_stopping_rounds},
                {"objective", to_string(p.objective)}};
}

BoostParams params_from_json(const json& j) {
    BoostParams p;
    p.eta = j.at("eta").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.alpha = j.at("alpha").get<double>();
    p.max_depth = j.at("max_depth").get<int>();
    p.min_child_weight = j.at("min_child_weight").get<double>();
    p.subsample_rows = j.at("subsample_rows").get<double>();
    p.subsample_cols = j.at("subsample_cols").get<double>();
    p.booster = booster_from_string(j.at("booster").get<std::string>());
    p.dart_dropout = j.at("dart_dropout").get<double>();
    p.max_trees = j.at("max_trees").get<int>();
    p.early_stopping_rounds = j.at("early_stopping_rounds").get<int>();
    p.objective = objective_from_string(j.at("objective").get<std::string>());
    return p;
}

}  // namespace

std::string model_to_json(const BoostedModel& model) {
    json trees = json::array();
    for (const auto& tree : model.trees) {
        json nodes = json::array();
        for (const auto& nd : tree.nodes) {
            nodes.push_back(json{{"feature", nd.feature},
                                 {"threshold", nd.threshold},
                                 {"left", nd.left},
                                 {"right", nd.right},
                                 {"weight", nd.weight},
                                 {"gain", nd.split_gain},
                                 {"cover", nd.cover}});
        }
        trees.push_back(json{{"depth", tree.depth}, {"nodes", std::move(nodes)}});
    }
    json doc{{"params", params_to_json(model.params)},
             {"base_score", model.base_score},
             {"best_iteration", model.best_iteration},
             {"num_features", model.num_features},
             {"tree_weights", model.tree_weights},
             {"trees", std::move(trees)}};
    return doc.dump(2);
}

BoostedModel model_from_json(const std::string& text) {
    json doc = json::parse(text);
    BoostedModel model;
    model.params = params_from_json(doc.at("params"));
    model.base_score = doc.at("base_score").get<double>();
    model.best_iteration = doc.at("best_iteration").get<int>();
    model.num_features = doc.at("num_features").get<Eigen::Index>();
    model.tree_weights = doc.at("tree_weights").get<std::vector<double>>();
    for (const auto& jt : doc.at("trees")) {
        RegressionTree tree;
        tree.depth = jt.at("depth").get<int>();
        for (const auto& jn : jt.at("nodes")) {
            TreeNode nd;
            nd.feature = jn.at("feature").get<int>();
            nd.threshold = jn.at("threshold").get<double>();
            nd.left = jn.at("left").get<int>();
            nd.right = jn.at("right").get<int>();
            nd.weight = jn.at("weight").get<double>();
            nd.split_gain = jn.at("gain").get<double>();
            nd.cover = jn.at("cover").get<double>();
            tree.nodes.push_back(nd);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace kobt
