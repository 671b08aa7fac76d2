#pragma once
// Regression trees with variance-reduction splits, bootstrapped forests,
// stagewise boosting, and split-gain importance. Models serialize to JSON
// with an explicit schema version.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "nudgekit/common.hpp"
#include "nudgekit/rng.hpp"

namespace nudgekit {

using FeatureMatrix = std::vector<std::vector<double>>;  // rows are observations

constexpr int kTreeSchemaVersion = 1;

struct TreeConfig {
    int max_depth = 6;
    int min_samples_leaf = 5;
    int min_samples_split = 10;
    int mtry = 0;  // features sampled per split; 0 means all
};

struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0; // x[feature] < threshold goes left
    double value = 0.0;     // leaf prediction (node mean)
    int left = -1;
    int right = -1;
    double gain = 0.0;      // SSE reduction achieved by this split
    int n = 0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;
    int n_features = 0;

    double predict(const std::vector<double>& x) const {
        if (nodes.empty()) throw ValidationError("tree: empty model");
        int id = 0;
        while (nodes[id].feature >= 0)
            id = x[nodes[id].feature] < nodes[id].threshold ? nodes[id].left : nodes[id].right;
        return nodes[id].value;
    }
};

namespace detail {

inline void check_matrix(const FeatureMatrix& X, const std::vector<double>& y) {
    if (X.empty() || X.size() != y.size())
        throw ValidationError("tree fit: X/y size mismatch or empty");
    std::size_t p = X.front().size();
    if (p == 0) throw ValidationError("tree fit: no features");
    for (const auto& row : X) {
        if (row.size() != p) throw ValidationError("tree fit: ragged feature matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw ValidationError("tree fit: non-finite feature");
    }
    for (double v : y)
        if (!std::isfinite(v)) throw ValidationError("tree fit: non-finite outcome");
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Best (feature, threshold) by SSE reduction. Features are scanned in
// ascending index order and thresholds in ascending value order with a
// strict improvement test, so ties resolve to the lowest feature index and
// then the lowest threshold.
inline SplitChoice best_split(const FeatureMatrix& X, const std::vector<double>& y,
                              const std::vector<int>& idx, const std::vector<int>& features,
                              int min_leaf) {
    SplitChoice best;
    const int m = static_cast<int>(idx.size());
    double sum = 0.0, sum2 = 0.0;
    for (int i : idx) {
        sum += y[i];
        sum2 += y[i] * y[i];
    }
    const double parent_sse = sum2 - sum * sum / m;

    std::vector<int> order(idx);
    for (int f : features) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (X[a][f] != X[b][f]) return X[a][f] < X[b][f];
            return a < b;
        });
        double left_sum = 0.0, left_sum2 = 0.0;
        for (int pos = 0; pos + 1 < m; ++pos) {
            int i = order[pos];
            left_sum += y[i];
            left_sum2 += y[i] * y[i];
            double xv = X[i][f], xnext = X[order[pos + 1]][f];
            if (xv == xnext) continue;
            int nl = pos + 1, nr = m - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            double right_sum = sum - left_sum, right_sum2 = sum2 - left_sum2;
            double sse = (left_sum2 - left_sum * left_sum / nl) +
                         (right_sum2 - right_sum * right_sum / nr);
            double gain = parent_sse - sse;
            if (gain > best.gain) {
                best.feature = f;
                best.threshold = 0.5 * (xv + xnext);
                best.gain = gain;
            }
        }
    }
    return best;
}

inline int grow_node(RegressionTree& tree, const FeatureMatrix& X, const std::vector<double>& y,
                     std::vector<int> idx, int depth, const TreeConfig& config, Rng* rng) {
    const int p = tree.n_features;
    TreeNode node;
    node.n = static_cast<int>(idx.size());
    double sum = 0.0;
    for (int i : idx) sum += y[i];
    node.value = sum / node.n;

    bool stop = depth >= config.max_depth || node.n < config.min_samples_split;
    SplitChoice split;
    if (!stop) {
        std::vector<int> features;
        if (config.mtry > 0 && config.mtry < p) {
            if (!rng) throw ValidationError("tree fit: mtry subsampling needs an rng");
            std::vector<int> all(p);
            for (int f = 0; f < p; ++f) all[f] = f;
            rng->shuffle(all);
            features.assign(all.begin(), all.begin() + config.mtry);
            std::sort(features.begin(), features.end());
        } else {
            features.resize(p);
            for (int f = 0; f < p; ++f) features[f] = f;
        }
        split = best_split(X, y, idx, features, config.min_samples_leaf);
        stop = split.feature < 0 || !(split.gain > 1e-12);
    }

    int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);
    if (stop) return id;

    std::vector<int> left, right;
    for (int i : idx)
        (X[i][split.feature] < split.threshold ? left : right).push_back(i);
    tree.nodes[id].feature = split.feature;
    tree.nodes[id].threshold = split.threshold;
    tree.nodes[id].gain = split.gain;
    int lid = grow_node(tree, X, y, std::move(left), depth + 1, config, rng);
    int rid = grow_node(tree, X, y, std::move(right), depth + 1, config, rng);
    tree.nodes[id].left = lid;
    tree.nodes[id].right = rid;
    return id;
}

}  // namespace detail

inline RegressionTree fit_tree(const FeatureMatrix& X, const std::vector<double>& y,
                               const TreeConfig& config = {}, Rng* rng = nullptr) {
    detail::check_matrix(X, y);
    RegressionTree tree;
    tree.n_features = static_cast<int>(X.front().size());
    std::vector<int> idx(X.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    detail::grow_node(tree, X, y, std::move(idx), 0, config, rng);
    return tree;
}

// ---------------------------------------------------------------------------
// Random forest

struct ForestConfig {
    int n_trees = 200;
    int max_depth = 10;
    int min_samples_leaf = 5;
    int min_samples_split = 10;
    int mtry = 0;  // 0 means round(sqrt(p))
};

struct Forest {
    std::vector<RegressionTree> trees;
    int n_features = 0;
    ForestConfig config;

    double predict(const std::vector<double>& x) const {
        if (trees.empty()) throw ValidationError("forest: empty model");
        double sum = 0.0;
        for (const auto& tree : trees) sum += tree.predict(x);
        return sum / static_cast<double>(trees.size());
    }
};

inline Forest fit_forest(const FeatureMatrix& X, const std::vector<double>& y,
                         const ForestConfig& config, std::uint64_t seed) {
    detail::check_matrix(X, y);
    if (config.n_trees <= 0) throw ValidationError("forest: n_trees must be positive");
    Forest forest;
    forest.config = config;
    forest.n_features = static_cast<int>(X.front().size());
    const int n = static_cast<int>(X.size());

    TreeConfig tc;
    tc.max_depth = config.max_depth;
    tc.min_samples_leaf = config.min_samples_leaf;
    tc.min_samples_split = config.min_samples_split;
    tc.mtry = config.mtry > 0
                  ? config.mtry
                  : std::max(1, static_cast<int>(std::lround(std::sqrt(forest.n_features))));

    for (int t = 0; t < config.n_trees; ++t) {
        Rng rng(derive_seed(seed, "tree", static_cast<std::uint64_t>(t)));
        FeatureMatrix xb;
        std::vector<double> yb;
        xb.reserve(n);
        yb.reserve(n);
        for (int i = 0; i < n; ++i) {
            std::size_t j = rng.below(static_cast<std::uint64_t>(n));
            xb.push_back(X[j]);
            yb.push_back(y[j]);
        }
        forest.trees.push_back(fit_tree(xb, yb, tc, &rng));
        forest.trees.back().n_features = forest.n_features;
    }
    return forest;
}

// ---------------------------------------------------------------------------
// Gradient boosting (squared error, stagewise residual fitting)

struct BoostConfig {
    int n_trees = 300;
    double learning_rate = 0.1;
    int max_depth = 3;
    int min_samples_leaf = 5;
    int min_samples_split = 10;
    double subsample = 1.0;  // row fraction per stage; 1.0 is deterministic
};

struct Boost {
    double f0 = 0.0;
    double learning_rate = 0.1;
    std::vector<RegressionTree> trees;
    int n_features = 0;

    double predict(const std::vector<double>& x) const {
        double f = f0;
        for (const auto& tree : trees) f += learning_rate * tree.predict(x);
        return f;
    }
};

inline Boost fit_boost(const FeatureMatrix& X, const std::vector<double>& y,
                       const BoostConfig& config, std::uint64_t seed) {
    detail::check_matrix(X, y);
    if (config.n_trees <= 0) throw ValidationError("boost: n_trees must be positive");
    if (!(config.learning_rate > 0.0))
        throw ValidationError("boost: learning rate must be positive");
    if (!(config.subsample > 0.0 && config.subsample <= 1.0))
        throw ValidationError("boost: subsample must be in (0, 1]");
    Boost boost;
    boost.learning_rate = config.learning_rate;
    boost.n_features = static_cast<int>(X.front().size());
    const int n = static_cast<int>(X.size());

    double sum = 0.0;
    for (double v : y) sum += v;
    boost.f0 = sum / n;
    std::vector<double> f(n, boost.f0);

    TreeConfig tc;
    tc.max_depth = config.max_depth;
    tc.min_samples_leaf = config.min_samples_leaf;
    tc.min_samples_split = config.min_samples_split;

    for (int t = 0; t < config.n_trees; ++t) {
        std::vector<double> resid(n);
        for (int i = 0; i < n; ++i) resid[i] = y[i] - f[i];
        RegressionTree tree;
        if (config.subsample < 1.0) {
            Rng rng(derive_seed(seed, "boost", static_cast<std::uint64_t>(t)));
            int m = std::max(2, static_cast<int>(std::lround(config.subsample * n)));
            std::vector<int> order(n);
            for (int i = 0; i < n; ++i) order[i] = i;
            rng.shuffle(order);
            FeatureMatrix xs;
            std::vector<double> rs;
            for (int i = 0; i < m; ++i) {
                xs.push_back(X[order[i]]);
                rs.push_back(resid[order[i]]);
            }
            tree = fit_tree(xs, rs, tc);
            tree.n_features = boost.n_features;
        } else {
            tree = fit_tree(X, resid, tc);
        }
        for (int i = 0; i < n; ++i) f[i] += config.learning_rate * tree.predict(X[i]);
        boost.trees.push_back(std::move(tree));
    }
    return boost;
}

// ---------------------------------------------------------------------------
// Gain importance

inline void accumulate_gain(const RegressionTree& tree, std::vector<double>& gain) {
    for (const auto& node : tree.nodes)
        if (node.feature >= 0) gain[node.feature] += node.gain;
}

inline std::vector<double> normalize_importance(std::vector<double> gain) {
    double total = 0.0;
    for (double g : gain) total += g;
    if (total > 0.0)
        for (double& g : gain) g /= total;
    return gain;
}

inline std::vector<double> gain_importance(const RegressionTree& tree) {
    std::vector<double> gain(tree.n_features, 0.0);
    accumulate_gain(tree, gain);
    return normalize_importance(std::move(gain));
}

inline std::vector<double> gain_importance(const Forest& forest) {
    std::vector<double> gain(forest.n_features, 0.0);
    for (const auto& tree : forest.trees) accumulate_gain(tree, gain);
    return normalize_importance(std::move(gain));
}

inline std::vector<double> gain_importance(const Boost& boost) {
    std::vector<double> gain(boost.n_features, 0.0);
    for (const auto& tree : boost.trees) accumulate_gain(tree, gain);
    return normalize_importance(std::move(gain));
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const RegressionTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes)
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"value", n.value},
                         {"left", n.left},
                         {"right", n.right},
                         {"gain", n.gain},
                         {"n", n.n}});
    return {{"version", kTreeSchemaVersion},
            {"kind", "tree"},
            {"n_features", tree.n_features},
            {"nodes", nodes}};
}

inline RegressionTree tree_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != kTreeSchemaVersion)
        throw ParseError("tree json: unsupported schema version");
    RegressionTree tree;
    tree.n_features = j.at("n_features").get<int>();
    for (const auto& nj : j.at("nodes")) {
        TreeNode n;
        n.feature = nj.at("feature").get<int>();
        n.threshold = nj.at("threshold").get<double>();
        n.value = nj.at("value").get<double>();
        n.left = nj.at("left").get<int>();
        n.right = nj.at("right").get<int>();
        n.gain = nj.at("gain").get<double>();
        n.n = nj.at("n").get<int>();
        tree.nodes.push_back(n);
    }
    return tree;
}

inline nlohmann::json to_json(const Forest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest.trees) trees.push_back(to_json(tree));
    return {{"version", kTreeSchemaVersion},
            {"kind", "forest"},
            {"n_features", forest.n_features},
            {"trees", trees}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != kTreeSchemaVersion)
        throw ParseError("forest json: unsupported schema version");
    if (j.at("kind").get<std::string>() != "forest")
        throw ParseError("forest json: kind mismatch");
    Forest forest;
    forest.n_features = j.at("n_features").get<int>();
    for (const auto& tj : j.at("trees")) forest.trees.push_back(tree_from_json(tj));
    return forest;
}

inline nlohmann::json to_json(const Boost& boost) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : boost.trees) trees.push_back(to_json(tree));
    return {{"version", kTreeSchemaVersion},
            {"kind", "boost"},
            {"n_features", boost.n_features},
            {"f0", boost.f0},
            {"learning_rate", boost.learning_rate},
            {"trees", trees}};
}

inline Boost boost_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != kTreeSchemaVersion)
        throw ParseError("boost json: unsupported schema version");
    if (j.at("kind").get<std::string>() != "boost")
        throw ParseError("boost json: kind mismatch");
    Boost boost;
    boost.n_features = j.at("n_features").get<int>();
    boost.f0 = j.at("f0").get<double>();
    boost.learning_rate = j.at("learning_rate").get<double>();
    for (const auto& tj : j.at("trees")) boost.trees.push_back(tree_from_json(tj));
    return boost;
}

}  // namespace nudgekit
