#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dabopt/errors.hpp"

namespace dabopt {

// Gradient-boosted regression trees with squared loss and L2-regularized
// leaf weights. Each tree is fitted to the running residual of the ensemble
// so far; the learning rate shrinks every tree's contribution uniformly.

using FeatureMatrix = std::vector<std::vector<double>>;

enum class BaseMode { MeanOfTargets, Zero };

struct GbrtHyperparams {
    int num_trees = 140;
    int max_height = 11;        // depth in edges; the root sits at depth 0
    double l2_lambda = 1.0;
    double learning_rate = 0.05;
    int min_samples_split = 2;

    void validate() const {
        if (num_trees < 0) throw ConfigError("num_trees must be >= 0");
        if (max_height < 0) throw ConfigError("max_height must be >= 0");
        if (l2_lambda < 0.0) throw ConfigError("l2_lambda must be >= 0");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0))
            throw ConfigError("learning_rate must be in (0, 1]");
        if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
    }

    // Default settings of the two stacked stages.
    static GbrtHyperparams landscape_defaults() { return {140, 11, 1.0, 0.05, 2}; }
    static GbrtHyperparams gap_defaults() { return {94, 9, 0.01, 0.1, 2}; }
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;  // leaf prediction, target units
    int left = -1;
    int right = -1;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // pre-order, root at index 0
    int depth = 0;                // edges to the deepest leaf

    double predict(std::span<const double> x) const {
        int i = 0;
        while (!nodes[i].is_leaf()) {
            const TreeNode& n = nodes[i];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[i].value;
    }

    bool is_zero_leaf() const {
        return nodes.size() == 1 && nodes[0].is_leaf() && nodes[0].value == 0.0;
    }
};

struct SplitCandidate {
    int feature_index = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

struct GbrtModel {
    int feature_arity = 0;
    double base_prediction = 0.0;
    double learning_rate = 1.0;
    std::vector<RegressionTree> trees;

    double predict(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != feature_arity)
            throw DataError("feature arity mismatch: expected " + std::to_string(feature_arity) +
                            ", got " + std::to_string(x.size()));
        double acc = base_prediction;
        for (const RegressionTree& t : trees) acc += learning_rate * t.predict(x);
        return acc;
    }
};

namespace detail {

// Sums in ascending value order so the result depends only on the multiset
// of addends, never on row order. This is what makes refitting after a row
// shuffle produce byte-identical models.
inline double canonical_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

inline double canonical_mean(std::span<const double> v) {
    if (v.empty()) throw DataError("mean of empty list");
    auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    if (*mn == *mx) return *mn;  // a constant list averages to that constant exactly
    return canonical_sum({v.begin(), v.end()}) / static_cast<double>(v.size());
}

}  // namespace detail

// Optimal L2-regularized leaf weight for squared loss: sum(r) / (n + lambda).
inline double leaf_value(std::span<const double> residuals, double l2_lambda) {
    if (residuals.empty()) throw DataError("empty leaf");
    double sum = detail::canonical_sum({residuals.begin(), residuals.end()});
    return sum / (static_cast<double>(residuals.size()) + l2_lambda);
}

namespace detail {

// Exhaustive split search over the rows listed in `rows`. Candidate
// thresholds are midpoints between consecutive distinct sorted feature
// values; the score of a subset is (sum r)^2 / (count + lambda) and the
// gain is score(left) + score(right) - score(parent). Ties prefer the lower
// feature index, then the smaller threshold.
inline std::optional<SplitCandidate> best_split_rows(const FeatureMatrix& features,
                                                     std::span<const double> residuals,
                                                     std::span<const int> rows,
                                                     double l2_lambda) {
    const std::size_t m = rows.size();
    if (m < 2) return std::nullopt;

    // Bitwise-constant residuals can never produce a positive gain; bail out
    // before floating-point noise can manufacture one.
    bool constant = true;
    for (std::size_t k = 1; k < m && constant; ++k)
        constant = residuals[static_cast<std::size_t>(rows[k])] ==
                   residuals[static_cast<std::size_t>(rows[0])];
    if (constant) return std::nullopt;

    std::vector<double> node_residuals(m);
    for (std::size_t k = 0; k < m; ++k)
        node_residuals[k] = residuals[static_cast<std::size_t>(rows[k])];
    const double parent_sum = canonical_sum(node_residuals);
    const double parent_score =
        parent_sum * parent_sum / (static_cast<double>(m) + l2_lambda);

    const int arity = static_cast<int>(features[static_cast<std::size_t>(rows[0])].size());
    std::optional<SplitCandidate> best;
    std::vector<int> order(rows.begin(), rows.end());

    for (int f = 0; f < arity; ++f) {
        // Sort by (value, residual): rows with identical keys are fully
        // interchangeable, so prefix sums are canonical under row shuffles.
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double va = features[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
            double vb = features[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
            if (va != vb) return va < vb;
            return residuals[static_cast<std::size_t>(a)] < residuals[static_cast<std::size_t>(b)];
        });

        double left_sum = 0.0;
        for (std::size_t k = 0; k + 1 < m; ++k) {
            left_sum += residuals[static_cast<std::size_t>(order[k])];
            double v = features[static_cast<std::size_t>(order[k])][static_cast<std::size_t>(f)];
            double vn = features[static_cast<std::size_t>(order[k + 1])][static_cast<std::size_t>(f)];
            if (v == vn) continue;  // not a boundary between distinct values
            double thr = v + (vn - v) / 2.0;
            if (!(thr < vn)) thr = v;  // keep `x <= thr` equivalent to `x <= v`
            double right_sum = parent_sum - left_sum;
            double nl = static_cast<double>(k + 1);
            double nr = static_cast<double>(m - (k + 1));
            double gain = left_sum * left_sum / (nl + l2_lambda) +
                          right_sum * right_sum / (nr + l2_lambda) - parent_score;
            if (gain > 0.0 && (!best || gain > best->gain))
                best = SplitCandidate{f, thr, gain};
        }
    }
    return best;
}

}  // namespace detail

// Split search over a whole sample matrix.
inline std::optional<SplitCandidate> best_split(const FeatureMatrix& features,
                                                std::span<const double> residuals,
                                                double l2_lambda) {
    if (features.size() != residuals.size())
        throw DataError("features/residuals length mismatch");
    std::vector<int> rows(features.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return detail::best_split_rows(features, residuals, rows, l2_lambda);
}

namespace detail {

struct TreeBuilder {
    const FeatureMatrix& features;
    std::span<const double> residuals;
    const GbrtHyperparams& hp;
    std::vector<TreeNode> nodes;
    int max_depth_seen = 0;

    int build(std::vector<int>& rows, int depth) {
        max_depth_seen = std::max(max_depth_seen, depth);
        std::optional<SplitCandidate> cand;
        if (depth < hp.max_height &&
            static_cast<int>(rows.size()) >= hp.min_samples_split)
            cand = best_split_rows(features, residuals, rows, hp.l2_lambda);

        int idx = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (!cand) {
            std::vector<double> leaf_residuals(rows.size());
            for (std::size_t k = 0; k < rows.size(); ++k)
                leaf_residuals[k] = residuals[static_cast<std::size_t>(rows[k])];
            nodes[static_cast<std::size_t>(idx)].value = leaf_value(leaf_residuals, hp.l2_lambda);
            return idx;
        }

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (int i : rows) {
            double v = features[static_cast<std::size_t>(i)]
                               [static_cast<std::size_t>(cand->feature_index)];
            (v <= cand->threshold ? left_rows : right_rows).push_back(i);
        }
        rows.clear();
        rows.shrink_to_fit();

        nodes[static_cast<std::size_t>(idx)].feature = cand->feature_index;
        nodes[static_cast<std::size_t>(idx)].threshold = cand->threshold;
        int l = build(left_rows, depth + 1);
        int r = build(right_rows, depth + 1);
        nodes[static_cast<std::size_t>(idx)].left = l;
        nodes[static_cast<std::size_t>(idx)].right = r;
        return idx;
    }
};

}  // namespace detail

// Greedy recursive construction: a node splits while its depth is below
// max_height, it holds at least min_samples_split rows, and a positive-gain
// split exists; otherwise it becomes a leaf.
inline RegressionTree fit_tree(const FeatureMatrix& features,
                               std::span<const double> residuals,
                               const GbrtHyperparams& hp) {
    hp.validate();
    if (features.empty()) throw DataError("cannot fit a tree on an empty sample set");
    if (features.size() != residuals.size())
        throw DataError("features/residuals length mismatch: " + std::to_string(features.size()) +
                        " rows vs " + std::to_string(residuals.size()) + " residuals");

    detail::TreeBuilder builder{features, residuals, hp, {}, 0};
    std::vector<int> rows(features.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    builder.build(rows, 0);

    RegressionTree tree;
    tree.nodes = std::move(builder.nodes);
    tree.depth = builder.max_depth_seen;
    return tree;
}

// Boosted fit. Residuals start at target - base_prediction and each fitted
// tree subtracts learning_rate times its output. Exactly num_trees trees
// are fitted unless a tree degenerates to a single zero-valued leaf, after
// which the remaining rounds would be no-ops and training halts.
inline GbrtModel fit_gbrt(const FeatureMatrix& features, std::span<const double> targets,
                          const GbrtHyperparams& hp, BaseMode base) {
    hp.validate();
    if (features.empty()) throw DataError("cannot fit on an empty training set");
    if (features.size() != targets.size())
        throw DataError("features/targets length mismatch");
    const std::size_t arity = features[0].size();
    if (arity == 0) throw DataError("feature arity must be >= 1");
    for (const auto& row : features)
        if (row.size() != arity) throw DataError("ragged feature matrix");

    GbrtModel model;
    model.feature_arity = static_cast<int>(arity);
    model.learning_rate = hp.learning_rate;
    model.base_prediction =
        base == BaseMode::MeanOfTargets ? detail::canonical_mean(targets) : 0.0;

    std::vector<double> residuals(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i)
        residuals[i] = targets[i] - model.base_prediction;

    model.trees.reserve(static_cast<std::size_t>(hp.num_trees));
    for (int l = 0; l < hp.num_trees; ++l) {
        RegressionTree tree = fit_tree(features, residuals, hp);
        bool stop = tree.is_zero_leaf();
        for (std::size_t i = 0; i < residuals.size(); ++i)
            residuals[i] -= hp.learning_rate * tree.predict(features[i]);
        model.trees.push_back(std::move(tree));
        if (stop) break;
    }
    return model;
}

inline double gbrt_predict(const GbrtModel& model, std::span<const double> point) {
    return model.predict(point);
}

// --- validation-driven tree count selection ------------------------------

struct ValidatedFit {
    GbrtModel model;
    double best_val_mse = 0.0;
    int best_num_trees = 0;
};

// Boosts up to hp.num_trees, tracking mean squared error on a held-out set
// after every round, and trims the ensemble to the count that minimised it.
// Training stops after `patience` rounds without improvement. The base-only
// model (zero trees) is a legal winner.
inline ValidatedFit fit_gbrt_early_stop(const FeatureMatrix& features,
                                        std::span<const double> targets,
                                        const FeatureMatrix& val_features,
                                        std::span<const double> val_targets,
                                        const GbrtHyperparams& hp, BaseMode base,
                                        int patience) {
    hp.validate();
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (features.empty()) throw DataError("cannot fit on an empty training set");
    if (features.size() != targets.size())
        throw DataError("features/targets length mismatch");
    if (val_features.empty()) throw DataError("empty validation set");
    if (val_features.size() != val_targets.size())
        throw DataError("validation features/targets length mismatch");

    GbrtModel model;
    model.feature_arity = static_cast<int>(features[0].size());
    model.learning_rate = hp.learning_rate;
    model.base_prediction =
        base == BaseMode::MeanOfTargets ? detail::canonical_mean(targets) : 0.0;

    std::vector<double> residuals(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i)
        residuals[i] = targets[i] - model.base_prediction;

    std::vector<double> val_pred(val_features.size(), model.base_prediction);
    auto mse = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < val_pred.size(); ++i) {
            double e = val_targets[i] - val_pred[i];
            s += e * e;
        }
        return s / static_cast<double>(val_pred.size());
    };

    double best = mse();
    int best_trees = 0;
    for (int l = 0; l < hp.num_trees; ++l) {
        RegressionTree tree = fit_tree(features, residuals, hp);
        bool degenerate = tree.is_zero_leaf();
        for (std::size_t i = 0; i < residuals.size(); ++i)
            residuals[i] -= hp.learning_rate * tree.predict(features[i]);
        for (std::size_t i = 0; i < val_pred.size(); ++i)
            val_pred[i] += hp.learning_rate * tree.predict(val_features[i]);
        model.trees.push_back(std::move(tree));
        double m = mse();
        if (m < best) {
            best = m;
            best_trees = l + 1;
        } else if (l + 1 - best_trees >= patience) {
            break;
        }
        if (degenerate) break;
    }
    model.trees.resize(static_cast<std::size_t>(best_trees));
    return {std::move(model), best, best_trees};
}

// --- serialization --------------------------------------------------------

namespace detail {

// 17 significant digits: enough to reproduce any IEEE double bit-exactly.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void append_tree_json(std::string& out, const RegressionTree& tree) {
    out += '[';
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const TreeNode& n = tree.nodes[i];
        if (i) out += ',';
        if (n.is_leaf()) {
            out += "{\"value\":" + format_double(n.value) + "}";
        } else {
            out += "{\"feature\":" + std::to_string(n.feature) +
                   ",\"threshold\":" + format_double(n.threshold) + "}";
        }
    }
    out += ']';
}

// Rebuilds parent/child links from a pre-order node array; internal nodes
// always have exactly two children, so the shape is unambiguous.
inline int parse_tree_nodes(const nlohmann::json& arr, std::size_t& cursor,
                            RegressionTree& tree, int feature_arity, int depth) {
    if (cursor >= arr.size()) throw DataError("truncated tree node array");
    const nlohmann::json& node = arr[cursor++];
    int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.depth = std::max(tree.depth, depth);
    if (node.contains("value")) {
        tree.nodes[static_cast<std::size_t>(idx)].value = node.at("value").get<double>();
        return idx;
    }
    int feature = node.at("feature").get<int>();
    if (feature < 0 || feature >= feature_arity)
        throw DataError("tree node feature index " + std::to_string(feature) +
                        " out of range for arity " + std::to_string(feature_arity));
    tree.nodes[static_cast<std::size_t>(idx)].feature = feature;
    tree.nodes[static_cast<std::size_t>(idx)].threshold = node.at("threshold").get<double>();
    int l = parse_tree_nodes(arr, cursor, tree, feature_arity, depth + 1);
    int r = parse_tree_nodes(arr, cursor, tree, feature_arity, depth + 1);
    tree.nodes[static_cast<std::size_t>(idx)].left = l;
    tree.nodes[static_cast<std::size_t>(idx)].right = r;
    return idx;
}

inline RegressionTree tree_from_json(const nlohmann::json& arr, int feature_arity) {
    if (!arr.is_array() || arr.empty()) throw DataError("tree must be a nonempty node array");
    RegressionTree tree;
    std::size_t cursor = 0;
    parse_tree_nodes(arr, cursor, tree, feature_arity, 0);
    if (cursor != arr.size()) throw DataError("trailing nodes in tree array");
    return tree;
}

}  // namespace detail

// Stable, hand-written JSON encoding (fixed key order, 17 significant
// digits) so identical models serialize to identical bytes.
inline std::string gbrt_to_json(const GbrtModel& model) {
    std::string out;
    out += "{\"feature_arity\":" + std::to_string(model.feature_arity);
    out += ",\"base_prediction\":" + detail::format_double(model.base_prediction);
    out += ",\"learning_rate\":" + detail::format_double(model.learning_rate);
    out += ",\"trees\":[";
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        if (t) out += ',';
        detail::append_tree_json(out, model.trees[t]);
    }
    out += "]}";
    return out;
}

inline GbrtModel gbrt_from_json_value(const nlohmann::json& j) {
    GbrtModel model;
    try {
        model.feature_arity = j.at("feature_arity").get<int>();
        model.base_prediction = j.at("base_prediction").get<double>();
        model.learning_rate = j.at("learning_rate").get<double>();
        for (const auto& tree : j.at("trees"))
            model.trees.push_back(detail::tree_from_json(tree, model.feature_arity));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
    if (model.feature_arity < 1) throw DataError("feature_arity must be >= 1");
    return model;
}

inline GbrtModel gbrt_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model is not valid JSON: ") + e.what());
    }
    return gbrt_from_json_value(j);
}

}  // namespace dabopt
