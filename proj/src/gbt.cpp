#include "irgrid/gbt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace irgrid {

void GbtConfig::validate() const {
    if (n_trees < 1) throw ValidationError("gbt: n_trees must be >= 1");
    if (max_depth < 1) throw ValidationError("gbt: max_depth must be >= 1");
    if (learning_rate <= 0) throw ValidationError("gbt: learning_rate must be positive");
    if (min_samples_leaf < 1) throw ValidationError("gbt: min_samples_leaf must be >= 1");
}

namespace {

struct SplitResult {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

SplitResult best_split(const Matrix& X, const Vector& r, const std::vector<int>& rows,
                       int min_leaf) {
    SplitResult best;
    const int n = static_cast<int>(rows.size());
    if (n < 2 * min_leaf) return best;

    double total_sum = 0.0, total_sq = 0.0;
    for (int i : rows) {
        total_sum += r(i);
        total_sq += r(i) * r(i);
    }
    const double parent_sse = total_sq - total_sum * total_sum / n;

    std::vector<int> order(rows);
    for (int f = 0; f < X.cols(); ++f) {
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return X(a, f) < X(b, f); });
        double lsum = 0.0, lsq = 0.0;
        for (int k = 0; k < n - 1; ++k) {
            int i = order[k];
            lsum += r(i);
            lsq += r(i) * r(i);
            int nl = k + 1, nr = n - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            if (X(order[k], f) == X(order[k + 1], f)) continue;  // no separating threshold
            double rsum = total_sum - lsum, rsq = total_sq - lsq;
            double sse = (lsq - lsum * lsum / nl) + (rsq - rsum * rsum / nr);
            double gain = parent_sse - sse;
            if (gain > best.gain + 1e-15) {
                best.gain = gain;
                best.feature = f;
                best.threshold = 0.5 * (X(order[k], f) + X(order[k + 1], f));
            }
        }
    }
    return best;
}

int grow(std::vector<TreeNode>& tree, const Matrix& X, const Vector& r,
         const std::vector<int>& rows, int depth, const GbtConfig& cfg) {
    int idx = static_cast<int>(tree.size());
    tree.emplace_back();

    double mean = 0.0;
    for (int i : rows) mean += r(i);
    mean /= static_cast<double>(rows.size());
    tree[idx].value = mean;

    if (depth >= cfg.max_depth) return idx;
    SplitResult s = best_split(X, r, rows, cfg.min_samples_leaf);
    if (s.feature < 0 || s.gain <= 0.0) return idx;

    std::vector<int> lrows, rrows;
    for (int i : rows) (X(i, s.feature) <= s.threshold ? lrows : rrows).push_back(i);
    if (lrows.empty() || rrows.empty()) return idx;

    tree[idx].feature = s.feature;
    tree[idx].threshold = s.threshold;
    int l = grow(tree, X, r, lrows, depth + 1, cfg);
    int rr = grow(tree, X, r, rrows, depth + 1, cfg);
    tree[idx].left = l;
    tree[idx].right = rr;
    return idx;
}

}  // namespace

double tree_predict_row(const std::vector<TreeNode>& tree, const Matrix& X, int row) {
    int n = 0;
    while (!tree[n].is_leaf()) n = X(row, tree[n].feature) <= tree[n].threshold
                                        ? tree[n].left
                                        : tree[n].right;
    return tree[n].value;
}

GbtModel gbt_train(const Matrix& X, const Vector& y_mv, const SplitIndices& split,
                   const GbtConfig& config) {
    config.validate();
    if (split.train.size() < 2)
        throw ValidationError("gbt_train: need at least 2 training rows");
    if (X.rows() != y_mv.size()) throw ValidationError("gbt_train: X/y length mismatch");

    auto t0 = std::chrono::steady_clock::now();

    GbtModel model;
    model.config = config;
    model.n_features = static_cast<int>(X.cols());
    double base = 0.0;
    for (int i : split.train) base += y_mv(i);
    model.base_score = base / static_cast<double>(split.train.size());

    Vector pred = Vector::Constant(X.rows(), model.base_score);

    auto mae = [&](const IndexVec& idx) {
        if (idx.empty()) return 0.0;
        double s = 0.0;
        for (int i : idx) s += std::abs(pred(i) - y_mv(i));
        return s / static_cast<double>(idx.size());
    };

    for (int t = 0; t < config.n_trees; ++t) {
        Vector resid = y_mv - pred;
        std::vector<TreeNode> tree;
        grow(tree, X, resid, split.train, 0, config);
        for (int i = 0; i < X.rows(); ++i)
            pred(i) += config.learning_rate * tree_predict_row(tree, X, i);
        model.trees.push_back(std::move(tree));
        model.train_mae_history.push_back(mae(split.train));
        model.val_mae_history.push_back(mae(split.val));
    }

    model.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return model;
}

Vector gbt_predict(const GbtModel& model, const Matrix& X) {
    if (model.n_features > 0 && X.cols() != model.n_features)
        throw ValidationError("gbt_predict: expected " + std::to_string(model.n_features) +
                              " feature columns, got " + std::to_string(X.cols()));
    Vector out = Vector::Constant(X.rows(), model.base_score);
    for (const auto& tree : model.trees)
        for (int i = 0; i < X.rows(); ++i)
            out(i) += model.config.learning_rate * tree_predict_row(tree, X, i);
    return out;
}

std::string GbtModel::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["n_trees"] = config.n_trees;
    j["max_depth"] = config.max_depth;
    j["learning_rate"] = config.learning_rate;
    j["min_samples_leaf"] = config.min_samples_leaf;
    j["seed"] = config.seed;
    j["n_features"] = n_features;
    j["base_score"] = base_score;
    auto& trees_j = j["trees"] = nlohmann::json::array();
    for (const auto& tree : trees) {
        nlohmann::json tj = nlohmann::json::array();
        for (const auto& n : tree)
            tj.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        trees_j.push_back(tj);
    }
    return j.dump();
}

GbtModel GbtModel::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    GbtModel m;
    m.config.n_trees = j.at("n_trees");
    m.config.max_depth = j.at("max_depth");
    m.config.learning_rate = j.at("learning_rate");
    m.config.min_samples_leaf = j.at("min_samples_leaf");
    m.config.seed = j.at("seed");
    m.n_features = j.at("n_features");
    m.base_score = j.at("base_score");
    for (const auto& tj : j.at("trees")) {
        std::vector<TreeNode> tree;
        for (const auto& nj : tj) {
            TreeNode n;
            n.feature = nj.at(0);
            n.threshold = nj.at(1);
            n.left = nj.at(2);
            n.right = nj.at(3);
            n.value = nj.at(4);
            tree.push_back(n);
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

}  // namespace irgrid
