#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irgrid/common.hpp"
#include "irgrid/dataset.hpp"

namespace irgrid {

struct GbtConfig {
    int n_trees = 200;
    int max_depth = 3;
    double learning_rate = 0.1;
    int min_samples_leaf = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Flat binary-tree storage; feature < 0 marks a leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct GbtModel {
    GbtConfig config;
    int n_features = 0;
    double base_score = 0.0;
    std::vector<std::vector<TreeNode>> trees;
    std::vector<double> train_mae_history;  // per boosting round, train split
    std::vector<double> val_mae_history;
    double train_seconds = 0.0;

    std::string to_json() const;
    static GbtModel from_json(const std::string& text);
};

// Squared-error boosting with shrinkage; greedy variance-reduction splits.
GbtModel gbt_train(const Matrix& X, const Vector& y_mv, const SplitIndices& split,
                   const GbtConfig& config);

Vector gbt_predict(const GbtModel& model, const Matrix& X);

double tree_predict_row(const std::vector<TreeNode>& tree, const Matrix& X, int row);

}  // namespace irgrid
