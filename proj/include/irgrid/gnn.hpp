#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irgrid/autodiff.hpp"
#include "irgrid/dataset.hpp"
#include "irgrid/graph.hpp"
#include "irgrid/preprocess.hpp"

namespace irgrid {

enum class GnnArch { GCN, GAT, GIN };

GnnArch parse_arch(const std::string& name);
std::string arch_name(GnnArch a);

struct GnnConfig {
    GnnArch arch = GnnArch::GCN;
    int n_layers = 3;
    int hidden_channels = 64;
    int gat_heads = 4;
    double gin_eps_init = 0.0;
    double dropout_p = 0.5;
    double lr = 1e-4;
    double weight_decay = 1e-3;
    int max_epochs = 500;
    int patience = 50;        // negative disables early stopping
    std::uint64_t seed = 0;
    bool use_edge_feature = true;  // consumed by GAT/GIN only

    void validate() const;
};

// Constant graph structure shared by every forward pass.
struct GraphTensors {
    int n_nodes = 0;
    Eigen::SparseMatrix<double> norm_adj;       // GCN aggregation
    std::vector<int> src, dst;                  // directed edges + self-loops (GAT)
    std::vector<double> edge_feat_loops;        // dist/threshold, 0 on self-loops
    std::vector<int> nsrc, ndst;                // directed edges, neighbors only (GIN)
    std::vector<double> edge_feat_nbrs;
    ad::Tensor X;

    static GraphTensors from_graph(const CircuitGraph& g);
};

// Trainable parameter stack for one architecture; forward() replays the
// layer structure on a fresh tape each call.
class GnnModel {
public:
    GnnModel(const GnnConfig& config, int in_width);

    ad::Tensor forward(ad::Tape& tape, const GraphTensors& gt, bool training,
                       std::uint64_t dropout_seed) const;

    std::vector<ad::Tensor>& params() { return params_; }
    const std::vector<ad::Tensor>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    const GnnConfig& config() const { return config_; }
    int in_width() const { return in_width_; }

    std::vector<Eigen::ArrayXd> snapshot() const;
    void restore(const std::vector<Eigen::ArrayXd>& values);

private:
    ad::Tensor forward_gcn(ad::Tape& t, const GraphTensors& gt, bool training,
                           std::uint64_t seed) const;
    ad::Tensor forward_gat(ad::Tape& t, const GraphTensors& gt, bool training,
                           std::uint64_t seed) const;
    ad::Tensor forward_gin(ad::Tape& t, const GraphTensors& gt, bool training,
                           std::uint64_t seed) const;

    GnnConfig config_;
    int in_width_ = 0;
    std::vector<ad::Tensor> params_;
    std::vector<std::string> names_;
};

struct EpochStats {
    double train_mae_mv = 0.0;
    double val_mae_mv = 0.0;
};

struct TrainedGnn {
    GnnConfig config;
    int in_width = 0;
    std::vector<Eigen::ArrayXd> param_values;  // best-val checkpoint
    double label_scale_mv = 1.0;
    std::vector<EpochStats> history;
    double train_seconds = 0.0;
    ScalerParams scaler;  // preprocessing that produced the graph features

    std::string to_json() const;
    static TrainedGnn from_json(const std::string& text);
};

TrainedGnn train_gnn(const CircuitGraph& graph, const SplitIndices& split,
                     const GnnConfig& config, const ScalerParams& scaler = {});

Vector predict_gnn(const TrainedGnn& model, const CircuitGraph& graph);

}  // namespace irgrid
