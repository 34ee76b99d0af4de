#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irgrid/autodiff.hpp"
#include "irgrid/dataset.hpp"

namespace irgrid {

// Rasterized tile maps: per-tile feature channels (summed over member nets)
// and the mean IR-drop label. Spatial dims are zero-padded to multiples of 16
// so four pooling stages divide evenly.
struct TileGrid {
    double tile_um = 1.5;
    int H = 0, W = 0, C = 0;
    Eigen::ArrayXd channels;   // {C,H,W} flat
    Eigen::ArrayXd label_map;  // {H,W} flat
    Eigen::ArrayXd mask;       // occupancy, {H,W} flat
    std::vector<int> net_tile;  // flat tile index per dataset record
    FeatureSetId set_id = FeatureSetId::SetA;
};

TileGrid rasterize(const Dataset& ds, double tile_um, FeatureSetId set_id);

struct CnnConfig {
    std::vector<int> encoder_channels = {8, 16, 16, 16};  // four conv+pool stages
    int decoder_channels = 16;
    double lr = 1e-3;
    int max_epochs = 200;
    std::uint64_t seed = 0;

    void validate() const;
};

class CnnModel {
public:
    CnnModel(const CnnConfig& config, int in_channels);

    // {C,H,W} -> {1,H,W}; H and W must be divisible by 16.
    ad::Tensor forward(ad::Tape& tape, const ad::Tensor& input) const;

    std::vector<ad::Tensor>& params() { return params_; }
    const std::vector<ad::Tensor>& params() const { return params_; }
    const CnnConfig& config() const { return config_; }
    int in_channels() const { return in_channels_; }

    std::vector<Eigen::ArrayXd> snapshot() const;
    void restore(const std::vector<Eigen::ArrayXd>& values);

private:
    CnnConfig config_;
    int in_channels_ = 0;
    std::vector<ad::Tensor> params_;
    std::vector<std::string> names_;
};

struct TrainedCnn {
    CnnConfig config;
    int in_channels = 0;
    std::vector<Eigen::ArrayXd> param_values;
    double label_scale_mv = 1.0;
    std::vector<double> train_mae_history;  // masked, mV
    double train_seconds = 0.0;

    std::string to_json() const;
    static TrainedCnn from_json(const std::string& text);
};

// MAE on tiles whose flat index appears in train_tiles; features are
// normalized per channel by the train-tile max.
TrainedCnn cnn_train(const TileGrid& grid, const std::vector<int>& train_tiles,
                     const CnnConfig& config);

// Predicted map in mV.
Vector cnn_predict_map(const TrainedCnn& model, const TileGrid& grid);

// Per-net prediction = predicted value of the net's tile.
Vector cnn_predict_per_net(const TrainedCnn& model, const TileGrid& grid);

// Tiles holding at least one net from the given record indices.
std::vector<int> tiles_for_records(const TileGrid& grid, const IndexVec& records);

}  // namespace irgrid
