#include "irgrid/cnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

namespace irgrid {

using ad::Tensor;

namespace {

int pad16(int n) { return std::max(16, ((n + 15) / 16) * 16); }

Eigen::ArrayXd glorot(std::mt19937_64& rng, int fan_in, int fan_out, std::int64_t n) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::ArrayXd d(n);
    for (std::int64_t i = 0; i < n; ++i) d(i) = u(rng);
    return d;
}

}  // namespace

TileGrid rasterize(const Dataset& ds, double tile_um, FeatureSetId set_id) {
    if (tile_um <= 0) throw ValidationError("rasterize: tile size must be positive");
    if (ds.records.empty()) throw ValidationError("rasterize: dataset has no records");
    for (const auto& r : ds.records)
        if (r.x_um < 0 || r.y_um < 0)
            throw ValidationError("rasterize: negative coordinate on net " +
                                  std::to_string(r.net_id));

    TileGrid g;
    g.tile_um = tile_um;
    g.set_id = set_id;
    g.C = set_id == FeatureSetId::SetA ? 4 : 7;  // R,P,Ipk,Iavg (+tr,tf,tau)

    int max_r = 0, max_c = 0;
    for (const auto& r : ds.records) {
        max_r = std::max(max_r, static_cast<int>(std::floor(r.y_um / tile_um)));
        max_c = std::max(max_c, static_cast<int>(std::floor(r.x_um / tile_um)));
    }
    g.H = pad16(max_r + 1);
    g.W = pad16(max_c + 1);

    const std::int64_t hw = static_cast<std::int64_t>(g.H) * g.W;
    g.channels = Eigen::ArrayXd::Zero(g.C * hw);
    g.label_map = Eigen::ArrayXd::Zero(hw);
    g.mask = Eigen::ArrayXd::Zero(hw);
    Eigen::ArrayXd count = Eigen::ArrayXd::Zero(hw);

    for (const auto& r : ds.records) {
        int ti = static_cast<int>(std::floor(r.y_um / tile_um));
        int tj = static_cast<int>(std::floor(r.x_um / tile_um));
        std::int64_t t = static_cast<std::int64_t>(ti) * g.W + tj;
        g.net_tile.push_back(static_cast<int>(t));

        double feat[7] = {r.resistance_ohm, r.p_total_w, r.i_peak_a, r.i_avg_a,
                          r.t_rise_s,       r.t_fall_s,  r.tau_s};
        for (int c = 0; c < g.C; ++c) g.channels(c * hw + t) += feat[c];

        g.mask(t) = 1.0;
        count(t) += 1.0;
        if (r.ir_drop_mv) g.label_map(t) += *r.ir_drop_mv;
    }
    for (std::int64_t t = 0; t < hw; ++t)
        if (count(t) > 0) g.label_map(t) /= count(t);
    return g;
}

std::vector<int> tiles_for_records(const TileGrid& grid, const IndexVec& records) {
    std::vector<int> tiles;
    for (int i : records) {
        if (i < 0 || i >= static_cast<int>(grid.net_tile.size()))
            throw ValidationError("tiles_for_records: record index out of range");
        tiles.push_back(grid.net_tile[i]);
    }
    std::sort(tiles.begin(), tiles.end());
    tiles.erase(std::unique(tiles.begin(), tiles.end()), tiles.end());
    return tiles;
}

void CnnConfig::validate() const {
    if (encoder_channels.size() != 4)
        throw ValidationError("cnn: exactly four encoder stages expected");
    for (int c : encoder_channels)
        if (c < 1) throw ValidationError("cnn: encoder channel widths must be >= 1");
    if (decoder_channels < 1) throw ValidationError("cnn: decoder_channels must be >= 1");
    if (max_epochs < 1) throw ValidationError("cnn: max_epochs must be >= 1");
}

CnnModel::CnnModel(const CnnConfig& config, int in_channels)
    : config_(config), in_channels_(in_channels) {
    config_.validate();
    if (in_channels < 1) throw ValidationError("cnn: in_channels must be >= 1");
    std::mt19937_64 rng(config.seed);

    auto conv_param = [&](const std::string& name, int o, int c, int k) {
        params_.push_back(Tensor::param(
            {o, c, k, k}, glorot(rng, c * k * k, o * k * k, static_cast<std::int64_t>(o) * c * k * k)));
        names_.push_back(name + ".w");
        params_.push_back(Tensor::param({o}, Eigen::ArrayXd::Zero(o)));
        names_.push_back(name + ".b");
    };
    auto convt_param = [&](const std::string& name, int i, int o) {
        params_.push_back(Tensor::param(
            {i, o, 2, 2}, glorot(rng, i * 4, o * 4, static_cast<std::int64_t>(i) * o * 4)));
        names_.push_back(name + ".w");
        params_.push_back(Tensor::param({o}, Eigen::ArrayXd::Zero(o)));
        names_.push_back(name + ".b");
    };

    int c = in_channels;
    for (int s = 0; s < 4; ++s) {
        conv_param("enc" + std::to_string(s), config.encoder_channels[s], c, 3);
        c = config.encoder_channels[s];
    }
    const int d = config.decoder_channels;
    convt_param("dec.t0", c, d);
    convt_param("dec.t1", d, d);
    conv_param("dec.c0", d, d, 3);
    conv_param("dec.c1", 1, d, 3);
}

ad::Tensor CnnModel::forward(ad::Tape& t, const ad::Tensor& input) const {
    if (input.shape().size() != 3 || input.shape()[0] != in_channels_)
        throw ValidationError("cnn forward: expected {" + std::to_string(in_channels_) +
                              ",H,W} input");
    if (input.shape()[1] % 16 != 0 || input.shape()[2] % 16 != 0)
        throw ValidationError("cnn forward: spatial dims must be divisible by 16 "
                              "(rasterize pads; this signals a pipeline bug)");
    std::size_t p = 0;
    Tensor h = input;
    for (int s = 0; s < 4; ++s) {
        h = t.maxpool2(t.relu(t.conv2d(h, params_[p], params_[p + 1])));
        p += 2;
    }
    // Two transposed convs recover x4; the remaining x4 comes from
    // parameter-free upsampling in front of the two plain convs.
    h = t.relu(t.conv_transpose2(h, params_[p], params_[p + 1]));
    p += 2;
    h = t.relu(t.conv_transpose2(h, params_[p], params_[p + 1]));
    p += 2;
    h = t.relu(t.conv2d(t.upsample2(h), params_[p], params_[p + 1]));
    p += 2;
    h = t.conv2d(t.upsample2(h), params_[p], params_[p + 1]);
    return h;
}

std::vector<Eigen::ArrayXd> CnnModel::snapshot() const {
    std::vector<Eigen::ArrayXd> out;
    for (const auto& p : params_) out.push_back(p.value());
    return out;
}

void CnnModel::restore(const std::vector<Eigen::ArrayXd>& values) {
    if (values.size() != params_.size())
        throw ValidationError("cnn restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != params_[i].size())
            throw ValidationError("cnn restore: shape mismatch on " + names_[i]);
        params_[i].value() = values[i];
    }
}

namespace {

struct NormalizedInput {
    Tensor x;
    std::vector<double> channel_scale;
};

NormalizedInput normalized_input(const TileGrid& grid,
                                 const std::vector<double>* scales = nullptr) {
    const std::int64_t hw = static_cast<std::int64_t>(grid.H) * grid.W;
    NormalizedInput out;
    Eigen::ArrayXd x = grid.channels;
    for (int c = 0; c < grid.C; ++c) {
        double s;
        if (scales) {
            s = (*scales)[c];
        } else {
            s = x.segment(c * hw, hw).maxCoeff();
            if (s <= 0) s = 1.0;
        }
        out.channel_scale.push_back(s);
        x.segment(c * hw, hw) /= s;
    }
    out.x = Tensor::constant({grid.C, grid.H, grid.W}, std::move(x));
    return out;
}

}  // namespace

TrainedCnn cnn_train(const TileGrid& grid, const std::vector<int>& train_tiles,
                     const CnnConfig& config) {
    config.validate();
    if (train_tiles.empty()) throw ValidationError("cnn_train: no training tiles");

    auto t0 = std::chrono::steady_clock::now();

    double label_scale = 0.0;
    for (int t : train_tiles) label_scale = std::max(label_scale, grid.label_map(t));
    if (label_scale <= 0) label_scale = 1.0;

    auto norm = normalized_input(grid);
    CnnModel model(config, grid.C);

    Eigen::ArrayXd tgt(train_tiles.size());
    for (std::size_t i = 0; i < train_tiles.size(); ++i)
        tgt(i) = grid.label_map(train_tiles[i]) / label_scale;
    Tensor target = Tensor::constant({static_cast<int>(train_tiles.size()), 1}, tgt);

    ad::AdamConfig ac;
    ac.lr = config.lr;
    ad::AdamState adam(ac);

    TrainedCnn out;
    out.config = config;
    out.in_channels = grid.C;
    out.label_scale_mv = label_scale;

    const std::int64_t hw = static_cast<std::int64_t>(grid.H) * grid.W;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        ad::Tape tape;
        Tensor map = model.forward(tape, norm.x);
        Tensor flat = tape.reshape(map, {static_cast<int>(hw), 1});
        Tensor loss = ad::mae_loss(tape, flat, train_tiles, target);
        if (!std::isfinite(loss.scalar()))
            throw NumericError("cnn_train: non-finite loss at epoch " + std::to_string(epoch));
        out.train_mae_history.push_back(loss.scalar() * label_scale);
        adam.zero_grad(model.params());
        tape.backward(loss);
        adam.step(model.params());
    }
    out.param_values = model.snapshot();
    out.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // store scales inline with params for reproducible prediction
    Eigen::ArrayXd sc(norm.channel_scale.size());
    for (std::size_t i = 0; i < norm.channel_scale.size(); ++i) sc(i) = norm.channel_scale[i];
    out.param_values.push_back(sc);
    return out;
}

Vector cnn_predict_map(const TrainedCnn& model, const TileGrid& grid) {
    if (grid.C != model.in_channels)
        throw ValidationError("cnn_predict: channel count mismatch");
    std::vector<Eigen::ArrayXd> params(model.param_values.begin(),
                                       model.param_values.end() - 1);
    const Eigen::ArrayXd& sc = model.param_values.back();
    std::vector<double> scales(sc.data(), sc.data() + sc.size());

    CnnModel m(model.config, model.in_channels);
    m.restore(params);
    auto norm = normalized_input(grid, &scales);
    ad::Tape tape;
    Tensor map = m.forward(tape, norm.x);
    return map.value().matrix() * model.label_scale_mv;
}

Vector cnn_predict_per_net(const TrainedCnn& model, const TileGrid& grid) {
    Vector map = cnn_predict_map(model, grid);
    Vector out(grid.net_tile.size());
    for (std::size_t i = 0; i < grid.net_tile.size(); ++i) out(i) = map(grid.net_tile[i]);
    return out;
}

std::string TrainedCnn::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["encoder_channels"] = config.encoder_channels;
    j["decoder_channels"] = config.decoder_channels;
    j["lr"] = config.lr;
    j["max_epochs"] = config.max_epochs;
    j["seed"] = config.seed;
    j["in_channels"] = in_channels;
    j["label_scale_mv"] = label_scale_mv;
    j["train_seconds"] = train_seconds;
    auto& params = j["params"] = nlohmann::json::array();
    for (const auto& p : param_values)
        params.push_back(std::vector<double>(p.data(), p.data() + p.size()));
    j["train_mae_history"] = train_mae_history;
    return j.dump();
}

TrainedCnn TrainedCnn::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    TrainedCnn m;
    m.config.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    m.config.decoder_channels = j.at("decoder_channels");
    m.config.lr = j.at("lr");
    m.config.max_epochs = j.at("max_epochs");
    m.config.seed = j.at("seed");
    m.in_channels = j.at("in_channels");
    m.label_scale_mv = j.at("label_scale_mv");
    m.train_seconds = j.value("train_seconds", 0.0);
    for (const auto& p : j.at("params")) {
        auto d = p.get<std::vector<double>>();
        m.param_values.push_back(Eigen::Map<const Eigen::ArrayXd>(d.data(), d.size()));
    }
    m.train_mae_history = j.value("train_mae_history", std::vector<double>{});
    return m;
}

}  // namespace irgrid
