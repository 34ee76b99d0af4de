#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "irgrid/cnn.hpp"

using namespace irgrid;

namespace {

NetRecord rec(std::int64_t id, double x, double y, double i_avg, double label) {
    NetRecord r;
    r.net_id = id;
    r.x_um = x;
    r.y_um = y;
    r.resistance_ohm = 1.0;
    r.p_total_w = 0.8 * i_avg;
    r.i_peak_a = 2 * i_avg;
    r.i_avg_a = i_avg;
    r.t_rise_s = 1e-10;
    r.t_fall_s = 1e-10;
    r.tau_s = 1e-10;
    r.ir_drop_mv = label;
    return r;
}

Dataset small_dataset() {
    Dataset ds;
    ds.vdd_mv = 800.0;
    ds.records = {
        rec(0, 0.1, 0.1, 1e-3, 2.0),   // tile (0,0)
        rec(1, 0.9, 0.2, 2e-3, 4.0),   // tile (0,0) too
        rec(2, 1.6, 0.0, 3e-3, 6.0),   // tile (0,1)
        rec(3, 0.0, 3.1, 4e-3, 8.0),   // tile (2,0)
    };
    return ds;
}

}  // namespace

TEST_CASE("rasterize: floor tile rule, mean labels, padded dims") {
    auto ds = small_dataset();
    auto g = rasterize(ds, 1.5, FeatureSetId::SetA);
    CHECK(g.H == 16);
    CHECK(g.W == 16);
    CHECK(g.C == 4);
    CHECK(g.net_tile[0] == 0 * g.W + 0);
    CHECK(g.net_tile[1] == 0 * g.W + 0);
    CHECK(g.net_tile[2] == 0 * g.W + 1);
    CHECK(g.net_tile[3] == 2 * g.W + 0);
    // tile (0,0) holds nets 0 and 1: label is the mean, channels the sum
    CHECK(g.label_map(0) == doctest::Approx(3.0));
    CHECK(g.label_map(1) == doctest::Approx(6.0));
    CHECK(g.label_map(2 * g.W) == doctest::Approx(8.0));
    CHECK(g.mask(0) == 1.0);
    CHECK(g.mask(5) == 0.0);
}

TEST_CASE("rasterize conserves channel mass") {
    auto ds = small_dataset();
    auto g = rasterize(ds, 1.5, FeatureSetId::SetB);
    CHECK(g.C == 7);
    const int hw = g.H * g.W;
    // channel order mirrors the feature columns after x/y are dropped:
    // R, P, I_peak, I_avg, then timing for SetB
    double r_sum = 0, iavg_sum = 0;
    for (const auto& r : ds.records) {
        r_sum += r.resistance_ohm;
        iavg_sum += r.i_avg_a;
    }
    CHECK(g.channels.segment(0, hw).sum() == doctest::Approx(r_sum));
    CHECK(g.channels.segment(3 * hw, hw).sum() == doctest::Approx(iavg_sum));
}

TEST_CASE("rasterize rejects empty datasets and bad tile sizes") {
    Dataset empty;
    empty.vdd_mv = 800.0;
    CHECK_THROWS_AS(rasterize(empty, 1.5, FeatureSetId::SetA), ValidationError);
    auto ds = small_dataset();
    CHECK_THROWS_AS(rasterize(ds, 0.0, FeatureSetId::SetA), ValidationError);
}

TEST_CASE("zero input with zeroed final layer maps to zero output") {
    CnnConfig cfg;
    CnnModel m(cfg, 4);
    // zero the last conv's weight and bias
    auto& ps = m.params();
    ps[ps.size() - 2].value().setZero();
    ps[ps.size() - 1].value().setZero();
    ad::Tape tape;
    ad::Tensor in = ad::Tensor::constant({4, 16, 16}, Eigen::ArrayXd::Zero(4 * 16 * 16));
    ad::Tensor out = m.forward(tape, in);
    CHECK(out.value().abs().maxCoeff() == 0.0);
}

TEST_CASE("output spatial shape equals input spatial shape") {
    CnnConfig cfg;
    CnnModel m(cfg, 4);
    for (int hw : {16, 32}) {
        ad::Tape tape;
        ad::Tensor in = ad::Tensor::constant({4, hw, hw}, Eigen::ArrayXd::Random(4 * hw * hw));
        ad::Tensor out = m.forward(tape, in);
        REQUIRE(out.shape().size() == 3);
        CHECK(out.shape()[0] == 1);
        CHECK(out.shape()[1] == hw);
        CHECK(out.shape()[2] == hw);
    }
}

TEST_CASE("overfits a small tile grid to sub-mV masked MAE") {
    std::mt19937_64 rng(9);
    Dataset ds;
    ds.vdd_mv = 800.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 24; ++i) {
        double x = 1.5 * (i % 6) + 0.2;
        double y = 1.5 * (i / 6) + 0.2;
        double ia = 1e-3 * (1.0 + u(rng));
        double label = 3.0 + 40.0 * ia * 1e3 * u(rng);
        ds.records.push_back(rec(i, x, y, ia, label));
    }
    auto g = rasterize(ds, 1.5, FeatureSetId::SetA);
    std::vector<int> train_tiles;
    for (int i = 0; i < g.H * g.W; ++i)
        if (g.mask(i) > 0) train_tiles.push_back(i);

    CnnConfig cfg;
    cfg.max_epochs = 400;
    cfg.lr = 3e-3;
    cfg.seed = 5;
    auto trained = cnn_train(g, train_tiles, cfg);
    Vector map = cnn_predict_map(trained, g);
    double mae = 0;
    for (int t : train_tiles) mae += std::abs(map(t) - g.label_map(t));
    mae /= static_cast<double>(train_tiles.size());
    CHECK(mae < 1.0);
    REQUIRE(!trained.train_mae_history.empty());
    CHECK(trained.train_mae_history.back() < trained.train_mae_history.front());
}

TEST_CASE("nets sharing a tile share a prediction") {
    auto ds = small_dataset();
    auto g = rasterize(ds, 1.5, FeatureSetId::SetA);
    std::vector<int> train_tiles = tiles_for_records(g, {0, 1, 2, 3});
    CHECK(train_tiles.size() == 3);
    CnnConfig cfg;
    cfg.max_epochs = 5;
    auto trained = cnn_train(g, train_tiles, cfg);
    Vector per_net = cnn_predict_per_net(trained, g);
    REQUIRE(per_net.size() == 4);
    CHECK(per_net(0) == per_net(1));  // same tile -> identical value
    Vector map = cnn_predict_map(trained, g);
    CHECK(per_net(2) == map(g.net_tile[2]));
}

TEST_CASE("training is deterministic and the model round-trips through json") {
    auto ds = small_dataset();
    auto g = rasterize(ds, 1.5, FeatureSetId::SetA);
    auto tiles = tiles_for_records(g, {0, 1, 2, 3});
    CnnConfig cfg;
    cfg.max_epochs = 8;
    cfg.seed = 11;
    auto a = cnn_train(g, tiles, cfg);
    auto b = cnn_train(g, tiles, cfg);
    CHECK((cnn_predict_map(a, g) - cnn_predict_map(b, g)).norm() == 0.0);
    auto back = TrainedCnn::from_json(a.to_json());
    CHECK((cnn_predict_map(a, g) - cnn_predict_map(back, g)).norm() == 0.0);
}
