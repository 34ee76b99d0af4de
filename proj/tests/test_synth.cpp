#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "irgrid/synth.hpp"

using namespace irgrid;

namespace {

// Dense reference: full Laplacian with pad rows replaced by v = VDD.
Vector dense_reference_drops(const PdnGrid& grid, const std::vector<double>& current) {
    const int n = grid.n_nodes();
    const double g = 1.0 / grid.seg_resistance_ohm;
    const double vdd_v = grid.vdd_mv / 1000.0;
    Matrix A = Matrix::Zero(n, n);
    Vector b = Vector::Zero(n);
    std::vector<bool> pad(n, false);
    for (int p : grid.pad_nodes) pad[p] = true;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            int v = grid.node_index(r, c);
            if (pad[v]) {
                A(v, v) = 1.0;
                b(v) = vdd_v;
                continue;
            }
            const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= grid.rows || nc < 0 || nc >= grid.cols) continue;
                int u = grid.node_index(nr, nc);
                A(v, v) += g;
                A(v, u) -= g;
            }
            b(v) = -current[v];
        }
    Vector v = A.fullPivLu().solve(b);
    return (Vector::Constant(n, vdd_v) - v) * 1000.0;
}

PdnGrid ladder(int n_nodes) {
    PdnGrid grid;
    grid.rows = 1;
    grid.cols = n_nodes;
    grid.seg_resistance_ohm = 1.0;
    grid.pad_nodes = {0};
    grid.vdd_mv = 800.0;
    return grid;
}

}  // namespace

TEST_CASE("generate_circuit is deterministic per seed") {
    SynthConfig cfg;
    cfg.seed = 1;
    cfg.n_cells = 30;
    auto a = generate_circuit(cfg);
    auto b = generate_circuit(cfg);
    REQUIRE(a.loads.size() == b.loads.size());
    for (std::size_t i = 0; i < a.loads.size(); ++i) {
        CHECK(a.loads[i].grid_node == b.loads[i].grid_node);
        CHECK(a.loads[i].i_avg_a == b.loads[i].i_avg_a);
        CHECK(a.loads[i].t_rise_s == b.loads[i].t_rise_s);
    }
}

TEST_CASE("n_cells=0 gives a load-free grid with zero drops") {
    SynthConfig cfg;
    cfg.n_cells = 0;
    auto c = generate_circuit(cfg);
    CHECK(c.loads.empty());
    Vector drops = solve_ir_drop(c.grid, c.loads);
    CHECK(drops.array().abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("kappa changes effective currents but not placement") {
    SynthConfig c0;
    c0.seed = 5;
    c0.n_cells = 20;
    c0.kappa = 0.0;
    SynthConfig c1 = c0;
    c1.kappa = 0.5;
    auto a = generate_circuit(c0);
    auto b = generate_circuit(c1);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.loads.size(); ++i) {
        CHECK(a.loads[i].grid_node == b.loads[i].grid_node);
        CHECK(a.loads[i].i_avg_a == b.loads[i].i_avg_a);
        if (effective_current_a(a.loads[i], c0) != effective_current_a(b.loads[i], c1))
            any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("pad_spacing > 0 adds a pad lattice and loads avoid it") {
    SynthConfig cfg;
    cfg.rows = 9;
    cfg.cols = 9;
    cfg.n_cells = 30;
    cfg.pad_spacing = 4;
    auto c = generate_circuit(cfg);
    // corners plus every 4th row/column intersection
    for (int r = 0; r < 9; r += 4)
        for (int col = 0; col < 9; col += 4) {
            int n = c.grid.node_index(r, col);
            CHECK(std::binary_search(c.grid.pad_nodes.begin(), c.grid.pad_nodes.end(), n));
        }
    for (const auto& l : c.loads)
        CHECK(!std::binary_search(c.grid.pad_nodes.begin(), c.grid.pad_nodes.end(),
                                  l.grid_node));
    // denser pads mean shallower drops for the same loads
    SynthConfig sparse = cfg;
    sparse.pad_spacing = 0;
    auto s = generate_circuit(sparse);
    auto cur_dense = node_currents(c.grid, c.loads, cfg);
    auto cur_sparse = node_currents(s.grid, s.loads, sparse);
    CHECK(solve_ir_drop(c.grid, c.loads, &cur_dense).maxCoeff() <
          solve_ir_drop(s.grid, s.loads, &cur_sparse).maxCoeff());
}

TEST_CASE("too many cells rejected") {
    SynthConfig cfg;
    cfg.rows = 3;
    cfg.cols = 3;
    cfg.n_cells = 100;
    CHECK_THROWS_AS(generate_circuit(cfg), ValidationError);
}

TEST_CASE("ohm's law on a single segment: 10 mA over 1 ohm -> 10 mV") {
    PdnGrid grid = ladder(2);
    std::vector<CellLoad> loads = {{1, 0.010, 0.010, 0, 0, 0, 0}};
    Vector drops = solve_ir_drop(grid, loads);
    CHECK(drops(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(drops(1) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("series ladder: 10 mA at each of n1,n2 -> 20 mV, 30 mV") {
    PdnGrid grid = ladder(3);
    std::vector<CellLoad> loads = {{1, 0.010, 0.010, 0, 0, 0, 0},
                                   {2, 0.010, 0.010, 0, 0, 0, 0}};
    Vector drops = solve_ir_drop(grid, loads);
    CHECK(drops(1) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(drops(2) == doctest::Approx(30.0).epsilon(1e-9));
}

TEST_CASE("random 6x6 grid matches the dense reference to 1e-8 relative") {
    SynthConfig cfg;
    cfg.rows = 6;
    cfg.cols = 6;
    cfg.n_cells = 8;
    cfg.seed = 3;
    auto c = generate_circuit(cfg);
    auto cur = node_currents(c.grid, c.loads, cfg);
    Vector drops = solve_ir_drop(c.grid, c.loads, &cur);
    Vector ref = dense_reference_drops(c.grid, cur);
    CHECK((drops - ref).norm() / ref.norm() < 1e-8);
}

TEST_CASE("superposition of load sets") {
    SynthConfig cfg;
    cfg.rows = 8;
    cfg.cols = 8;
    cfg.n_cells = 12;
    cfg.seed = 11;
    auto c = generate_circuit(cfg);
    std::vector<CellLoad> a(c.loads.begin(), c.loads.begin() + 6);
    std::vector<CellLoad> b(c.loads.begin() + 6, c.loads.end());
    Vector da = solve_ir_drop(c.grid, a);
    Vector db = solve_ir_drop(c.grid, b);
    Vector dall = solve_ir_drop(c.grid, c.loads);
    CHECK((dall - (da + db)).norm() / dall.norm() < 1e-8);
}

TEST_CASE("drops scale linearly with current") {
    SynthConfig cfg;
    cfg.rows = 7;
    cfg.cols = 5;
    cfg.n_cells = 10;
    cfg.seed = 13;
    auto c = generate_circuit(cfg);
    Vector d1 = solve_ir_drop(c.grid, c.loads);
    auto scaled = c.loads;
    for (auto& l : scaled) {
        l.i_avg_a *= 3.5;
        l.i_peak_a *= 3.5;
    }
    Vector d2 = solve_ir_drop(c.grid, scaled);
    CHECK((d2 - 3.5 * d1).norm() / d2.norm() < 1e-9);
}

TEST_CASE("pad current balances total load current") {
    SynthConfig cfg;
    cfg.rows = 9;
    cfg.cols = 6;
    cfg.n_cells = 15;
    cfg.seed = 17;
    auto c = generate_circuit(cfg);
    Vector drops = solve_ir_drop(c.grid, c.loads);
    const double g = 1.0 / c.grid.seg_resistance_ohm;
    const double vdd_v = c.grid.vdd_mv / 1000.0;
    auto volt = [&](int n) { return vdd_v - drops(n) / 1000.0; };
    double pad_current = 0.0;
    std::vector<bool> pad(c.grid.n_nodes(), false);
    for (int p : c.grid.pad_nodes) pad[p] = true;
    for (int p : c.grid.pad_nodes) {
        auto [r, cc] = c.grid.node_rc(p);
        const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            int nr = r + dr[k], nc = cc + dc[k];
            if (nr < 0 || nr >= c.grid.rows || nc < 0 || nc >= c.grid.cols) continue;
            int u = c.grid.node_index(nr, nc);
            if (pad[u]) continue;
            pad_current += g * (vdd_v - volt(u));
        }
    }
    double load_current = 0.0;
    for (const auto& l : c.loads) load_current += l.i_avg_a;
    CHECK(pad_current == doctest::Approx(load_current).epsilon(1e-9));
}

TEST_CASE("drops stay within [0, VDD] and max occurs at a load node") {
    SynthConfig cfg;
    cfg.rows = 10;
    cfg.cols = 10;
    cfg.n_cells = 25;
    cfg.seed = 23;
    auto c = generate_circuit(cfg);
    Vector drops = solve_ir_drop(c.grid, c.loads);
    CHECK(drops.minCoeff() >= -1e-9);
    CHECK(drops.maxCoeff() <= c.grid.vdd_mv);
    int argmax = 0;
    drops.maxCoeff(&argmax);
    bool at_load = false;
    for (const auto& l : c.loads)
        if (l.grid_node == argmax) at_load = true;
    CHECK(at_load);
}

TEST_CASE("derive_net_records populates coordinates, power and labels") {
    PdnGrid grid;
    grid.rows = 6;
    grid.cols = 6;
    grid.pitch_um = 1.5;
    grid.seg_resistance_ohm = 1.0;
    grid.pad_nodes = {0};
    grid.vdd_mv = 800.0;
    // node at column 2, row 3 -> (x, y) = (3.0, 4.5)
    int node = grid.node_index(3, 2);
    std::vector<CellLoad> loads = {{node, 0.01, 0.02, 4, 1e-10, 2e-10, 3e-10}};
    Vector drops = solve_ir_drop(grid, loads);
    Dataset ds = derive_net_records(grid, loads, drops);
    REQUIRE(ds.records.size() == 1);
    CHECK(ds.records[0].x_um == doctest::Approx(3.0));
    CHECK(ds.records[0].y_um == doctest::Approx(4.5));
    CHECK(ds.records[0].p_total_w == doctest::Approx(8e-3));  // 0.8 V * 0.01 A
    CHECK(*ds.records[0].ir_drop_mv == doctest::Approx(drops(node)));
    CHECK(ds.records[0].resistance_ohm == doctest::Approx(5.0));  // 5 hops x 1 ohm
}

TEST_CASE("full pipeline labels equal solver output at load nodes") {
    SynthConfig cfg;
    cfg.seed = 1;
    cfg.n_cells = 40;
    auto c = generate_circuit(cfg);
    auto cur = node_currents(c.grid, c.loads, cfg);
    Vector drops = solve_ir_drop(c.grid, c.loads, &cur);
    Dataset ds = derive_net_records(c.grid, c.loads, drops);
    REQUIRE(ds.records.size() == c.loads.size());
    for (std::size_t i = 0; i < c.loads.size(); ++i)
        CHECK(*ds.records[i].ir_drop_mv == doctest::Approx(drops(c.loads[i].grid_node)));
}
