#include "irgrid/synth.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>

namespace irgrid {

void PdnGrid::validate() const {
    if (rows * cols < 2) throw ValidationError("grid needs at least 2 nodes");
    if (seg_resistance_ohm <= 0) throw ValidationError("segment resistance must be positive");
    if (vdd_mv <= 0) throw ValidationError("vdd_mv must be positive");
    if (pad_nodes.empty()) throw ValidationError("grid needs at least one pad node");
    for (int p : pad_nodes)
        if (p < 0 || p >= n_nodes())
            throw ValidationError("pad node " + std::to_string(p) + " out of bounds");
}

void SynthConfig::validate() const {
    if (rows < 2 || cols < 2) throw ValidationError("grid must be at least 2x2");
    if (n_cells < 0) throw ValidationError("n_cells must be non-negative");
    if (kappa < 0) throw ValidationError("kappa must be non-negative");
    if (seg_resistance_ohm <= 0) throw ValidationError("segment resistance must be positive");
    if (i_avg_min_a <= 0 || i_avg_max_a < i_avg_min_a)
        throw ValidationError("invalid average-current range");
    if (peak_ratio_max < 1.0) throw ValidationError("peak_ratio_max must be >= 1");
    if (pad_spacing < 0) throw ValidationError("pad_spacing must be non-negative");
}

SynthCircuit generate_circuit(const SynthConfig& config) {
    config.validate();

    SynthCircuit c;
    c.grid.rows = config.rows;
    c.grid.cols = config.cols;
    c.grid.pitch_um = config.pitch_um;
    c.grid.seg_resistance_ohm = config.seg_resistance_ohm;
    c.grid.vdd_mv = config.vdd_mv;
    // Pads at the four corners, the usual bump placement for a small mesh;
    // with pad_spacing > 0 a bump lattice covers the interior as well.
    c.grid.pad_nodes = {c.grid.node_index(0, 0), c.grid.node_index(0, config.cols - 1),
                        c.grid.node_index(config.rows - 1, 0),
                        c.grid.node_index(config.rows - 1, config.cols - 1)};
    if (config.pad_spacing > 0)
        for (int r = 0; r < config.rows; r += config.pad_spacing)
            for (int col = 0; col < config.cols; col += config.pad_spacing)
                c.grid.pad_nodes.push_back(c.grid.node_index(r, col));
    std::sort(c.grid.pad_nodes.begin(), c.grid.pad_nodes.end());
    c.grid.pad_nodes.erase(std::unique(c.grid.pad_nodes.begin(), c.grid.pad_nodes.end()),
                           c.grid.pad_nodes.end());

    std::vector<int> candidates;
    for (int i = 0; i < c.grid.n_nodes(); ++i)
        if (!std::binary_search(c.grid.pad_nodes.begin(), c.grid.pad_nodes.end(), i))
            candidates.push_back(i);
    if (config.n_cells > static_cast<int>(candidates.size()))
        throw ValidationError("n_cells (" + std::to_string(config.n_cells) +
                              ") exceeds available non-pad nodes (" +
                              std::to_string(candidates.size()) + ")");

    std::mt19937_64 rng(config.seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int k = 0; k < config.n_cells; ++k) {
        CellLoad load;
        load.grid_node = candidates[k];
        load.i_avg_a = config.i_avg_min_a + u01(rng) * (config.i_avg_max_a - config.i_avg_min_a);
        load.i_peak_a = load.i_avg_a * (1.0 + u01(rng) * (config.peak_ratio_max - 1.0));
        load.window = static_cast<int>(u01(rng) * 20.0) % 20;
        load.t_rise_s = u01(rng) * config.t_rise_max_s;
        load.t_fall_s = u01(rng) * config.t_fall_max_s;
        load.tau_s = u01(rng) * config.tau_max_s;
        c.loads.push_back(load);
    }
    return c;
}

double effective_current_a(const CellLoad& load, const SynthConfig& config) {
    double f = 0.0;
    if (config.t_rise_max_s > 0) f += load.t_rise_s / config.t_rise_max_s;
    if (config.t_fall_max_s > 0) f += load.t_fall_s / config.t_fall_max_s;
    if (config.tau_max_s > 0) f += load.tau_s / config.tau_max_s;
    f /= 3.0;
    return load.i_avg_a * (1.0 + config.kappa * f);
}

std::vector<double> node_currents(const PdnGrid& grid, const std::vector<CellLoad>& loads,
                                  const SynthConfig& config) {
    std::vector<double> cur(grid.n_nodes(), 0.0);
    for (const auto& l : loads) cur[l.grid_node] += effective_current_a(l, config);
    return cur;
}

std::vector<int> hops_to_nearest_pad(const PdnGrid& grid) {
    std::vector<int> dist(grid.n_nodes(), -1);
    std::queue<int> q;
    for (int p : grid.pad_nodes) {
        dist[p] = 0;
        q.push(p);
    }
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        auto [r, c] = grid.node_rc(v);
        const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            int nr = r + dr[k], nc = c + dc[k];
            if (nr < 0 || nr >= grid.rows || nc < 0 || nc >= grid.cols) continue;
            int u = grid.node_index(nr, nc);
            if (dist[u] < 0) {
                dist[u] = dist[v] + 1;
                q.push(u);
            }
        }
    }
    return dist;
}

Vector solve_ir_drop(const PdnGrid& grid, const std::vector<CellLoad>& loads,
                     const std::vector<double>* node_current_a, double* rel_residual_out) {
    grid.validate();
    const int n = grid.n_nodes();

    std::vector<double> current(n, 0.0);
    if (node_current_a) {
        if (static_cast<int>(node_current_a->size()) != n)
            throw ValidationError("node current vector length mismatch");
        current = *node_current_a;
    } else {
        for (const auto& l : loads) {
            if (l.grid_node < 0 || l.grid_node >= n)
                throw ValidationError("load node out of bounds");
            current[l.grid_node] += l.i_avg_a;
        }
    }

    auto hops = hops_to_nearest_pad(grid);
    for (int i = 0; i < n; ++i)
        if (hops[i] < 0 && current[i] != 0.0)
            throw NumericError("node " + std::to_string(i) +
                               " carries current but floats (no path to any pad)");

    std::vector<bool> is_pad(n, false);
    for (int p : grid.pad_nodes) is_pad[p] = true;

    // Reduced index over free (non-pad) nodes.
    std::vector<int> free_idx(n, -1);
    int n_free = 0;
    for (int i = 0; i < n; ++i)
        if (!is_pad[i]) free_idx[i] = n_free++;

    const double g = 1.0 / grid.seg_resistance_ohm;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_free);
    const double vdd_v = grid.vdd_mv / 1000.0;

    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            int v = grid.node_index(r, c);
            if (is_pad[v]) continue;
            int fv = free_idx[v];
            double diag = 0.0;
            const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= grid.rows || nc < 0 || nc >= grid.cols) continue;
                int u = grid.node_index(nr, nc);
                diag += g;
                if (is_pad[u]) {
                    rhs(fv) += g * vdd_v;  // Dirichlet elimination
                } else {
                    trip.emplace_back(fv, free_idx[u], -g);
                }
            }
            trip.emplace_back(fv, fv, diag);
            rhs(fv) -= current[v];  // load draws current out of the node
        }
    }

    Eigen::SparseMatrix<double> G(n_free, n_free);
    G.setFromTriplets(trip.begin(), trip.end());

    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(G);
    if (llt.info() != Eigen::Success)
        throw NumericError("PDN conductance matrix is not SPD (floating component?)");
    Eigen::VectorXd v = llt.solve(rhs);

    double rhs_norm = rhs.norm();
    double rel = 0.0;
    if (rhs_norm > 0) {
        rel = (G * v - rhs).norm() / rhs_norm;
        if (rel > 1e-10)
            throw NumericError("linear solve residual " + format_double(rel) +
                               " exceeds 1e-10");
    }
    if (rel_residual_out) *rel_residual_out = rel;

    Vector drops_mv(n);
    for (int i = 0; i < n; ++i) {
        double vi = is_pad[i] ? vdd_v : v(free_idx[i]);
        drops_mv(i) = (vdd_v - vi) * 1000.0;
        if (drops_mv(i) < -1e-9 || drops_mv(i) > grid.vdd_mv)
            throw NumericError("node " + std::to_string(i) + " drop " +
                               format_double(drops_mv(i)) + " mV outside [0, VDD]");
    }
    return drops_mv;
}

Dataset derive_net_records(const PdnGrid& grid, const std::vector<CellLoad>& loads,
                           const Vector& drops_mv) {
    if (drops_mv.size() != grid.n_nodes())
        throw ValidationError("drop vector length does not match grid");

    auto hops = hops_to_nearest_pad(grid);
    Dataset ds;
    ds.vdd_mv = grid.vdd_mv;
    ds.provenance = "synthetic";

    std::int64_t next_id = 0;
    for (const auto& l : loads) {
        auto [r, c] = grid.node_rc(l.grid_node);
        NetRecord rec;
        rec.net_id = next_id++;
        rec.x_um = c * grid.pitch_um;
        rec.y_um = r * grid.pitch_um;
        rec.resistance_ohm = std::max(1, hops[l.grid_node]) * grid.seg_resistance_ohm;
        rec.p_total_w = (grid.vdd_mv / 1000.0) * l.i_avg_a;
        rec.i_peak_a = l.i_peak_a;
        rec.i_avg_a = l.i_avg_a;
        rec.t_rise_s = l.t_rise_s;
        rec.t_fall_s = l.t_fall_s;
        rec.tau_s = l.tau_s;
        rec.ir_drop_mv = std::max(0.0, drops_mv(l.grid_node));
        ds.records.push_back(rec);
    }
    ds.validate();
    return ds;
}

}  // namespace irgrid
