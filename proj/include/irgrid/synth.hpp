#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "irgrid/common.hpp"
#include "irgrid/dataset.hpp"

namespace irgrid {

// Rectangular resistor-grid power mesh. Nodes are indexed row-major; pad
// nodes are clamped to VDD.
struct PdnGrid {
    int rows = 0;
    int cols = 0;
    double pitch_um = 1.5;
    double seg_resistance_ohm = 1.0;
    std::vector<int> pad_nodes;
    double vdd_mv = 800.0;

    int n_nodes() const { return rows * cols; }
    int node_index(int r, int c) const { return r * cols + c; }
    std::pair<int, int> node_rc(int idx) const { return {idx / cols, idx % cols}; }

    void validate() const;
};

struct CellLoad {
    int grid_node = 0;
    double i_avg_a = 0.0;
    double i_peak_a = 0.0;
    int window = 0;  // switching interval index in [0, 20)
    double t_rise_s = 0.0;
    double t_fall_s = 0.0;
    double tau_s = 0.0;
};

struct SynthConfig {
    std::uint64_t seed = 1;
    int rows = 16;
    int cols = 16;
    double pitch_um = 1.5;
    double seg_resistance_ohm = 0.5;
    int n_cells = 100;
    double vdd_mv = 800.0;
    double i_avg_min_a = 1e-4;
    double i_avg_max_a = 2e-3;
    double peak_ratio_max = 4.0;  // i_peak in [i_avg, i_avg*peak_ratio_max]
    double t_rise_max_s = 2e-10;
    double t_fall_max_s = 2e-10;
    double tau_max_s = 5e-10;
    // 0: pads at the four corners only; k > 0: pad lattice at every k-th
    // row/column intersection (denser pads localize the drop field).
    int pad_spacing = 0;
    // Strength with which timing features modulate the effective load used
    // for ground truth; 0 means timing carries no label signal.
    double kappa = 0.0;

    void validate() const;
};

struct SynthCircuit {
    PdnGrid grid;
    std::vector<CellLoad> loads;
};

// Deterministic per seed. Loads land on distinct non-pad nodes.
SynthCircuit generate_circuit(const SynthConfig& config);

// Effective current injected at a load's node for the static ground-truth
// solve: i_avg * (1 + kappa * f), with f the monotone timing mix in [0,1]:
// f = (t_rise/t_rise_max + t_fall/t_fall_max + tau/tau_max) / 3.
double effective_current_a(const CellLoad& load, const SynthConfig& config);

// Nodal analysis on the grid Laplacian with pads eliminated at VDD.
// Returns per-node drop VDD - v in mV. SPD solve, relative residual <= 1e-10.
Vector solve_ir_drop(const PdnGrid& grid, const std::vector<CellLoad>& loads,
                     const std::vector<double>* node_current_a = nullptr,
                     double* rel_residual_out = nullptr);

// Per-load injected currents (effective, kappa applied) as a node vector.
std::vector<double> node_currents(const PdnGrid& grid, const std::vector<CellLoad>& loads,
                                  const SynthConfig& config);

// One NetRecord per load. Resistance proxy: Manhattan hop count to the
// nearest pad times the segment resistance.
Dataset derive_net_records(const PdnGrid& grid, const std::vector<CellLoad>& loads,
                           const Vector& drops_mv);

// Hop distance (in grid segments) from every node to its nearest pad.
std::vector<int> hops_to_nearest_pad(const PdnGrid& grid);

}  // namespace irgrid
