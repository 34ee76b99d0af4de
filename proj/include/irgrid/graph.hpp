#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "irgrid/common.hpp"

namespace irgrid {

// Net-proximity graph: nodes are nets, an undirected edge joins every pair
// within the Manhattan-distance threshold, the distance is the edge feature.
struct CircuitGraph {
    int n_nodes = 0;
    Matrix X;  // node features (post-preprocess)
    std::vector<std::pair<int, int>> edge_list;  // u < v, sorted
    std::vector<double> edge_dist_um;
    std::vector<double> edge_feat;  // dist / threshold, in (0, 1]
    Vector labels_mv;               // empty when unlabeled
    std::vector<std::int64_t> node_ids;
    double threshold_um = 0.0;

    bool has_labels() const { return labels_mv.size() == n_nodes && n_nodes > 0; }
    std::string to_json() const;
};

struct DegreeRank {
    std::vector<int> degrees;  // descending
    double threshold_um = 0.0;
};

double manhattan(double x1, double y1, double x2, double y2);

// Brute-force pairwise construction; fine at desk scale.
CircuitGraph build_graph(const Matrix& features, const std::vector<double>& xs,
                         const std::vector<double>& ys,
                         const std::vector<std::int64_t>& ids, double threshold_um,
                         const Vector& labels_mv = {});

DegreeRank degree_rank(const CircuitGraph& g);

std::vector<int> node_degrees(const CircuitGraph& g);

// D^(-1/2) (A + I) D^(-1/2), symmetric, used by the GCN aggregation.
Eigen::SparseMatrix<double> normalized_adjacency(const CircuitGraph& g);

}  // namespace irgrid
