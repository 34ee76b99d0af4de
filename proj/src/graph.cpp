#include "irgrid/graph.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace irgrid {

double manhattan(double x1, double y1, double x2, double y2) {
    return std::abs(x1 - x2) + std::abs(y1 - y2);
}

CircuitGraph build_graph(const Matrix& features, const std::vector<double>& xs,
                         const std::vector<double>& ys,
                         const std::vector<std::int64_t>& ids, double threshold_um,
                         const Vector& labels_mv) {
    if (threshold_um <= 0) throw ValidationError("graph threshold must be positive");
    const int n = static_cast<int>(xs.size());
    if (static_cast<int>(ys.size()) != n || features.rows() != n ||
        static_cast<int>(ids.size()) != n)
        throw ValidationError("build_graph: coordinate/feature/id length mismatch");
    if (labels_mv.size() != 0 && labels_mv.size() != n)
        throw ValidationError("build_graph: label length mismatch");

    CircuitGraph g;
    g.n_nodes = n;
    g.X = features;
    g.labels_mv = labels_mv;
    g.node_ids = ids;
    g.threshold_um = threshold_um;

    for (int u = 0; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) {
            double d = manhattan(xs[u], ys[u], xs[v], ys[v]);
            if (d <= threshold_um) {
                g.edge_list.emplace_back(u, v);
                g.edge_dist_um.push_back(d);
                g.edge_feat.push_back(d / threshold_um);
            }
        }
    }
    return g;
}

std::vector<int> node_degrees(const CircuitGraph& g) {
    std::vector<int> deg(g.n_nodes, 0);
    for (auto [u, v] : g.edge_list) {
        ++deg[u];
        ++deg[v];
    }
    return deg;
}

DegreeRank degree_rank(const CircuitGraph& g) {
    DegreeRank dr;
    dr.threshold_um = g.threshold_um;
    dr.degrees = node_degrees(g);
    std::sort(dr.degrees.begin(), dr.degrees.end(), std::greater<int>());
    return dr;
}

Eigen::SparseMatrix<double> normalized_adjacency(const CircuitGraph& g) {
    const int n = g.n_nodes;
    Eigen::VectorXd deg = Eigen::VectorXd::Ones(n);  // self-loops
    for (auto [u, v] : g.edge_list) {
        deg(u) += 1.0;
        deg(v) += 1.0;
    }
    Eigen::VectorXd dinv_sqrt = deg.array().rsqrt();

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * g.edge_list.size() + n);
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, dinv_sqrt(i) * dinv_sqrt(i));
    for (auto [u, v] : g.edge_list) {
        double w = dinv_sqrt(u) * dinv_sqrt(v);
        trip.emplace_back(u, v, w);
        trip.emplace_back(v, u, w);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

std::string CircuitGraph::to_json() const {
    nlohmann::json j;
    j["n_nodes"] = n_nodes;
    j["threshold_um"] = threshold_um;
    j["node_ids"] = node_ids;
    auto& edges = j["edges"] = nlohmann::json::array();
    for (std::size_t e = 0; e < edge_list.size(); ++e)
        edges.push_back({edge_list[e].first, edge_list[e].second, edge_dist_um[e]});
    return j.dump(2);
}

}  // namespace irgrid
