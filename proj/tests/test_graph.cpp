#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "irgrid/graph.hpp"

using namespace irgrid;

namespace {

struct Points {
    std::vector<double> xs, ys;
    std::vector<std::int64_t> ids;
    Matrix X;
};

Points random_points(int n, std::mt19937_64& rng, double extent = 10.0) {
    Points p;
    std::uniform_real_distribution<double> u(0.0, extent);
    p.X = Matrix::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        p.xs.push_back(u(rng));
        p.ys.push_back(u(rng));
        p.ids.push_back(i);
        p.X(i, 0) = p.xs[i];
        p.X(i, 1) = p.ys[i];
    }
    return p;
}

std::set<std::pair<int, int>> brute_force_edges(const Points& p, double thr) {
    std::set<std::pair<int, int>> edges;
    int n = static_cast<int>(p.xs.size());
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (u < v && manhattan(p.xs[u], p.ys[u], p.xs[v], p.ys[v]) <= thr)
                edges.insert({u, v});
    return edges;
}

std::set<std::pair<int, int>> edge_set(const CircuitGraph& g) {
    return {g.edge_list.begin(), g.edge_list.end()};
}

}  // namespace

TEST_CASE("manhattan distance") {
    CHECK(manhattan(0, 0, 3, 4) == doctest::Approx(7.0));
    CHECK(manhattan(1.5, 2.5, 1.5, 2.5) == doctest::Approx(0.0));
    CHECK(manhattan(0.3, 0.7, 0.5, 0.1) == doctest::Approx(0.8));
    CHECK(manhattan(1, 2, 3, 4) == manhattan(3, 4, 1, 2));
}

TEST_CASE("build_graph thresholds pairwise distances") {
    Points p;
    p.xs = {0, 0, 5};
    p.ys = {0, 2, 5};
    p.ids = {0, 1, 2};
    p.X = Matrix::Zero(3, 1);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 3.0);
    REQUIRE(g.edge_list.size() == 1);
    CHECK(g.edge_list[0] == std::pair<int, int>{0, 1});
    CHECK(g.edge_dist_um[0] == doctest::Approx(2.0));
    CHECK(g.edge_feat[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("tiny threshold yields no edges, huge threshold the complete graph") {
    std::mt19937_64 rng(1);
    auto p = random_points(8, rng);
    auto empty = build_graph(p.X, p.xs, p.ys, p.ids, 1e-9);
    CHECK(empty.edge_list.empty());
    auto full = build_graph(p.X, p.xs, p.ys, p.ids, 1e9);
    CHECK(full.edge_list.size() == 8 * 7 / 2);
}

TEST_CASE("threshold must be positive") {
    std::mt19937_64 rng(2);
    auto p = random_points(3, rng);
    CHECK_THROWS_AS(build_graph(p.X, p.xs, p.ys, p.ids, 0.0), ValidationError);
}

TEST_CASE("edge set equals brute force on 100 random instances") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 2 + static_cast<int>(rng() % 199);
        auto p = random_points(n, rng);
        double thr = 0.5 + 5.0 * (rng() % 1000) / 1000.0;
        auto g = build_graph(p.X, p.xs, p.ys, p.ids, thr);
        CHECK(edge_set(g) == brute_force_edges(p, thr));
    }
}

TEST_CASE("edge sets grow monotonically with the threshold") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        auto p = random_points(40, rng);
        double t1 = 1.0 + (rng() % 100) / 50.0;
        double t2 = t1 + (rng() % 100) / 50.0;
        auto e1 = edge_set(build_graph(p.X, p.xs, p.ys, p.ids, t1));
        auto e2 = edge_set(build_graph(p.X, p.xs, p.ys, p.ids, t2));
        CHECK(std::includes(e2.begin(), e2.end(), e1.begin(), e1.end()));
    }
}

TEST_CASE("degree_rank on a path graph is [2,1,1]") {
    Points p;
    p.xs = {0, 1, 2};
    p.ys = {0, 0, 0};
    p.ids = {0, 1, 2};
    p.X = Matrix::Zero(3, 1);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 1.0);
    auto dr = degree_rank(g);
    CHECK(dr.degrees == std::vector<int>{2, 1, 1});
}

TEST_CASE("degree_rank of an empty edge set is all zeros") {
    std::mt19937_64 rng(3);
    auto p = random_points(5, rng);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 1e-9);
    auto dr = degree_rank(g);
    CHECK(dr.degrees == std::vector<int>(5, 0));
}

TEST_CASE("degree_rank of K4 is [3,3,3,3] and sums to 2|E|") {
    Points p;
    p.xs = {0, 0.1, 0.2, 0.3};
    p.ys = {0, 0, 0, 0};
    p.ids = {0, 1, 2, 3};
    p.X = Matrix::Zero(4, 1);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 10.0);
    auto dr = degree_rank(g);
    CHECK(dr.degrees == std::vector<int>{3, 3, 3, 3});
    int sum = 0;
    for (int d : dr.degrees) sum += d;
    CHECK(sum == 2 * static_cast<int>(g.edge_list.size()));
}

TEST_CASE("degree sum equals 2|E| on random graphs") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_points(30, rng);
        auto g = build_graph(p.X, p.xs, p.ys, p.ids, 3.0);
        auto dr = degree_rank(g);
        int sum = 0;
        for (int d : dr.degrees) sum += d;
        CHECK(sum == 2 * static_cast<int>(g.edge_list.size()));
        CHECK(std::is_sorted(dr.degrees.begin(), dr.degrees.end(), std::greater<int>()));
    }
}

TEST_CASE("normalized adjacency: single node is [1]") {
    Points p;
    p.xs = {0};
    p.ys = {0};
    p.ids = {0};
    p.X = Matrix::Zero(1, 1);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 1.0);
    Matrix a = Matrix(normalized_adjacency(g));
    CHECK(a(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("normalized adjacency: two connected nodes give all 0.5") {
    Points p;
    p.xs = {0, 1};
    p.ys = {0, 0};
    p.ids = {0, 1};
    p.X = Matrix::Zero(2, 1);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 2.0);
    Matrix a = Matrix(normalized_adjacency(g));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(a(i, j) == doctest::Approx(0.5));
}

TEST_CASE("normalized adjacency equals dense reference on a random 5-node graph") {
    std::mt19937_64 rng(21);
    auto p = random_points(5, rng, 3.0);
    auto g = build_graph(p.X, p.xs, p.ys, p.ids, 3.0);
    Matrix A = Matrix::Identity(5, 5);
    for (auto [u, v] : g.edge_list) {
        A(u, v) = 1.0;
        A(v, u) = 1.0;
    }
    Vector d = A.rowwise().sum();
    Matrix Dinv = d.array().rsqrt().matrix().asDiagonal();
    Matrix ref = Dinv * A * Dinv;
    Matrix got = Matrix(normalized_adjacency(g));
    CHECK((got - ref).norm() < 1e-12);
    CHECK((got - got.transpose()).norm() < 1e-12);
}

TEST_CASE("graph is invariant under record permutation up to relabeling") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = random_points(12, rng);
        auto g = build_graph(p.X, p.xs, p.ys, p.ids, 4.0);

        std::vector<int> perm(12);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Points q;
        q.X = Matrix::Zero(12, 2);
        for (int i = 0; i < 12; ++i) {
            q.xs.push_back(p.xs[perm[i]]);
            q.ys.push_back(p.ys[perm[i]]);
            q.ids.push_back(p.ids[perm[i]]);
            q.X.row(i) = p.X.row(perm[i]);
        }
        auto h = build_graph(q.X, q.xs, q.ys, q.ids, 4.0);

        // map h's edges back through the permutation and compare
        std::set<std::pair<int, int>> mapped;
        for (auto [u, v] : h.edge_list) {
            int a = perm[u], b = perm[v];
            mapped.insert({std::min(a, b), std::max(a, b)});
        }
        CHECK(mapped == edge_set(g));
    }
}
