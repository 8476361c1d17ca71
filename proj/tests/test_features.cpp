#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fragflow/features.hpp"
#include "fragflow/random.hpp"

using namespace fragflow;

namespace {

// brute-force simple-cycle enumeration: walks every injective closed path
bool next_k_permutation(std::vector<int>& sel, int n, int k) {
  // iterate ordered k-tuples of distinct values via odometer with dedup
  while (true) {
    int pos = k - 1;
    while (pos >= 0 && sel[pos] == n - 1) sel[pos--] = 0;
    if (pos < 0) return false;
    sel[pos]++;
    bool distinct = true;
    for (int i = 0; i < k && distinct; ++i)
      for (int j = i + 1; j < k; ++j)
        if (sel[i] == sel[j]) {
          distinct = false;
          break;
        }
    if (distinct) return true;
  }
}

std::vector<int64_t> brute_cycles_per_node(const BinaryAdjacency& a, int k) {
  const int n = a.size();
  std::vector<int64_t> out(n, 0);
  if (n < k) return out;
  std::vector<int> sel(k, 0);
  sel.back() = -1;  // so the first advance starts the odometer at all-zero
  while (next_k_permutation(sel, n, k)) {
    if (sel[0] != *std::min_element(sel.begin(), sel.end())) continue;
    bool cycle = true;
    for (int i = 0; i < k && cycle; ++i) cycle = a.at(sel[i], sel[(i + 1) % k]) != 0;
    if (cycle)
      for (int v : sel) out[v]++;
  }
  for (auto& v : out) v /= 2;  // two orientations per cycle
  return out;
}

int64_t brute_cycles(const BinaryAdjacency& a, int k) {
  auto per_node = brute_cycles_per_node(a, k);
  int64_t total = std::accumulate(per_node.begin(), per_node.end(), int64_t{0});
  return total / k;
}

BinaryAdjacency ring(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.push_back({i, (i + 1) % n});
  return BinaryAdjacency(n, e);
}

BinaryAdjacency random_adjacency(int n, double p, RandomStream& rng) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.next_double() < p) e.push_back({i, j});
  return BinaryAdjacency(n, e);
}

void check_against_brute(const BinaryAdjacency& a) {
  CycleNodeFeatures nf = cycle_node_features(a);
  CHECK(nf.x3 == brute_cycles_per_node(a, 3));
  CHECK(nf.x4 == brute_cycles_per_node(a, 4));
  CHECK(nf.x5 == brute_cycles_per_node(a, 5));
  CycleGraphFeatures gf = cycle_graph_features(a);
  CHECK(gf.y3 == brute_cycles(a, 3));
  CHECK(gf.y4 == brute_cycles(a, 4));
  CHECK(gf.y5 == brute_cycles(a, 5));
  CHECK(gf.y6 == brute_cycles(a, 6));
}

}  // namespace

TEST_CASE("triangle") {
  BinaryAdjacency k3(3, {{0, 1}, {1, 2}, {0, 2}});
  CycleNodeFeatures nf = cycle_node_features(k3);
  CHECK(nf.x3 == std::vector<int64_t>{1, 1, 1});
  CycleGraphFeatures gf = cycle_graph_features(k3);
  CHECK(gf.y3 == 1);
  CHECK(gf.y4 == 0);
  CHECK(gf.y5 == 0);
  CHECK(gf.y6 == 0);
}

TEST_CASE("four cycle") {
  BinaryAdjacency c4 = ring(4);
  CycleNodeFeatures nf = cycle_node_features(c4);
  CHECK(nf.x4 == std::vector<int64_t>{1, 1, 1, 1});
  CHECK(cycle_graph_features(c4).y4 == 1);
}

TEST_CASE("five and six cycles") {
  CHECK(cycle_graph_features(ring(5)).y5 == 1);
  CycleGraphFeatures c6 = cycle_graph_features(ring(6));
  CHECK(c6.y3 == 0);
  CHECK(c6.y4 == 0);
  CHECK(c6.y5 == 0);
  CHECK(c6.y6 == 1);
}

TEST_CASE("trees have no cycles") {
  BinaryAdjacency star(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}});
  CycleNodeFeatures nf = cycle_node_features(star);
  for (int i = 0; i < 6; ++i) {
    CHECK(nf.x3[i] == 0);
    CHECK(nf.x4[i] == 0);
    CHECK(nf.x5[i] == 0);
  }
  CycleGraphFeatures gf = cycle_graph_features(star);
  CHECK(gf.y3 == 0);
  CHECK(gf.y4 == 0);
  CHECK(gf.y5 == 0);
  CHECK(gf.y6 == 0);
}

TEST_CASE("all graphs up to n = 5, exhaustively") {
  for (int n = 1; n <= 5; ++n) {
    const int m = n * (n - 1) / 2;
    for (int mask = 0; mask < (1 << m); ++mask) {
      std::vector<std::pair<int, int>> edges;
      int bit = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++bit)
          if (mask & (1 << bit)) edges.push_back({i, j});
      check_against_brute(BinaryAdjacency(n, edges));
    }
  }
}

TEST_CASE("random graphs with n <= 7 match brute force") {
  RandomStream rng(31, 0);
  for (int rep = 0; rep < 200; ++rep) {
    int n = 3 + static_cast<int>(rng.next_below(5));
    double p = 0.15 + 0.75 * rng.next_double();
    check_against_brute(random_adjacency(n, p, rng));
  }
}

TEST_CASE("features are equivariant under node permutation") {
  RandomStream rng(32, 0);
  for (int rep = 0; rep < 20; ++rep) {
    int n = 4 + static_cast<int>(rng.next_below(4));
    AttributedGraph g(n, 3, 2);
    for (int i = 0; i < n; ++i) g.set_node_label(i, 1);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.next_double() < 0.5) g.set_edge_label(i, j, 1);
    auto [pg, perm] = permute_nodes(g, rng);
    CycleNodeFeatures a = cycle_node_features(BinaryAdjacency(g));
    CycleNodeFeatures b = cycle_node_features(BinaryAdjacency(pg));
    for (int i = 0; i < n; ++i) {
      CHECK(a.x3[i] == b.x3[perm[i]]);
      CHECK(a.x4[i] == b.x4[perm[i]]);
      CHECK(a.x5[i] == b.x5[perm[i]]);
    }
  }
}

TEST_CASE("feature values are non-negative") {
  RandomStream rng(33, 0);
  for (int rep = 0; rep < 50; ++rep) {
    int n = 3 + static_cast<int>(rng.next_below(5));
    BinaryAdjacency a = random_adjacency(n, 0.6, rng);
    CycleNodeFeatures nf = cycle_node_features(a);
    for (int i = 0; i < n; ++i) {
      CHECK(nf.x3[i] >= 0);
      CHECK(nf.x4[i] >= 0);
      CHECK(nf.x5[i] >= 0);
    }
    CycleGraphFeatures gf = cycle_graph_features(a);
    CHECK(gf.y3 >= 0);
    CHECK(gf.y4 >= 0);
    CHECK(gf.y5 >= 0);
    CHECK(gf.y6 >= 0);
  }
}

TEST_CASE("connected components") {
  AttributedGraph edgeless(4, 3, 2);
  auto [c1, l1] = connected_components(edgeless);
  CHECK(c1 == 4);
  CHECK(l1 == std::vector<int>{0, 1, 2, 3});

  AttributedGraph path(4, 3, 2);
  path.set_edge_label(0, 1, 1);
  path.set_edge_label(1, 2, 1);
  path.set_edge_label(2, 3, 1);
  CHECK(connected_components(path).first == 1);

  // removing a bridge splits into two components matching reachability
  path.set_edge_label(1, 2, AttributedGraph::kNoBond);
  auto [c2, l2] = connected_components(path);
  CHECK(c2 == 2);
  CHECK(l2[0] == l2[1]);
  CHECK(l2[2] == l2[3]);
  CHECK(l2[0] != l2[2]);
}

TEST_CASE("size bound enforced") {
  CHECK_THROWS_AS(BinaryAdjacency(65, {}), std::invalid_argument);
}
