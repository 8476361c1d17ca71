#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fragflow/graph.hpp"

namespace fragflow {

// 0/1 symmetric adjacency with zero diagonal; any non-NO-BOND edge maps to 1.
class BinaryAdjacency {
 public:
  explicit BinaryAdjacency(const AttributedGraph& g);
  BinaryAdjacency(int n, const std::vector<std::pair<int, int>>& edges);

  int size() const { return n_; }
  int at(int i, int j) const { return a_[static_cast<size_t>(i) * n_ + j]; }
  void set(int i, int j);

  static constexpr int kMaxNodes = 64;

 private:
  int n_;
  std::vector<int64_t> a_;
};

struct CycleNodeFeatures {
  std::vector<int64_t> x3, x4, x5;  // cycles of length 3/4/5 through each node
};

struct CycleGraphFeatures {
  int64_t y3 = 0, y4 = 0, y5 = 0, y6 = 0;  // total simple cycles by length
};

// Closed-form counts via adjacency-matrix powers, exact in integer
// arithmetic. Each division is checked for zero remainder; a nonzero
// remainder means the implementation is broken and throws.
CycleNodeFeatures cycle_node_features(const BinaryAdjacency& a);
CycleGraphFeatures cycle_graph_features(const BinaryAdjacency& a);

// Exact component count treating any non-NO-BOND edge as adjacency.
// Component ids are assigned in first-seen node order.
std::pair<int, std::vector<int>> connected_components(const AttributedGraph& g);

}  // namespace fragflow
