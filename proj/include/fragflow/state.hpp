#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fragflow {

// Dimension layout of a flattened state: node dims first (each over the node
// vocabulary), then edge dims (each over the edge vocabulary). A state is
// "graph shaped" when the edge dims are exactly the upper triangle of an
// n-node graph; test fixtures also use free layouts (e.g. 3 node dims, no
// edges).
struct StateLayout {
  int32_t node_dims = 0;
  int32_t edge_dims = 0;
  int32_t node_vocab = 1;
  int32_t edge_vocab = 1;

  int32_t dims() const { return node_dims + edge_dims; }
  bool is_edge_dim(int32_t d) const { return d >= node_dims; }
  int32_t vocab_of(int32_t d) const { return is_edge_dim(d) ? edge_vocab : node_vocab; }
  bool graph_shaped() const {
    return static_cast<int64_t>(edge_dims) * 2 ==
           static_cast<int64_t>(node_dims) * (node_dims - 1);
  }

  friend bool operator==(const StateLayout&, const StateLayout&) = default;
};

struct FlatState {
  StateLayout layout;
  std::vector<int32_t> tokens;

  friend bool operator==(const FlatState&, const FlatState&) = default;
};

inline void check_same_layout(const FlatState& a, const FlatState& b, const char* where) {
  if (a.layout != b.layout || a.tokens.size() != b.tokens.size())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

}  // namespace fragflow
