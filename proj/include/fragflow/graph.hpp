#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fragflow/random.hpp"
#include "fragflow/state.hpp"

namespace fragflow {

// Node-and-edge labelled graph. Label 0 is reserved: kDummy for nodes,
// kNoBond for edges. Only the strict upper triangle of the edge matrix is
// stored; the mirror is derived, so symmetry and a NO-BOND diagonal hold by
// construction.
class AttributedGraph {
 public:
  static constexpr int32_t kDummy = 0;
  static constexpr int32_t kNoBond = 0;

  AttributedGraph(int n, int node_vocab, int edge_vocab);

  int node_count() const { return n_; }
  int node_vocab() const { return node_vocab_; }
  int edge_vocab() const { return edge_vocab_; }

  int32_t node_label(int i) const { return nodes_[i]; }
  void set_node_label(int i, int32_t v);

  int32_t edge_label(int i, int j) const {
    if (i == j) return kNoBond;
    return upper_[tri_index(i, j)];
  }
  void set_edge_label(int i, int j, int32_t v);

  // Number of incident non-NO-BOND edges.
  int degree(int i) const;

  // Count of non-NO-BOND edges in the upper triangle.
  int bond_count() const;

  const std::vector<int32_t>& node_labels() const { return nodes_; }
  const std::vector<int32_t>& upper_triangle() const { return upper_; }

  friend bool operator==(const AttributedGraph&, const AttributedGraph&) = default;

 private:
  size_t tri_index(int i, int j) const;

  int n_;
  int node_vocab_;
  int edge_vocab_;
  std::vector<int32_t> nodes_;
  std::vector<int32_t> upper_;
};

using Permutation = std::vector<int>;

// Appends `count` DUMMY nodes with all-NO-BOND incident edges.
AttributedGraph pad_with_dummies(const AttributedGraph& g, int count);

// Relabels nodes: result.node(perm[i]) = g.node(i). perm must be a bijection.
AttributedGraph apply_permutation(const AttributedGraph& g, const Permutation& perm);

// Uniform random relabelling; returns the permutation so paired graphs can be
// permuted consistently.
std::pair<AttributedGraph, Permutation> permute_nodes(const AttributedGraph& g,
                                                      RandomStream& rng);

// Permutation-invariant byte serialization: the lexicographically minimal
// label encoding over all node orders, found by branch-and-bound. Two graphs
// have equal canonical forms iff they are isomorphic as labelled graphs.
// Limited to n <= 16.
std::string canonical_form(const AttributedGraph& g);

constexpr int kCanonicalMaxNodes = 16;

// Removes nodes that are still DUMMY-labelled and have no incident bonds.
AttributedGraph strip_unused_dummies(const AttributedGraph& g);

FlatState flatten(const AttributedGraph& g);
AttributedGraph unflatten(const FlatState& s);

// Graph JSON schema: {"n": int, "node_labels": [int...],
// "edges": [[i, j, label]...]} with only i<j entries whose label is not
// NO-BOND, sorted by (i, j). Vocabulary sizes travel out of band.
std::string graph_to_json(const AttributedGraph& g);
AttributedGraph graph_from_json(const std::string& text, int node_vocab, int edge_vocab);

}  // namespace fragflow
