#include "fragflow/graph.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace fragflow {

AttributedGraph::AttributedGraph(int n, int node_vocab, int edge_vocab)
    : n_(n),
      node_vocab_(node_vocab),
      edge_vocab_(edge_vocab),
      nodes_(static_cast<size_t>(n), kDummy),
      upper_(static_cast<size_t>(n) * (n - 1) / 2, kNoBond) {
  if (n < 1) throw std::invalid_argument("AttributedGraph: need at least one node");
  if (node_vocab < 1 || edge_vocab < 1)
    throw std::invalid_argument("AttributedGraph: vocabularies must be positive");
}

size_t AttributedGraph::tri_index(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= n_ || i == j)
    throw std::out_of_range("AttributedGraph: bad edge index");
  // row-major upper triangle: (i,j), i<j
  return static_cast<size_t>(i) * (2 * n_ - i - 1) / 2 + (j - i - 1);
}

void AttributedGraph::set_node_label(int i, int32_t v) {
  if (v < 0 || v >= node_vocab_)
    throw std::out_of_range("AttributedGraph: node label out of vocabulary");
  nodes_.at(i) = v;
}

void AttributedGraph::set_edge_label(int i, int j, int32_t v) {
  if (v < 0 || v >= edge_vocab_)
    throw std::out_of_range("AttributedGraph: edge label out of vocabulary");
  if (i == j) throw std::invalid_argument("AttributedGraph: self-edges are fixed NO-BOND");
  upper_[tri_index(i, j)] = v;
}

int AttributedGraph::degree(int i) const {
  int d = 0;
  for (int j = 0; j < n_; ++j)
    if (j != i && edge_label(i, j) != kNoBond) ++d;
  return d;
}

int AttributedGraph::bond_count() const {
  int c = 0;
  for (int32_t e : upper_)
    if (e != kNoBond) ++c;
  return c;
}

AttributedGraph pad_with_dummies(const AttributedGraph& g, int count) {
  if (count < 0) throw std::invalid_argument("pad_with_dummies: negative count");
  if (count == 0) return g;
  AttributedGraph out(g.node_count() + count, g.node_vocab(), g.edge_vocab());
  for (int i = 0; i < g.node_count(); ++i) out.set_node_label(i, g.node_label(i));
  for (int i = 0; i < g.node_count(); ++i)
    for (int j = i + 1; j < g.node_count(); ++j)
      out.set_edge_label(i, j, g.edge_label(i, j));
  return out;
}

AttributedGraph apply_permutation(const AttributedGraph& g, const Permutation& perm) {
  const int n = g.node_count();
  if (static_cast<int>(perm.size()) != n)
    throw std::invalid_argument("apply_permutation: size mismatch");
  std::vector<bool> seen(n, false);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p])
      throw std::invalid_argument("apply_permutation: not a permutation");
    seen[p] = true;
  }
  AttributedGraph out(n, g.node_vocab(), g.edge_vocab());
  for (int i = 0; i < n; ++i) out.set_node_label(perm[i], g.node_label(i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      int32_t e = g.edge_label(i, j);
      if (e != AttributedGraph::kNoBond) out.set_edge_label(perm[i], perm[j], e);
    }
  return out;
}

std::pair<AttributedGraph, Permutation> permute_nodes(const AttributedGraph& g,
                                                      RandomStream& rng) {
  const int n = g.node_count();
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  return {apply_permutation(g, perm), perm};
}

namespace {

// Encoding used by the canonical search: for each position k in the chosen
// order, the node label followed by the edge labels to all earlier positions.
// This interleaves (v, upper-triangular E) into a prefix-extendable string.

// Two nodes are twins when swapping them is an automorphism: same label and
// identical edge rows outside the pair. Twin classes collapse the search over
// interchangeable nodes (e.g. blocks of padding dummies).
std::vector<int> twin_classes(const AttributedGraph& g) {
  const int n = g.node_count();
  std::vector<int> cls(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (cls[i] >= 0) continue;
    cls[i] = next;
    for (int j = i + 1; j < n; ++j) {
      if (cls[j] >= 0 || g.node_label(i) != g.node_label(j)) continue;
      bool twin = true;
      for (int w = 0; w < n && twin; ++w) {
        if (w == i || w == j) continue;
        twin = g.edge_label(i, w) == g.edge_label(j, w);
      }
      if (twin) cls[j] = next;
    }
    ++next;
  }
  return cls;
}

struct CanonicalSearch {
  const AttributedGraph& g;
  int n;
  std::vector<int> twins;
  std::vector<int> order;        // chosen positions so far
  std::vector<bool> used;
  std::string current;
  std::string best;
  bool have_best = false;

  explicit CanonicalSearch(const AttributedGraph& graph)
      : g(graph), n(graph.node_count()), twins(twin_classes(graph)), used(n, false) {
    order.reserve(n);
    current.reserve(n + n * (n - 1) / 2);
  }

  std::string segment_for(int u) const {
    std::string seg;
    seg.reserve(order.size() + 1);
    seg.push_back(static_cast<char>(g.node_label(u)));
    for (int p : order) seg.push_back(static_cast<char>(g.edge_label(p, u)));
    return seg;
  }

  // cmp: -1 current prefix already < best, 0 still equal.
  void dfs(int cmp) {
    if (static_cast<int>(order.size()) == n) {
      if (!have_best || cmp < 0) {
        best = current;
        have_best = true;
      }
      return;
    }
    // candidates achieving the minimal next segment
    std::string min_seg;
    std::vector<int> cands;
    for (int u = 0; u < n; ++u) {
      if (used[u]) continue;
      std::string seg = segment_for(u);
      if (cands.empty() || seg < min_seg) {
        min_seg = std::move(seg);
        cands.assign(1, u);
      } else if (seg == min_seg) {
        cands.push_back(u);
      }
    }
    // prune against best using the forced minimal segment
    int next_cmp = cmp;
    if (next_cmp == 0 && have_best) {
      size_t pos = current.size();
      for (size_t k = 0; k < min_seg.size(); ++k) {
        char b = best[pos + k];
        if (min_seg[k] < b) {
          next_cmp = -1;
          break;
        }
        if (min_seg[k] > b) return;  // strictly worse than best
      }
    }
    std::vector<int> seen_twin;
    for (int u : cands) {
      bool dup = false;
      for (int t : seen_twin)
        if (t == twins[u]) {
          dup = true;
          break;
        }
      if (dup) continue;
      seen_twin.push_back(twins[u]);

      used[u] = true;
      order.push_back(u);
      size_t mark = current.size();
      current += min_seg;
      dfs(next_cmp);
      current.resize(mark);
      order.pop_back();
      used[u] = false;
    }
  }
};

}  // namespace

std::string canonical_form(const AttributedGraph& g) {
  if (g.node_count() > kCanonicalMaxNodes)
    throw std::invalid_argument("canonical_form: graph exceeds node bound");
  CanonicalSearch search(g);
  search.dfs(0);
  // prepend the size so strings of different orders never collide
  std::string out;
  out.push_back(static_cast<char>(g.node_count()));
  out += search.best;
  return out;
}

AttributedGraph strip_unused_dummies(const AttributedGraph& g) {
  std::vector<int> keep;
  for (int i = 0; i < g.node_count(); ++i)
    if (g.node_label(i) != AttributedGraph::kDummy || g.degree(i) > 0) keep.push_back(i);
  if (keep.empty()) keep.push_back(0);  // a graph needs at least one node
  if (static_cast<int>(keep.size()) == g.node_count()) return g;
  AttributedGraph out(static_cast<int>(keep.size()), g.node_vocab(), g.edge_vocab());
  for (size_t a = 0; a < keep.size(); ++a) out.set_node_label(static_cast<int>(a), g.node_label(keep[a]));
  for (size_t a = 0; a < keep.size(); ++a)
    for (size_t b = a + 1; b < keep.size(); ++b) {
      int32_t e = g.edge_label(keep[a], keep[b]);
      if (e != AttributedGraph::kNoBond)
        out.set_edge_label(static_cast<int>(a), static_cast<int>(b), e);
    }
  return out;
}

FlatState flatten(const AttributedGraph& g) {
  FlatState s;
  const int n = g.node_count();
  s.layout = StateLayout{n, n * (n - 1) / 2, g.node_vocab(), g.edge_vocab()};
  s.tokens.reserve(s.layout.dims());
  for (int i = 0; i < n; ++i) s.tokens.push_back(g.node_label(i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s.tokens.push_back(g.edge_label(i, j));
  return s;
}

AttributedGraph unflatten(const FlatState& s) {
  if (!s.layout.graph_shaped())
    throw std::invalid_argument("unflatten: layout is not graph shaped");
  if (static_cast<int32_t>(s.tokens.size()) != s.layout.dims())
    throw std::invalid_argument("unflatten: token count mismatch");
  const int n = s.layout.node_dims;
  AttributedGraph g(n, s.layout.node_vocab, s.layout.edge_vocab);
  for (int i = 0; i < n; ++i) g.set_node_label(i, s.tokens[i]);
  int pos = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      int32_t e = s.tokens[pos++];
      if (e != AttributedGraph::kNoBond) g.set_edge_label(i, j, e);
    }
  return g;
}

std::string graph_to_json(const AttributedGraph& g) {
  nlohmann::json j;
  j["n"] = g.node_count();
  j["node_labels"] = g.node_labels();
  nlohmann::json edges = nlohmann::json::array();
  for (int i = 0; i < g.node_count(); ++i)
    for (int jj = i + 1; jj < g.node_count(); ++jj) {
      int32_t e = g.edge_label(i, jj);
      if (e != AttributedGraph::kNoBond) edges.push_back({i, jj, e});
    }
  j["edges"] = std::move(edges);
  return j.dump();
}

AttributedGraph graph_from_json(const std::string& text, int node_vocab, int edge_vocab) {
  nlohmann::json j = nlohmann::json::parse(text);
  int n = j.at("n").get<int>();
  AttributedGraph g(n, node_vocab, edge_vocab);
  const auto& labels = j.at("node_labels");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("graph_from_json: node_labels size mismatch");
  for (int i = 0; i < n; ++i) g.set_node_label(i, labels[i].get<int32_t>());
  for (const auto& e : j.at("edges")) {
    if (e.size() != 3) throw std::invalid_argument("graph_from_json: bad edge entry");
    g.set_edge_label(e[0].get<int>(), e[1].get<int>(), e[2].get<int32_t>());
  }
  return g;
}

}  // namespace fragflow
