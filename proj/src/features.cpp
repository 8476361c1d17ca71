#include "fragflow/features.hpp"

#include <numeric>
#include <stdexcept>

namespace fragflow {

namespace {

using Mat = std::vector<int64_t>;

Mat matmul(const Mat& x, const Mat& y, int n) {
  Mat out(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      int64_t v = x[static_cast<size_t>(i) * n + k];
      if (v == 0) continue;
      for (int j = 0; j < n; ++j)
        out[static_cast<size_t>(i) * n + j] += v * y[static_cast<size_t>(k) * n + j];
    }
  return out;
}

std::vector<int64_t> diagonal(const Mat& x, int n) {
  std::vector<int64_t> d(n);
  for (int i = 0; i < n; ++i) d[i] = x[static_cast<size_t>(i) * n + i];
  return d;
}

int64_t exact_div(int64_t num, int64_t den, const char* what) {
  if (num % den != 0)
    throw std::runtime_error(std::string("cycle features: non-integer ") + what);
  return num / den;
}

}  // namespace

BinaryAdjacency::BinaryAdjacency(const AttributedGraph& g)
    : n_(g.node_count()), a_(static_cast<size_t>(n_) * n_, 0) {
  if (n_ > kMaxNodes) throw std::invalid_argument("BinaryAdjacency: graph too large");
  for (int i = 0; i < n_; ++i)
    for (int j = i + 1; j < n_; ++j)
      if (g.edge_label(i, j) != AttributedGraph::kNoBond) set(i, j);
}

BinaryAdjacency::BinaryAdjacency(int n, const std::vector<std::pair<int, int>>& edges)
    : n_(n), a_(static_cast<size_t>(n) * n, 0) {
  if (n < 1 || n > kMaxNodes) throw std::invalid_argument("BinaryAdjacency: bad size");
  for (auto [i, j] : edges) set(i, j);
}

void BinaryAdjacency::set(int i, int j) {
  if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_)
    throw std::invalid_argument("BinaryAdjacency: bad edge");
  a_[static_cast<size_t>(i) * n_ + j] = 1;
  a_[static_cast<size_t>(j) * n_ + i] = 1;
}

// The printed power formulas for X4/X5/y6 circulate with ambiguous grouping;
// the identities below were solved against a brute-force simple-cycle
// enumerator and hold exactly (see the test-suite oracle):
//   2*X3 = diag(A^2)? no -- X3 = diag(A^3)/2
//   2*X4 = diag(A^4) - d(d-1) - A d
//   2*X5 = diag(A^5) - 2 d.diag(A^3) - A diag(A^3) + 5 diag(A^3) - 2 (A o A^2) d
//   12*y6 = tr A^6 - 3 S[diag(A^3)^2] + 9 S[A o A^2 o A^2] - 6 <d, diag A^4>
//           + 6 tr A^4 - 4 tr A^3 + 4 S[d^3] + 3 1'A^3 1 - 12 S[d^2] + 4 tr A^2
CycleNodeFeatures cycle_node_features(const BinaryAdjacency& a) {
  const int n = a.size();
  Mat A(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A[static_cast<size_t>(i) * n + j] = a.at(i, j);
  Mat A2 = matmul(A, A, n);
  Mat A3 = matmul(A2, A, n);
  Mat A4 = matmul(A3, A, n);
  Mat A5 = matmul(A4, A, n);

  std::vector<int64_t> d = diagonal(A2, n);
  std::vector<int64_t> d3 = diagonal(A3, n);
  std::vector<int64_t> d4 = diagonal(A4, n);
  std::vector<int64_t> d5 = diagonal(A5, n);

  CycleNodeFeatures f;
  f.x3.resize(n);
  f.x4.resize(n);
  f.x5.resize(n);
  for (int i = 0; i < n; ++i) {
    int64_t ad = 0, ad3 = 0, ted = 0;
    for (int j = 0; j < n; ++j) {
      int64_t aij = A[static_cast<size_t>(i) * n + j];
      ad += aij * d[j];
      ad3 += aij * d3[j];
      ted += aij * A2[static_cast<size_t>(i) * n + j] * d[j];
    }
    f.x3[i] = exact_div(d3[i], 2, "X3");
    f.x4[i] = exact_div(d4[i] - d[i] * (d[i] - 1) - ad, 2, "X4");
    f.x5[i] = exact_div(d5[i] - 2 * d[i] * d3[i] - ad3 + 5 * d3[i] - 2 * ted, 2, "X5");
  }
  return f;
}

CycleGraphFeatures cycle_graph_features(const BinaryAdjacency& a) {
  const int n = a.size();
  CycleNodeFeatures nf = cycle_node_features(a);

  Mat A(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A[static_cast<size_t>(i) * n + j] = a.at(i, j);
  Mat A2 = matmul(A, A, n);
  Mat A3 = matmul(A2, A, n);
  Mat A4 = matmul(A3, A, n);
  Mat A6 = matmul(A4, A2, n);

  std::vector<int64_t> d = diagonal(A2, n);
  std::vector<int64_t> diag3 = diagonal(A3, n);
  std::vector<int64_t> diag4 = diagonal(A4, n);
  std::vector<int64_t> diag6 = diagonal(A6, n);

  int64_t tr6 = std::accumulate(diag6.begin(), diag6.end(), int64_t{0});
  int64_t tr4 = std::accumulate(diag4.begin(), diag4.end(), int64_t{0});
  int64_t tr3 = std::accumulate(diag3.begin(), diag3.end(), int64_t{0});
  int64_t tr2 = std::accumulate(d.begin(), d.end(), int64_t{0});

  int64_t sum_diag3_sq = 0, dot_d_diag4 = 0, sum_d2 = 0, sum_d3 = 0;
  for (int i = 0; i < n; ++i) {
    sum_diag3_sq += diag3[i] * diag3[i];
    dot_d_diag4 += d[i] * diag4[i];
    sum_d2 += d[i] * d[i];
    sum_d3 += d[i] * d[i] * d[i];
  }
  int64_t sum_a_a2sq = 0, ones_a3_ones = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      size_t idx = static_cast<size_t>(i) * n + j;
      sum_a_a2sq += A[idx] * A2[idx] * A2[idx];
      ones_a3_ones += A3[idx];
    }

  CycleGraphFeatures g;
  int64_t sx3 = std::accumulate(nf.x3.begin(), nf.x3.end(), int64_t{0});
  int64_t sx4 = std::accumulate(nf.x4.begin(), nf.x4.end(), int64_t{0});
  int64_t sx5 = std::accumulate(nf.x5.begin(), nf.x5.end(), int64_t{0});
  g.y3 = exact_div(sx3, 3, "y3");
  g.y4 = exact_div(sx4, 4, "y4");
  g.y5 = exact_div(sx5, 5, "y5");
  int64_t y6_num = tr6 - 3 * sum_diag3_sq + 9 * sum_a_a2sq - 6 * dot_d_diag4 + 6 * tr4 -
                   4 * tr3 + 4 * sum_d3 + 3 * ones_a3_ones - 12 * sum_d2 + 4 * tr2;
  g.y6 = exact_div(y6_num, 12, "y6");
  return g;
}

std::pair<int, std::vector<int>> connected_components(const AttributedGraph& g) {
  const int n = g.node_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (g.edge_label(i, j) != AttributedGraph::kNoBond) {
        int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
  std::vector<int> label(n, -1);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    int r = find(i);
    if (label[r] < 0) label[r] = count++;
    label[i] = label[r];
  }
  return {count, label};
}

}  // namespace fragflow
