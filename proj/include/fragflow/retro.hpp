#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fragflow/graph.hpp"
#include "fragflow/random.hpp"

namespace fragflow {

// Fragment-join reaction world. Node labels: 0 dummy, 1..3 atom kinds,
// 4..5 leaving groups. Edge labels: 0 no-bond, 1 single, 2 double.
namespace retro {

constexpr int32_t kNodeVocab = 6;
constexpr int32_t kEdgeVocab = 3;
constexpr int32_t kDummy = AttributedGraph::kDummy;
constexpr int32_t kLeaving1 = 4;
constexpr int32_t kLeaving2 = 5;
constexpr int32_t kNoBond = AttributedGraph::kNoBond;
constexpr int32_t kSingle = 1;

inline bool is_leaving(int32_t v) { return v == kLeaving1 || v == kLeaving2; }

// Product plus its reactants as one two-component graph. Node indices are
// aligned: reactant node i < product size carries the same atom as product
// node i; the two extra nodes are the leaving groups. bridge is the reaction
// center (the product bond absent from the reactants).
struct Reaction {
  AttributedGraph product;
  AttributedGraph reactants;
  std::pair<int, int> bridge;

  Reaction() : product(1, kNodeVocab, kEdgeVocab), reactants(1, kNodeVocab, kEdgeVocab) {}
};

struct DatasetConfig {
  int train_count = 2000;
  int valid_count = 200;
  int test_count = 500;
  int fragment_min = 2;
  int fragment_max = 5;
  double extra_edge_prob = 0.3;        // chance of one extra in-fragment edge (a cycle)
  double multi_answer_fraction = 0.5;  // fraction with randomized leaving labels
  int max_product_nodes = 12;
  int dummy_budget = 10;               // reactions needing more padding are rejected
};

struct Dataset {
  std::vector<Reaction> train, valid, test;
};

Dataset generate_dataset(const DatasetConfig& cfg, RandomStream rng);

// Exact forward model: feasible iff the graph has exactly two connected
// components, each containing exactly one leaving-group node of degree one.
// The leaving nodes are removed and their attachment points joined by a
// single bond. Infeasible inputs return nullopt.
std::optional<AttributedGraph> forward_synthesis(const AttributedGraph& reactants);

// Scores every bond whose deletion disconnects the product by how balanced
// the split is: 1 / (1 + |size(A) - size(B)|); non-bridges score zero and are
// never returned. Top-m by (score desc, (i,j) asc).
std::vector<std::pair<std::pair<int, int>, double>> predict_reaction_centers(
    const AttributedGraph& product, int m);

// Deletes the reaction-center bond; node set unchanged.
AttributedGraph derive_synthons(const AttributedGraph& product, std::pair<int, int> center);

// 1 iff forward_synthesis of the candidate (after stripping unused dummies)
// reproduces the product up to isomorphism.
int reward(const AttributedGraph& candidate, const AttributedGraph& product);

// Same check with the product's canonical form precomputed. Pure and
// reentrant; callers that evaluate many near-identical candidates can layer
// their own memo on top.
class RewardOracle {
 public:
  explicit RewardOracle(AttributedGraph product);

  int operator()(const AttributedGraph& candidate) const;
  const AttributedGraph& product() const { return product_; }

 private:
  AttributedGraph product_;
  std::vector<int32_t> product_label_multiset_;
  std::string product_canon_;
};

struct RankedEntry {
  AttributedGraph graph;  // stripped representative
  std::string canon;
  int64_t count = 0;
  double score = 0.0;

  RankedEntry() : graph(1, kNodeVocab, kEdgeVocab) {}
};

struct RankedPredictionSet {
  std::vector<RankedEntry> entries;  // score desc, canonical form asc
  int64_t total_samples = 0;
};

// Deduplicates samples by canonical form after stripping unused dummies;
// score = count / N. Oversized graphs (beyond the canonicalization bound) are
// binned by their raw encoding instead.
RankedPredictionSet rank_by_frequency(const std::vector<AttributedGraph>& samples);

// Pools per-synthon candidate sets: counts add across groups, scores are
// count / sum(budgets). budgets[i] must equal the sample count behind
// per_group[i].
RankedPredictionSet merge_synthon_budgets(const std::vector<RankedPredictionSet>& per_group,
                                          const std::vector<int>& budgets);

struct TopkMetrics {
  std::vector<int> ks;
  std::vector<double> exact;      // 1[truth among top k]
  std::vector<double> round_trip; // mean reward over top k (missing slots fail)
  std::vector<double> coverage;   // 1[any top-k prediction feasible for the product]
};

TopkMetrics topk_metrics(const RankedPredictionSet& pred, const Reaction& truth,
                         const std::vector<int>& ks);

}  // namespace retro
}  // namespace fragflow
