#include "fragflow/retro.hpp"

#include <algorithm>
#include <stdexcept>

#include "fragflow/features.hpp"

namespace fragflow {
namespace retro {

namespace {

// Raw order-dependent encoding, used only as a dedup key for graphs too big
// to canonicalize (permuted duplicates then count separately, which only
// splits the score of garbage candidates).
std::string raw_encoding(const AttributedGraph& g) {
  std::string s;
  s.reserve(1 + g.node_count() + g.upper_triangle().size());
  s.push_back(static_cast<char>(g.node_count()));
  for (int32_t v : g.node_labels()) s.push_back(static_cast<char>(v));
  for (int32_t e : g.upper_triangle()) s.push_back(static_cast<char>(e));
  return s;
}

std::vector<int32_t> sorted_labels(const AttributedGraph& g) {
  std::vector<int32_t> l = g.node_labels();
  std::sort(l.begin(), l.end());
  return l;
}

// Random connected fragment with labels in {1..3} and bonds in {1, 2}:
// a random attachment tree plus at most one extra cycle-closing edge.
AttributedGraph make_fragment(int n, double extra_edge_prob, RandomStream& rng) {
  AttributedGraph g(n, kNodeVocab, kEdgeVocab);
  for (int i = 0; i < n; ++i)
    g.set_node_label(i, 1 + static_cast<int32_t>(rng.next_below(3)));
  for (int i = 1; i < n; ++i) {
    int parent = static_cast<int>(rng.next_below(static_cast<uint64_t>(i)));
    g.set_edge_label(parent, i, 1 + static_cast<int32_t>(rng.next_below(2)));
  }
  if (n >= 3 && rng.next_double() < extra_edge_prob) {
    int i = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
    int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
    if (i != j && g.edge_label(i, j) == kNoBond)
      g.set_edge_label(i, j, 1 + static_cast<int32_t>(rng.next_below(2)));
  }
  return g;
}

Reaction make_reaction(const DatasetConfig& cfg, RandomStream& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    int span = cfg.fragment_max - cfg.fragment_min + 1;
    int na = cfg.fragment_min + static_cast<int>(rng.next_below(span));
    int nb = cfg.fragment_min + static_cast<int>(rng.next_below(span));
    if (na + nb > cfg.max_product_nodes) continue;

    AttributedGraph fa = make_fragment(na, cfg.extra_edge_prob, rng);
    AttributedGraph fb = make_fragment(nb, cfg.extra_edge_prob, rng);
    int a = static_cast<int>(rng.next_below(na));
    int b = static_cast<int>(rng.next_below(nb));

    const int n = na + nb;
    AttributedGraph product(n, kNodeVocab, kEdgeVocab);
    for (int i = 0; i < na; ++i) product.set_node_label(i, fa.node_label(i));
    for (int i = 0; i < nb; ++i) product.set_node_label(na + i, fb.node_label(i));
    for (int i = 0; i < na; ++i)
      for (int j = i + 1; j < na; ++j)
        if (fa.edge_label(i, j) != kNoBond) product.set_edge_label(i, j, fa.edge_label(i, j));
    for (int i = 0; i < nb; ++i)
      for (int j = i + 1; j < nb; ++j)
        if (fb.edge_label(i, j) != kNoBond)
          product.set_edge_label(na + i, na + j, fb.edge_label(i, j));
    // the planted reaction-center bond; single, so the forward model's join
    // reproduces it
    product.set_edge_label(a, na + b, kSingle);

    // keep only reactions whose planted bridge the center predictor ranks
    // within its top two
    auto centers = predict_reaction_centers(product, 2);
    bool found = false;
    for (const auto& c : centers)
      if (c.first == std::make_pair(a, na + b)) found = true;
    if (!found) continue;

    // reactants need two extra nodes; the dummy budget must cover them
    if (2 > cfg.dummy_budget) throw std::invalid_argument("make_reaction: dummy budget too small");

    AttributedGraph reactants(n + 2, kNodeVocab, kEdgeVocab);
    for (int i = 0; i < n; ++i) reactants.set_node_label(i, product.node_label(i));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (i == a && j == na + b) continue;  // bridge bond broken
        int32_t e = product.edge_label(i, j);
        if (e != kNoBond) reactants.set_edge_label(i, j, e);
      }
    int32_t la = kLeaving1, lb = kLeaving1;
    if (rng.next_double() < cfg.multi_answer_fraction) {
      la = rng.next_below(2) ? kLeaving2 : kLeaving1;
      lb = rng.next_below(2) ? kLeaving2 : kLeaving1;
    }
    reactants.set_node_label(n, la);
    reactants.set_node_label(n + 1, lb);
    reactants.set_edge_label(a, n, kSingle);
    reactants.set_edge_label(na + b, n + 1, kSingle);

    Reaction r;
    r.product = std::move(product);
    r.reactants = std::move(reactants);
    r.bridge = {a, na + b};
    return r;
  }
  throw std::runtime_error("make_reaction: could not generate a valid reaction");
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& cfg, RandomStream rng) {
  if (cfg.fragment_min < 1 || cfg.fragment_max < cfg.fragment_min)
    throw std::invalid_argument("generate_dataset: bad fragment size range");
  if (cfg.fragment_min + cfg.fragment_min > cfg.max_product_nodes)
    throw std::invalid_argument("generate_dataset: fragments cannot fit the node cap");
  Dataset ds;
  auto fill = [&](std::vector<Reaction>& out, int count) {
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      Reaction r = make_reaction(cfg, rng);
      auto check = forward_synthesis(r.reactants);
      if (!check || canonical_form(*check) != canonical_form(r.product))
        throw std::runtime_error("generate_dataset: reaction failed its own oracle");
      out.push_back(std::move(r));
    }
  };
  fill(ds.train, cfg.train_count);
  fill(ds.valid, cfg.valid_count);
  fill(ds.test, cfg.test_count);
  return ds;
}

std::optional<AttributedGraph> forward_synthesis(const AttributedGraph& reactants) {
  auto [count, comp] = connected_components(reactants);
  if (count != 2) return std::nullopt;

  int leaving[2] = {-1, -1};
  for (int i = 0; i < reactants.node_count(); ++i) {
    if (!is_leaving(reactants.node_label(i))) continue;
    int c = comp[i];
    if (leaving[c] >= 0) return std::nullopt;  // two leaving nodes in one component
    leaving[c] = i;
  }
  if (leaving[0] < 0 || leaving[1] < 0) return std::nullopt;

  int attach[2] = {-1, -1};
  for (int c = 0; c < 2; ++c) {
    int l = leaving[c];
    if (reactants.degree(l) != 1) return std::nullopt;
    for (int j = 0; j < reactants.node_count(); ++j)
      if (j != l && reactants.edge_label(l, j) != kNoBond) attach[c] = j;
  }

  std::vector<int> keep;
  std::vector<int> remap(reactants.node_count(), -1);
  for (int i = 0; i < reactants.node_count(); ++i)
    if (i != leaving[0] && i != leaving[1]) {
      remap[i] = static_cast<int>(keep.size());
      keep.push_back(i);
    }
  AttributedGraph product(static_cast<int>(keep.size()), reactants.node_vocab(),
                          reactants.edge_vocab());
  for (int i : keep) product.set_node_label(remap[i], reactants.node_label(i));
  for (size_t x = 0; x < keep.size(); ++x)
    for (size_t y = x + 1; y < keep.size(); ++y) {
      int32_t e = reactants.edge_label(keep[x], keep[y]);
      if (e != kNoBond)
        product.set_edge_label(static_cast<int>(x), static_cast<int>(y), e);
    }
  product.set_edge_label(remap[attach[0]], remap[attach[1]], kSingle);
  return product;
}

std::vector<std::pair<std::pair<int, int>, double>> predict_reaction_centers(
    const AttributedGraph& product, int m) {
  if (m < 1) throw std::invalid_argument("predict_reaction_centers: need m >= 1");
  if (product.bond_count() == 0)
    throw std::invalid_argument("predict_reaction_centers: product has no bonds");

  const int n = product.node_count();
  std::vector<std::pair<std::pair<int, int>, double>> scored;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (product.edge_label(i, j) == kNoBond) continue;
      AttributedGraph cut = derive_synthons(product, {i, j});
      auto [count, comp] = connected_components(cut);
      if (count != 2) continue;  // non-bridges score zero, below the threshold
      int size_a = 0;
      for (int v : comp)
        if (v == comp[i]) ++size_a;
      int size_b = n - size_a;
      scored.push_back({{i, j}, 1.0 / (1 + std::abs(size_a - size_b))});
    }
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  if (static_cast<int>(scored.size()) > m) scored.resize(m);
  return scored;
}

AttributedGraph derive_synthons(const AttributedGraph& product,
                                std::pair<int, int> center) {
  if (product.edge_label(center.first, center.second) == kNoBond)
    throw std::invalid_argument("derive_synthons: center is not a bond");
  AttributedGraph out = product;
  out.set_edge_label(center.first, center.second, kNoBond);
  return out;
}

int reward(const AttributedGraph& candidate, const AttributedGraph& product) {
  return RewardOracle(product)(candidate);
}

RewardOracle::RewardOracle(AttributedGraph product)
    : product_(std::move(product)),
      product_label_multiset_(sorted_labels(product_)),
      product_canon_(canonical_form(product_)) {}

int RewardOracle::operator()(const AttributedGraph& candidate) const {
  AttributedGraph stripped = strip_unused_dummies(candidate);
  if (stripped.node_count() != product_.node_count() + 2) return 0;
  auto synth = forward_synthesis(stripped);
  if (!synth) return 0;
  if (synth->node_count() != product_.node_count()) return 0;
  if (sorted_labels(*synth) != product_label_multiset_) return 0;
  return canonical_form(*synth) == product_canon_ ? 1 : 0;
}

RankedPredictionSet rank_by_frequency(const std::vector<AttributedGraph>& samples) {
  if (samples.empty()) throw std::invalid_argument("rank_by_frequency: no samples");
  RankedPredictionSet out;
  out.total_samples = static_cast<int64_t>(samples.size());
  std::unordered_map<std::string, size_t> index;
  for (const AttributedGraph& s : samples) {
    AttributedGraph stripped = strip_unused_dummies(s);
    std::string key = stripped.node_count() <= kCanonicalMaxNodes
                          ? canonical_form(stripped)
                          : raw_encoding(stripped);
    auto [it, inserted] = index.try_emplace(key, out.entries.size());
    if (inserted) {
      RankedEntry e;
      e.graph = std::move(stripped);
      e.canon = key;
      out.entries.push_back(std::move(e));
    }
    out.entries[it->second].count += 1;
  }
  for (auto& e : out.entries)
    e.score = static_cast<double>(e.count) / static_cast<double>(out.total_samples);
  std::sort(out.entries.begin(), out.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.count != b.count) return a.count > b.count;
              return a.canon < b.canon;
            });
  return out;
}

RankedPredictionSet merge_synthon_budgets(const std::vector<RankedPredictionSet>& per_group,
                                          const std::vector<int>& budgets) {
  if (per_group.size() != budgets.size())
    throw std::invalid_argument("merge_synthon_budgets: group/budget count mismatch");
  int64_t total = 0;
  for (size_t g = 0; g < per_group.size(); ++g) {
    if (per_group[g].total_samples != budgets[g])
      throw std::invalid_argument("merge_synthon_budgets: budget mismatch");
    total += budgets[g];
  }
  RankedPredictionSet out;
  out.total_samples = total;
  std::unordered_map<std::string, size_t> index;
  for (const auto& group : per_group)
    for (const auto& e : group.entries) {
      auto [it, inserted] = index.try_emplace(e.canon, out.entries.size());
      if (inserted) out.entries.push_back(e);
      else out.entries[it->second].count += e.count;
    }
  for (auto& e : out.entries)
    e.score = static_cast<double>(e.count) / static_cast<double>(total);
  std::sort(out.entries.begin(), out.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.count != b.count) return a.count > b.count;
              return a.canon < b.canon;
            });
  return out;
}

TopkMetrics topk_metrics(const RankedPredictionSet& pred, const Reaction& truth,
                         const std::vector<int>& ks) {
  if (pred.entries.empty()) throw std::invalid_argument("topk_metrics: empty predictions");
  RewardOracle oracle(truth.product);
  std::string truth_canon = canonical_form(strip_unused_dummies(truth.reactants));

  std::vector<int> entry_reward(pred.entries.size());
  std::vector<int> entry_exact(pred.entries.size());
  for (size_t i = 0; i < pred.entries.size(); ++i) {
    entry_reward[i] = oracle(pred.entries[i].graph);
    entry_exact[i] = pred.entries[i].canon == truth_canon ? 1 : 0;
  }

  TopkMetrics m;
  m.ks = ks;
  for (int k : ks) {
    int exact = 0, feasible = 0;
    for (int i = 0; i < k && i < static_cast<int>(pred.entries.size()); ++i) {
      exact |= entry_exact[i];
      feasible += entry_reward[i];
    }
    m.exact.push_back(exact);
    m.round_trip.push_back(static_cast<double>(feasible) / k);
    m.coverage.push_back(feasible > 0 ? 1.0 : 0.0);
  }
  return m;
}

}  // namespace retro
}  // namespace fragflow
