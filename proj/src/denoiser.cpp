#include "fragflow/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace fragflow {

CouplingDataset::CouplingDataset(std::vector<CouplingPair> pairs)
    : pairs_(std::move(pairs)) {
  if (pairs_.empty()) throw std::invalid_argument("CouplingDataset: empty");
  node_vocab_ = pairs_.front().x0.layout.node_vocab;
  edge_vocab_ = pairs_.front().x0.layout.edge_vocab;
  for (const auto& p : pairs_) {
    check_same_layout(p.x0, p.x1, "CouplingDataset");
    if (p.x0.layout.node_vocab != node_vocab_ || p.x0.layout.edge_vocab != edge_vocab_)
      throw std::invalid_argument("CouplingDataset: pairs disagree on vocabularies");
    if (p.weight < 0.0) throw std::invalid_argument("CouplingDataset: negative weight");
  }
}

ExactPosteriorDenoiser::ExactPosteriorDenoiser(CouplingDataset ds) : ds_(std::move(ds)) {
  const StateLayout& layout = ds_.pairs().front().x0.layout;
  for (const auto& p : ds_.pairs())
    if (p.x0.layout != layout)
      throw std::invalid_argument("ExactPosteriorDenoiser: pairs disagree on layout");
}

void ExactPosteriorDenoiser::evaluate(const FlatState& x, double t,
                                      DenoiserOutput& out) const {
  const StateLayout& layout = ds_.pairs().front().x0.layout;
  if (x.layout != layout)
    throw std::invalid_argument("ExactPosteriorDenoiser: layout mismatch");
  out.reset(layout);

  const int32_t dims = layout.dims();
  std::vector<double> likelihood(ds_.size());
  double total = 0.0;
  for (size_t k = 0; k < ds_.size(); ++k) {
    const auto& pair = ds_.pairs()[k];
    double l = pair.weight;
    for (int32_t d = 0; d < dims && l > 0.0; ++d) {
      double p = 0.0;
      if (x.tokens[d] == pair.x0.tokens[d]) p += 1.0 - t;
      if (x.tokens[d] == pair.x1.tokens[d]) p += t;
      l *= p;
    }
    likelihood[k] = l;
    total += l;
  }
  if (total <= 0.0)
    throw std::runtime_error("ExactPosteriorDenoiser: state unreachable under coupling");

  for (size_t k = 0; k < ds_.size(); ++k) {
    if (likelihood[k] == 0.0) continue;
    const auto& pair = ds_.pairs()[k];
    for (int32_t d = 0; d < dims; ++d)
      out.dim(d)[pair.x1.tokens[d]] += likelihood[k];
  }
  for (int32_t d = 0; d < dims; ++d) {
    auto p = out.dim(d);
    for (double& v : p) v /= total;
  }
}

double ce_loss(const DenoiserOutput& out, const FlatState& x1, double lambda_edge) {
  if (out.layout != x1.layout) throw std::invalid_argument("ce_loss: layout mismatch");
  double loss = 0.0;
  for (int32_t d = 0; d < out.layout.dims(); ++d) {
    double p = out.dim(d)[x1.tokens[d]];
    double w = out.layout.is_edge_dim(d) ? lambda_edge : 1.0;
    if (w == 0.0) continue;
    if (p <= 0.0) return std::numeric_limits<double>::infinity();
    loss -= w * std::log(p);
  }
  return loss;
}

double softmax_ce_grad(std::span<const double> logits, int target,
                       std::span<double> grad_out) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (size_t c = 0; c < logits.size(); ++c) z += std::exp(logits[c] - mx);
  double logz = std::log(z) + mx;
  for (size_t c = 0; c < logits.size(); ++c) {
    double p = std::exp(logits[c] - logz);
    grad_out[c] = p - (static_cast<int>(c) == target ? 1.0 : 0.0);
  }
  return logz - logits[target];
}

// ---------------------------------------------------------------------------
// TabularModel

namespace {

constexpr int kBucketBits = 5;

int cap(int v, int hi) { return v > hi ? hi : (v < 0 ? 0 : v); }

}  // namespace

struct TabularModel::DimContext {
  const FlatState* x = nullptr;
  std::array<uint8_t, kMaxVocab> node_counts{};  // capped at 3
  std::vector<uint8_t> cur_degree;               // per node, raw
  int bond_total = 0;                            // capped at 15

  void fill(const FlatState& state) {
    x = &state;
    const StateLayout& layout = state.layout;
    node_counts.fill(0);
    std::array<int, kMaxVocab> counts{};
    for (int32_t d = 0; d < layout.node_dims; ++d) counts[state.tokens[d]]++;
    for (int v = 0; v < layout.node_vocab; ++v)
      node_counts[v] = static_cast<uint8_t>(std::min(counts[v], 3));
    cur_degree.assign(layout.node_dims, 0);
    int bonds = 0;
    if (layout.edge_dims > 0) {
      int32_t e = 0;
      for (int32_t i = 0; i < layout.node_dims; ++i)
        for (int32_t j = i + 1; j < layout.node_dims; ++j, ++e) {
          if (state.tokens[layout.node_dims + e] != 0) {
            cur_degree[i]++;
            cur_degree[j]++;
            ++bonds;
          }
        }
    }
    bond_total = std::min(bonds, 15);
  }
};

TabularModel::TabularModel(int32_t node_vocab, int32_t edge_vocab, TrainConfig cfg)
    : node_vocab_(node_vocab), edge_vocab_(edge_vocab), cfg_(cfg) {
  if (node_vocab < 1 || node_vocab > kMaxVocab || edge_vocab < 1 ||
      edge_vocab > kMaxVocab)
    throw std::invalid_argument("TabularModel: vocabulary out of range");
  if (cfg.time_buckets < 1 || cfg.time_buckets > (1 << kBucketBits))
    throw std::invalid_argument("TabularModel: bad bucket count");
  own_.assign(static_cast<size_t>(cfg.time_buckets) * 2 * kMaxVocab * kMaxVocab, 0.0);
}

TabularModel::Binding TabularModel::bind(
    const std::vector<AttributedGraph>& conditioning) const {
  Binding b;
  if (conditioning.empty()) return b;

  const AttributedGraph& g0 = conditioning.front();
  const int n = g0.node_count();
  b.node_count = n;
  b.cond_label.assign(n, 0);
  b.cut_flag.assign(n, 0);
  b.cond_degree.assign(n, -1);
  b.cond_edge_label.assign(static_cast<size_t>(n) * (n - 1) / 2, 0);
  for (int i = 0; i < n; ++i) {
    b.cond_label[i] = static_cast<uint8_t>(g0.node_label(i) + 1);
    b.cond_degree[i] = static_cast<int16_t>(g0.degree(i));
  }
  size_t e = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j, ++e)
      b.cond_edge_label[e] = static_cast<uint8_t>(g0.edge_label(i, j) + 1);
  if (conditioning.size() >= 2) {
    const AttributedGraph& g1 = conditioning[1];
    if (g1.node_count() != n)
      throw std::invalid_argument("TabularModel::bind: conditioning size mismatch");
    for (int i = 0; i < n; ++i)
      b.cut_flag[i] = g0.degree(i) != g1.degree(i) ? 1 : 0;
  }
  return b;
}

void TabularModel::check_state(const Binding& b, const FlatState& x) const {
  if (x.layout.node_vocab != node_vocab_ || x.layout.edge_vocab != edge_vocab_)
    throw std::invalid_argument("TabularModel: vocabulary mismatch");
  if (x.layout.edge_dims > 0 && !x.layout.graph_shaped())
    throw std::invalid_argument("TabularModel: edge dims require a graph-shaped layout");
  if (b.node_count > 0 && b.node_count != x.layout.node_dims)
    throw std::invalid_argument("TabularModel: conditioning size mismatch");
  if (static_cast<int32_t>(x.tokens.size()) != x.layout.dims())
    throw std::invalid_argument("TabularModel: token count mismatch");
}

uint64_t TabularModel::node_key(int bucket, const Binding& b, const DimContext& c,
                                int dim) const {
  const bool bound = b.node_count > 0;
  uint64_t k = 0;
  k = (k << 1) | 0;  // kind
  k = (k << kBucketBits) | static_cast<uint64_t>(bucket);
  k = (k << 4) | static_cast<uint64_t>(c.x->tokens[dim]);
  k = (k << 4) | (bound ? b.cond_label[dim] : 0);
  k = (k << 1) | (bound ? b.cut_flag[dim] : 0);
  int deg = c.cur_degree.empty() ? 0 : c.cur_degree[dim];
  k = (k << 3) | static_cast<uint64_t>(cap(deg, 7));
  int deficit = (bound && b.cond_degree[dim] >= 0) ? b.cond_degree[dim] - deg : 0;
  k = (k << 3) | static_cast<uint64_t>(cap(deficit + 3, 7));
  k = (k << 4) | static_cast<uint64_t>(c.bond_total);
  for (int v = 0; v < node_vocab_; ++v) k = (k << 2) | c.node_counts[v];
  return k;
}

uint64_t TabularModel::edge_key(int bucket, const Binding& b, const DimContext& c,
                                int edge_dim, int i, int j) const {
  const bool bound = b.node_count > 0;
  auto desc = [&](int node) -> uint64_t {
    uint64_t d = 0;
    d = (d << 4) | static_cast<uint64_t>(c.x->tokens[node]);
    d = (d << 4) | (bound ? b.cond_label[node] : 0);
    d = (d << 1) | (bound ? b.cut_flag[node] : 0);
    int deg = c.cur_degree[node];
    int deficit = (bound && b.cond_degree[node] >= 0) ? b.cond_degree[node] - deg : 0;
    d = (d << 3) | static_cast<uint64_t>(cap(deficit + 3, 7));
    return d;
  };
  uint64_t da = desc(i), db = desc(j);
  if (da > db) std::swap(da, db);

  uint64_t k = 0;
  k = (k << 1) | 1;  // kind
  k = (k << kBucketBits) | static_cast<uint64_t>(bucket);
  k = (k << 4) | static_cast<uint64_t>(c.x->tokens[c.x->layout.node_dims + edge_dim]);
  k = (k << 4) | (bound ? b.cond_edge_label[edge_dim] : 0);
  k = (k << 12) | da;
  k = (k << 12) | db;
  k = (k << 4) | static_cast<uint64_t>(c.bond_total);
  for (int v = 0; v < node_vocab_; ++v) k = (k << 2) | c.node_counts[v];
  return k;
}

void TabularModel::logits_for(const Binding& b, const DimContext& c, int bucket,
                              int dim, int i, int j, std::span<double> out) const {
  const bool edge = c.x->layout.is_edge_dim(dim);
  const int own = c.x->tokens[dim];
  const size_t base =
      ((static_cast<size_t>(bucket) * 2 + (edge ? 1 : 0)) * kMaxVocab + own) * kMaxVocab;
  uint64_t key = edge ? edge_key(bucket, b, c, dim - c.x->layout.node_dims, i, j)
                      : node_key(bucket, b, c, dim);
  auto it = ctx_.find(key);
  for (size_t cc = 0; cc < out.size(); ++cc) {
    out[cc] = own_[base + cc];
    if (it != ctx_.end()) out[cc] += it->second[cc];
  }
}

namespace {

int time_bucket(double t, int buckets) {
  int b = static_cast<int>(t * buckets);
  if (b < 0) b = 0;
  if (b >= buckets) b = buckets - 1;
  return b;
}

// Walks dims in layout order, tracking edge endpoints without a lookup table.
template <typename Fn>
void for_each_dim(const StateLayout& layout, Fn&& fn) {
  for (int32_t d = 0; d < layout.node_dims; ++d) fn(d, -1, -1);
  if (layout.edge_dims == 0) return;
  int32_t e = layout.node_dims;
  for (int32_t i = 0; i < layout.node_dims; ++i)
    for (int32_t j = i + 1; j < layout.node_dims; ++j) fn(e++, i, j);
}

}  // namespace

void TabularModel::evaluate(const Binding& b, const FlatState& x, double t,
                            DenoiserOutput& out) const {
  check_state(b, x);
  out.reset(x.layout);
  DimContext c;
  c.fill(x);
  const int bucket = time_bucket(t, cfg_.time_buckets);

  std::array<double, kMaxVocab> logits;
  for_each_dim(x.layout, [&](int32_t d, int i, int j) {
    const int vocab = x.layout.vocab_of(d);
    std::span<double> l(logits.data(), static_cast<size_t>(vocab));
    logits_for(b, c, bucket, d, i, j, l);
    double mx = *std::max_element(l.begin(), l.end());
    double z = 0.0;
    auto p = out.dim(d);
    for (int cc = 0; cc < vocab; ++cc) {
      p[cc] = std::exp(l[cc] - mx);
      z += p[cc];
    }
    for (int cc = 0; cc < vocab; ++cc) p[cc] /= z;
  });
}

double TabularModel::sgd_sample(const Binding& b, const CouplingPair& pair,
                                RandomStream& rng) {
  double t = rng.next_double();
  FlatState xt = sample_conditional_state(pair.x0, pair.x1, t, rng);
  check_state(b, xt);

  DimContext c;
  c.fill(xt);
  const int bucket = time_bucket(t, cfg_.time_buckets);

  std::array<double, kMaxVocab> logits;
  std::array<double, kMaxVocab> grad;
  double loss = 0.0;
  for_each_dim(xt.layout, [&](int32_t d, int i, int j) {
    const int vocab = xt.layout.vocab_of(d);
    const bool edge = xt.layout.is_edge_dim(d);
    const double w = (edge ? cfg_.lambda_edge : 1.0) * pair.weight;
    std::span<double> l(logits.data(), static_cast<size_t>(vocab));
    logits_for(b, c, bucket, d, i, j, l);
    loss += w * softmax_ce_grad(l, pair.x1.tokens[d],
                                std::span<double>(grad.data(), vocab));
    if (cfg_.lr == 0.0 || w == 0.0) return;

    const int own = xt.tokens[d];
    const size_t base =
        ((static_cast<size_t>(bucket) * 2 + (edge ? 1 : 0)) * kMaxVocab + own) *
        kMaxVocab;
    uint64_t key = edge ? edge_key(bucket, b, c, d - xt.layout.node_dims, i, j)
                        : node_key(bucket, b, c, d);
    auto& cell = ctx_[key];
    for (int cc = 0; cc < vocab; ++cc) {
      double step = cfg_.lr * w * grad[cc];
      own_[base + cc] -= step;
      cell[cc] -= step;
    }
  });
  return loss;
}

TrainRecord TabularModel::train(const CouplingDataset& ds, RandomStream& rng,
                                const SampleAugment& augment) {
  if (ds.node_vocab() != node_vocab_ || ds.edge_vocab() != edge_vocab_)
    throw std::invalid_argument("train: vocabulary mismatch");
  if (cfg_.epochs < 1 || cfg_.lr < 0.0)
    throw std::invalid_argument("train: bad epochs or learning rate");

  TrainRecord record;
  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), size_t{0});

  std::vector<Binding> cached;
  if (!augment) {
    cached.reserve(ds.size());
    for (const auto& p : ds.pairs()) cached.push_back(bind(p.conditioning));
  }

  int divergence_streak = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.next_below(i)]);
    double loss_sum = 0.0;
    for (size_t idx : order) {
      if (augment) {
        CouplingPair p = augment(ds.pairs()[idx], rng);
        loss_sum += sgd_sample(bind(p.conditioning), p, rng);
      } else {
        loss_sum += sgd_sample(cached[idx], ds.pairs()[idx], rng);
      }
    }
    record.epoch_loss.push_back(loss_sum / static_cast<double>(ds.size()));
    double initial = record.epoch_loss.front();
    if (record.epoch_loss.back() > initial * 10.0 && initial > 0.0) {
      if (++divergence_streak >= 3)
        throw std::runtime_error("train: loss diverged for three consecutive epochs");
    } else {
      divergence_streak = 0;
    }
  }
  return record;
}

std::string TabularModel::to_json() const {
  nlohmann::json j;
  j["format"] = "fragflow-tabular-v1";
  j["node_vocab"] = node_vocab_;
  j["edge_vocab"] = edge_vocab_;
  j["config"] = {{"epochs", cfg_.epochs},
                 {"lr", cfg_.lr},
                 {"lambda_edge", cfg_.lambda_edge},
                 {"time_buckets", cfg_.time_buckets}};
  j["own"] = own_;
  nlohmann::json ctx = nlohmann::json::object();
  std::vector<uint64_t> keys;
  keys.reserve(ctx_.size());
  for (const auto& [k, _] : ctx_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (uint64_t k : keys) {
    const auto& cell = ctx_.at(k);
    ctx[std::to_string(k)] = std::vector<double>(cell.begin(), cell.end());
  }
  j["ctx"] = std::move(ctx);
  return j.dump();
}

TabularModel TabularModel::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format").get<std::string>() != "fragflow-tabular-v1")
    throw std::invalid_argument("TabularModel: unknown checkpoint format");
  TrainConfig cfg{j["config"]["epochs"].get<int>(), j["config"]["lr"].get<double>(),
                  j["config"]["lambda_edge"].get<double>(),
                  j["config"]["time_buckets"].get<int>()};
  TabularModel m(j.at("node_vocab").get<int32_t>(), j.at("edge_vocab").get<int32_t>(),
                 cfg);
  m.own_ = j.at("own").get<std::vector<double>>();
  for (const auto& [k, v] : j.at("ctx").items()) {
    auto vals = v.get<std::vector<double>>();
    auto& cell = m.ctx_[std::stoull(k)];
    std::copy(vals.begin(), vals.end(), cell.begin());
  }
  return m;
}

TabularModel train_tabular(const CouplingDataset& ds, const TrainConfig& cfg,
                           RandomStream& rng, const SampleAugment& augment,
                           TrainRecord* record) {
  TabularModel model(ds.node_vocab(), ds.edge_vocab(), cfg);
  TrainRecord rec = model.train(ds, rng, augment);
  if (record) *record = std::move(rec);
  return model;
}

}  // namespace fragflow
