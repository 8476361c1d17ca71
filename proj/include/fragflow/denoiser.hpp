#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fragflow/flow.hpp"
#include "fragflow/graph.hpp"

namespace fragflow {

// One source/target coupling. Conditioning graphs (none, product, or
// product+synthon) provide static context features to the tabular model.
struct CouplingPair {
  FlatState x0;
  FlatState x1;
  double weight = 1.0;
  std::vector<AttributedGraph> conditioning;
};

// Pairs share vocabularies; dimension counts may differ (graphs of different
// sizes train one model).
class CouplingDataset {
 public:
  explicit CouplingDataset(std::vector<CouplingPair> pairs);

  const std::vector<CouplingPair>& pairs() const { return pairs_; }
  int32_t node_vocab() const { return node_vocab_; }
  int32_t edge_vocab() const { return edge_vocab_; }
  size_t size() const { return pairs_.size(); }

 private:
  std::vector<CouplingPair> pairs_;
  int32_t node_vocab_ = 1;
  int32_t edge_vocab_ = 1;
};

// Bayes over the finite coupling: p(x_1^i | x_t) is proportional to the sum
// over pairs of pair_weight * prod_j p_t(x_t^j | x0^j, x1^j) restricted to
// pairs whose x1^i matches. Exact but O(pairs * dims) per evaluation; meant
// for enumerable problems, and requires every pair to live in one state
// space.
class ExactPosteriorDenoiser : public Denoiser {
 public:
  explicit ExactPosteriorDenoiser(CouplingDataset ds);

  using Denoiser::evaluate;
  void evaluate(const FlatState& x, double t, DenoiserOutput& out) const override;

  const CouplingDataset& dataset() const { return ds_; }

 private:
  CouplingDataset ds_;
};

// Weighted cross entropy: -sum_nodes log p(x1) - lambda * sum_edges log p(x1).
// Zero predicted mass on a target yields +infinity.
double ce_loss(const DenoiserOutput& out, const FlatState& x1, double lambda_edge);

// Softmax + cross entropy on one dimension; fills d(loss)/d(logit) and
// returns the loss. Exposed so the analytic gradient can be checked against
// finite differences.
double softmax_ce_grad(std::span<const double> logits, int target,
                       std::span<double> grad_out);

struct TrainConfig {
  int epochs = 50;
  double lr = 0.1;
  double lambda_edge = 2.0;
  int time_buckets = 16;
};

struct TrainRecord {
  std::vector<double> epoch_loss;
};

using SampleAugment = std::function<CouplingPair(const CouplingPair&, RandomStream&)>;

// Posterior model with logit tables over packed discrete context keys. A
// dimension's context is its own current token, capped pooled token counts of
// the state, its local degree structure, and features against the
// conditioning graphs: label, degree deficit, and whether the node's degree
// differs between conditioning[0] and [1] (which marks reaction-center atoms
// when conditioning is product+synthon). Unseen contexts back off to a dense
// (bucket, dim kind, own token) table. The model is size-agnostic: only the
// vocabularies are fixed.
class TabularModel {
 public:
  static constexpr int kMaxVocab = 8;

  struct Binding {
    int32_t node_count = 0;             // 0: unconditioned, any layout accepted
    std::vector<uint8_t> cond_label;    // label+1 in conditioning[0]
    std::vector<uint8_t> cut_flag;      // degree differs between conditioning graphs
    std::vector<int16_t> cond_degree;   // raw degree in conditioning[0], -1 when absent
    std::vector<uint8_t> cond_edge_label;  // by edge dim, label+1
  };

  TabularModel(int32_t node_vocab, int32_t edge_vocab, TrainConfig cfg);

  int32_t node_vocab() const { return node_vocab_; }
  int32_t edge_vocab() const { return edge_vocab_; }
  const TrainConfig& config() const { return cfg_; }

  Binding bind(const std::vector<AttributedGraph>& conditioning) const;

  void evaluate(const Binding& b, const FlatState& x, double t,
                DenoiserOutput& out) const;

  // Plain SGD over (pair, t, x_t) samples; returns the per-epoch loss curve.
  // Throws if the loss exceeds ten times the first epoch's loss for three
  // consecutive epochs.
  TrainRecord train(const CouplingDataset& ds, RandomStream& rng,
                    const SampleAugment& augment = {});

  std::string to_json() const;
  static TabularModel from_json(const std::string& text);

  size_t context_table_size() const { return ctx_.size(); }

  struct DimContext;  // transient per-evaluation features

 private:
  void check_state(const Binding& b, const FlatState& x) const;
  uint64_t node_key(int bucket, const Binding& b, const DimContext& c, int dim) const;
  uint64_t edge_key(int bucket, const Binding& b, const DimContext& c, int edge_dim,
                    int i, int j) const;
  void logits_for(const Binding& b, const DimContext& c, int bucket, int dim, int i,
                  int j, std::span<double> out) const;
  double sgd_sample(const Binding& b, const CouplingPair& pair, RandomStream& rng);

  int32_t node_vocab_;
  int32_t edge_vocab_;
  TrainConfig cfg_;
  std::vector<double> own_;  // dense backoff table
  std::unordered_map<uint64_t, std::array<double, kMaxVocab>> ctx_;
};

// Adapter fixing a conditioning context so a TabularModel can serve as a
// Denoiser inside the flow engine.
class BoundTabularDenoiser : public Denoiser {
 public:
  BoundTabularDenoiser(const TabularModel& model,
                       const std::vector<AttributedGraph>& conditioning)
      : model_(&model), binding_(model.bind(conditioning)) {}

  using Denoiser::evaluate;
  void evaluate(const FlatState& x, double t, DenoiserOutput& out) const override {
    model_->evaluate(binding_, x, t, out);
  }

 private:
  const TabularModel* model_;
  TabularModel::Binding binding_;
};

TabularModel train_tabular(const CouplingDataset& ds, const TrainConfig& cfg,
                           RandomStream& rng, const SampleAugment& augment = {},
                           TrainRecord* record = nullptr);

}  // namespace fragflow
