#include <cmath>

#include "doctest.h"
#include "fragflow/denoiser.hpp"
#include "test_util.hpp"

using namespace fragflow;
using namespace fragflow::testutil;

namespace {

CouplingDataset two_pair_dataset() {
  std::vector<CouplingPair> pairs;
  pairs.push_back({make_state({0}, 2), make_state({0}, 2), 1.0, {}});
  pairs.push_back({make_state({0}, 2), make_state({1}, 2), 1.0, {}});
  return CouplingDataset(pairs);
}

// Mean KL(exact || model) over bucket centers, states weighted by their
// marginal probability under the coupling path, averaged per dimension.
double mean_kl_to_exact(const CouplingDataset& ds, const TabularModel& model) {
  ExactPosteriorDenoiser exact(ds);
  BoundTabularDenoiser bound(model, {});
  const StateLayout& layout = ds.pairs().front().x0.layout;
  auto states = enumerate_states(layout);
  const int buckets = model.config().time_buckets;

  double total_weight = 0.0, total_kl = 0.0;
  DenoiserOutput pe, pm;
  for (int b = 0; b < buckets; ++b) {
    double t = (b + 0.5) / buckets;
    for (const FlatState& x : states) {
      double px = 0.0;  // p_t(x) under the coupling
      for (const auto& pair : ds.pairs()) {
        double l = pair.weight;
        for (int32_t d = 0; d < layout.dims() && l > 0; ++d) {
          double p = 0.0;
          if (x.tokens[d] == pair.x0.tokens[d]) p += 1.0 - t;
          if (x.tokens[d] == pair.x1.tokens[d]) p += t;
          l *= p;
        }
        px += l;
      }
      if (px <= 0.0) continue;
      exact.evaluate(x, t, pe);
      bound.evaluate(x, t, pm);
      double kl = 0.0;
      for (int32_t d = 0; d < layout.dims(); ++d) {
        auto e = pe.dim(d);
        auto m = pm.dim(d);
        for (size_t c = 0; c < e.size(); ++c)
          if (e[c] > 0) kl += e[c] * std::log(e[c] / m[c]);
      }
      total_kl += px * kl / layout.dims();
      total_weight += px;
    }
  }
  return total_kl / total_weight;
}

}  // namespace

TEST_CASE("single-pair posterior is a delta on x1 at any reachable state") {
  std::vector<CouplingPair> pairs;
  pairs.push_back({make_state({0, 1, 0}, 2), make_state({1, 1, 0}, 2), 1.0, {}});
  CouplingDataset ds(pairs);
  ExactPosteriorDenoiser den(ds);
  for (double t : {0.0, 0.25, 0.75}) {
    DenoiserOutput out = den.evaluate(make_state({0, 1, 0}, 2), t);
    CHECK(out.dim(0)[1] == doctest::Approx(1.0));
    CHECK(out.dim(1)[1] == doctest::Approx(1.0));
    CHECK(out.dim(2)[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("two-pair posterior matches the hand Bayes computation") {
  ExactPosteriorDenoiser den(two_pair_dataset());
  // observe x_t = 0 at t = 0.5: p(x1 = 1) = (1-t)/2 / ((1-t)/2 + 1/2) = 1/3
  DenoiserOutput at0 = den.evaluate(make_state({0}, 2), 0.5);
  CHECK(std::abs(at0.dim(0)[1] - 1.0 / 3.0) < 1e-12);
  // observe x_t = 1: the (0,0) pair has zero mass there
  DenoiserOutput at1 = den.evaluate(make_state({1}, 2), 0.5);
  CHECK(std::abs(at1.dim(0)[1] - 1.0) < 1e-12);
}

TEST_CASE("unreachable states are an error") {
  std::vector<CouplingPair> pairs;
  pairs.push_back({make_state({0}, 3), make_state({1}, 3), 1.0, {}});
  CouplingDataset ds(pairs);
  ExactPosteriorDenoiser den(ds);
  DenoiserOutput out;
  CHECK_THROWS_AS(den.evaluate(make_state({2}, 3), 0.5, out), std::runtime_error);
}

TEST_CASE("posterior rows are normalized and concentrate at t near 1") {
  ExactPosteriorDenoiser den(two_pair_dataset());
  for (double t : {0.1, 0.5, 0.9}) {
    for (int tok : {0, 1}) {
      DenoiserOutput out = den.evaluate(make_state({tok}, 2), t);
      CHECK(out.dim(0)[0] + out.dim(0)[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  DenoiserOutput late = den.evaluate(make_state({1}, 2), 0.999);
  CHECK(late.dim(0)[1] == doctest::Approx(1.0));
}

TEST_CASE("cross entropy values") {
  StateLayout layout{2, 1, 2, 2};  // 2 nodes, 1 edge
  DenoiserOutput out;
  out.reset(layout);
  FlatState x1;
  x1.layout = layout;
  x1.tokens = {1, 0, 1};

  // perfect prediction: zero loss
  out.dim(0)[1] = 1.0;
  out.dim(1)[0] = 1.0;
  out.dim(2)[1] = 1.0;
  CHECK(ce_loss(out, x1, 1.0) == doctest::Approx(0.0));

  // uniform: 3 log 2 at lambda = 1
  for (int32_t d = 0; d < 3; ++d) {
    out.dim(d)[0] = 0.5;
    out.dim(d)[1] = 0.5;
  }
  CHECK(ce_loss(out, x1, 1.0) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

  // lambda = 0 ignores the edge dimension entirely
  out.dim(2)[0] = 1.0;
  out.dim(2)[1] = 0.0;
  CHECK(ce_loss(out, x1, 0.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // zero mass on a target is an overflow
  CHECK(std::isinf(ce_loss(out, x1, 1.0)));
}

TEST_CASE("analytic softmax-CE gradient matches central finite differences") {
  RandomStream rng(21, 0);
  for (int rep = 0; rep < 40; ++rep) {
    int d = 2 + static_cast<int>(rng.next_below(6));
    std::vector<double> logits(d);
    for (double& l : logits) l = 4.0 * (rng.next_double() - 0.5);
    int target = static_cast<int>(rng.next_below(d));
    std::vector<double> grad(d);
    softmax_ce_grad(logits, target, grad);
    const double eps = 1e-6;
    for (int c = 0; c < d; ++c) {
      std::vector<double> lp = logits, lm = logits, tmp(d);
      lp[c] += eps;
      lm[c] -= eps;
      double fp = softmax_ce_grad(lp, target, tmp);
      double fm = softmax_ce_grad(lm, target, tmp);
      double fd = (fp - fm) / (2 * eps);
      CHECK(std::abs(grad[c] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("training on a single pair converges to the delta posterior") {
  std::vector<CouplingPair> pairs;
  pairs.push_back({make_state({0, 1}, 3), make_state({2, 1}, 3), 1.0, {}});
  CouplingDataset ds(pairs);
  TrainConfig cfg{120000, 0.5, 1.0, 16};
  RandomStream rng(100, 0);
  TabularModel model = train_tabular(ds, cfg, rng);
  CHECK(mean_kl_to_exact(ds, model) <= 1e-3);
}

TEST_CASE("training matches the exact posterior on the two-pair example") {
  CouplingDataset ds = two_pair_dataset();
  TrainConfig cfg{400000, 0.005, 1.0, 16};
  RandomStream rng(101, 0);
  TabularModel model = train_tabular(ds, cfg, rng);
  CHECK(mean_kl_to_exact(ds, model) <= 5e-3);
}

TEST_CASE("zero learning rate leaves the model constant") {
  CouplingDataset ds = two_pair_dataset();
  TrainConfig cfg{5, 0.0, 1.0, 16};
  RandomStream rng(102, 0);
  TrainRecord record;
  TabularModel model = train_tabular(ds, cfg, rng, {}, &record);
  CHECK(record.epoch_loss.size() == 5);
  for (double l : record.epoch_loss)
    CHECK(l == doctest::Approx(record.epoch_loss.front()));
  BoundTabularDenoiser bound(model, {});
  DenoiserOutput out = bound.evaluate(make_state({0}, 2), 0.5);
  CHECK(out.dim(0)[0] == doctest::Approx(0.5));
}

TEST_CASE("checkpoint json round-trips model outputs exactly") {
  CouplingDataset ds = two_pair_dataset();
  TrainConfig cfg{200, 0.05, 1.0, 16};
  RandomStream rng(103, 0);
  TabularModel model = train_tabular(ds, cfg, rng);
  std::string text = model.to_json();
  TabularModel loaded = TabularModel::from_json(text);
  CHECK(loaded.to_json() == text);

  BoundTabularDenoiser a(model, {}), b(loaded, {});
  for (double t : {0.03, 0.51, 0.97}) {
    for (int tok : {0, 1}) {
      DenoiserOutput oa = a.evaluate(make_state({tok}, 2), t);
      DenoiserOutput ob = b.evaluate(make_state({tok}, 2), t);
      CHECK(oa.dim(0)[0] == ob.dim(0)[0]);  // bitwise equality via shortest round-trip
      CHECK(oa.dim(0)[1] == ob.dim(0)[1]);
    }
  }
}

TEST_CASE("dataset validation") {
  CHECK_THROWS_AS(CouplingDataset({}), std::invalid_argument);
  std::vector<CouplingPair> bad;
  bad.push_back({make_state({0}, 2), make_state({0, 1}, 2), 1.0, {}});
  CHECK_THROWS_AS(CouplingDataset(std::move(bad)), std::invalid_argument);
}

TEST_CASE("conditioning features mark reaction-center atoms") {
  // product: path 0-1-2; synthon: bond (1,2) deleted
  AttributedGraph product(3, 6, 3);
  product.set_node_label(0, 1);
  product.set_node_label(1, 2);
  product.set_node_label(2, 3);
  product.set_edge_label(0, 1, 1);
  product.set_edge_label(1, 2, 1);
  AttributedGraph synthon = product;
  synthon.set_edge_label(1, 2, AttributedGraph::kNoBond);

  TabularModel model(6, 3, TrainConfig{1, 0.1, 1.0, 16});
  TabularModel::Binding b = model.bind({product, synthon});
  CHECK(b.cut_flag == std::vector<uint8_t>{0, 1, 1});
  CHECK(b.cond_label == std::vector<uint8_t>{2, 3, 4});
  CHECK(b.cond_degree == std::vector<int16_t>{1, 2, 1});
}

TEST_CASE("point estimate ties break to the lowest index") {
  DenoiserOutput out;
  out.reset(StateLayout{1, 0, 2, 1});
  out.dim(0)[0] = 0.5;
  out.dim(0)[1] = 0.5;
  CHECK(point_estimate(out).tokens[0] == 0);
}
