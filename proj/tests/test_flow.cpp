#include <cmath>

#include "doctest.h"
#include "fragflow/denoiser.hpp"
#include "fragflow/flow.hpp"
#include "test_util.hpp"

using namespace fragflow;
using namespace fragflow::testutil;

namespace {

// constant per-dimension output, independent of state and time
LambdaDenoiser constant_denoiser(std::vector<std::vector<double>> dists) {
  return LambdaDenoiser([dists = std::move(dists)](const FlatState& x, double,
                                                   DenoiserOutput& out) {
    out.reset(x.layout);
    for (int32_t d = 0; d < x.layout.dims(); ++d) {
      auto p = out.dim(d);
      for (size_t c = 0; c < p.size(); ++c) p[c] = dists[d][c];
    }
  });
}

LambdaDenoiser identity_denoiser() {
  return LambdaDenoiser([](const FlatState& x, double, DenoiserOutput& out) {
    out.reset(x.layout);
    for (int32_t d = 0; d < x.layout.dims(); ++d) out.dim(d)[x.tokens[d]] = 1.0;
  });
}

}  // namespace

TEST_CASE("time grid endpoints") {
  TimeGrid g(50);
  CHECK(g.time(0) == 0.0);
  CHECK(g.time(50) == 1.0);
  CHECK(g.step() == doctest::Approx(0.02));
  CHECK_THROWS_AS(TimeGrid(0), std::invalid_argument);
}

TEST_CASE("conditional state hits the endpoints exactly") {
  RandomStream rng(1, 0);
  FlatState x0 = make_state({0, 1, 2, 3}, 4);
  FlatState x1 = make_state({3, 2, 1, 0}, 4);
  for (int rep = 0; rep < 50; ++rep) {
    CHECK(sample_conditional_state(x0, x1, 0.0, rng) == x0);
    CHECK(sample_conditional_state(x0, x1, 1.0, rng) == x1);
  }
  CHECK_THROWS_AS(sample_conditional_state(x0, x1, 1.5, rng), std::invalid_argument);
  FlatState bad = make_state({0, 1}, 4);
  CHECK_THROWS_AS(sample_conditional_state(x0, bad, 0.5, rng), std::invalid_argument);
}

TEST_CASE("conditional state is Bernoulli(t) per dimension") {
  RandomStream rng(2, 0);
  FlatState x0 = make_state({0}, 2);
  FlatState x1 = make_state({1}, 2);
  int n = 100000, hits = 0;
  for (int i = 0; i < n; ++i)
    hits += sample_conditional_state(x0, x1, 0.5, rng).tokens[0];
  CHECK(std::abs(hits / double(n) - 0.5) < 0.02);
}

TEST_CASE("marginal velocity formula") {
  // already clean: zero row
  VelocityRow zero = marginal_velocity(Categorical::delta(1, 3), 1, 0.3);
  for (double r : zero.rates) CHECK(r == doctest::Approx(0.0));

  VelocityRow v = marginal_velocity(Categorical({0.0, 1.0}), 0, 0.5);
  CHECK(v.rates[0] == doctest::Approx(-2.0));
  CHECK(v.rates[1] == doctest::Approx(2.0));

  RandomStream rng(3, 0);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> w(4);
    double sum = 0;
    for (double& x : w) {
      x = rng.next_double();
      sum += x;
    }
    for (double& x : w) x /= sum;
    double t = 0.9 * rng.next_double();
    int cur = static_cast<int>(rng.next_below(4));
    VelocityRow row = marginal_velocity(Categorical(w), cur, t);
    double rowsum = 0;
    for (int y = 0; y < 4; ++y) {
      rowsum += row.rates[y];
      if (y != cur) CHECK(row.rates[y] >= 0.0);
    }
    CHECK(rowsum == doctest::Approx(0.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(marginal_velocity(Categorical({0.5, 0.5}), 0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("euler kernel weights are a valid distribution for any h <= 1-t") {
  RandomStream rng(4, 0);
  for (int rep = 0; rep < 200; ++rep) {
    double t = 0.99 * rng.next_double();
    double h = (1.0 - t) * (0.01 + 0.99 * rng.next_double());
    double alpha = h / (1.0 - t);
    std::vector<double> p(5);
    double sum = 0;
    for (double& x : p) {
      x = rng.next_double();
      sum += x;
    }
    for (double& x : p) x /= sum;
    int cur = static_cast<int>(rng.next_below(5));
    double total = 0;
    for (int y = 0; y < 5; ++y) {
      double w = (y == cur ? 1.0 - alpha : 0.0) + alpha * p[y];
      CHECK(w >= -1e-12);
      CHECK(w <= 1.0 + 1e-12);
      total += w;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("euler step keeps the state when the denoiser is a delta on it") {
  auto den = identity_denoiser();
  RandomStream rng(5, 0);
  FlatState x = make_state({2, 0, 1}, 3);
  for (int rep = 0; rep < 100; ++rep) {
    CHECK(euler_step(x, den, 0.25, 0.1, rng) == x);
  }
}

TEST_CASE("terminal euler step samples the denoiser law exactly") {
  std::vector<double> target = {0.1, 0.2, 0.3, 0.4};
  auto den = constant_denoiser({target});
  RandomStream rng(6, 0);
  const int n = 100000;
  std::vector<double> counts(4, 0.0);
  FlatState x = make_state({0}, 4);
  for (int i = 0; i < n; ++i) {
    FlatState y = euler_step(x, den, 0.75, 0.25, rng);
    counts[y.tokens[0]] += 1.0 / n;
  }
  CHECK(total_variation(Categorical(counts), Categorical(target)) <= 0.02);
}

TEST_CASE("trajectories are bit-identical across runs with equal streams") {
  auto den = constant_denoiser({{0.3, 0.7}, {0.5, 0.5}});
  TimeGrid grid(20);
  FlatState x0 = make_state({0, 0}, 2);
  for (Stepper s : {Stepper::kEuler, Stepper::kRk2}) {
    RandomStream r1(77, 1), r2(77, 1);
    FlatState a = simulate_trajectory(x0, den, grid, s, r1);
    FlatState b = simulate_trajectory(x0, den, grid, s, r2);
    CHECK(a == b);
  }
}

TEST_CASE("source equal to data means no movement") {
  // denoiser concentrated on the current state everywhere
  auto den = identity_denoiser();
  TimeGrid grid(10);
  FlatState x0 = make_state({1, 2, 0}, 3);
  RandomStream rng(8, 0);
  CHECK(simulate_trajectory(x0, den, grid, Stepper::kEuler, rng) == x0);
  CHECK(simulate_trajectory(x0, den, grid, Stepper::kRk2, rng) == x0);
}

TEST_CASE("single-step grid draws directly from the denoiser") {
  std::vector<double> law = {0.25, 0.75};
  auto den = constant_denoiser({law});
  TimeGrid grid(1);
  FlatState x0 = make_state({0}, 2);
  RandomStream rng(9, 0);
  const int n = 100000;
  double ones = 0;
  for (int i = 0; i < n; ++i)
    ones += simulate_trajectory(x0, den, grid, Stepper::kEuler, rng).tokens[0];
  CHECK(std::abs(ones / n - 0.75) < 0.02);
}

TEST_CASE("recorder captures every intermediate state") {
  auto den = constant_denoiser({{0.5, 0.5}});
  TimeGrid grid(5);
  FlatState x0 = make_state({0}, 2);
  RandomStream rng(10, 0);
  std::vector<double> times;
  simulate_trajectory(x0, den, grid, Stepper::kEuler, rng,
                      [&](int, double t, const FlatState&) { times.push_back(t); });
  CHECK(times.size() == 6);
  CHECK(times.front() == 0.0);
  CHECK(times.back() == 1.0);
}

TEST_CASE("flow with the exact denoiser reproduces the data law (small case)") {
  // coupling: source token 0, data uniform over {0,1}; 1 node dim
  std::vector<CouplingPair> pairs;
  CouplingPair a{make_state({0}, 2), make_state({0}, 2), 1.0, {}};
  CouplingPair b{make_state({0}, 2), make_state({1}, 2), 1.0, {}};
  pairs.push_back(a);
  pairs.push_back(b);
  CouplingDataset ds(pairs);
  ExactPosteriorDenoiser den(ds);

  TimeGrid grid(100);
  RandomStream rng(11, 0);
  const int n = 20000;
  Histogram emp;
  FlatState x0 = make_state({0}, 2);
  for (int i = 0; i < n; ++i) {
    RandomStream traj = rng.child(i);
    emp.add(simulate_trajectory(x0, den, grid, Stepper::kEuler, traj));
  }
  emp.normalize();
  CHECK(histogram_tv(emp, coupling_terminal_law(ds)) <= 0.03);
}

TEST_CASE("rk2 matches euler quality on a one-dimensional problem") {
  // enumerated truth; both steppers should land within noise of it at T = 25
  std::vector<CouplingPair> pairs;
  for (int y = 0; y < 3; ++y)
    pairs.push_back({make_state({0}, 3), make_state({y}, 3), 1.0 + y, {}});
  CouplingDataset ds(pairs);
  ExactPosteriorDenoiser den(ds);
  Histogram truth = coupling_terminal_law(ds);

  TimeGrid grid(25);
  FlatState x0 = make_state({0}, 3);
  const int n = 200000;
  auto terminal_tv = [&](Stepper s, uint64_t seed) {
    RandomStream rng(seed, 0);
    Histogram emp;
    for (int i = 0; i < n; ++i) {
      RandomStream traj = rng.child(i);
      emp.add(simulate_trajectory(x0, den, grid, s, traj));
    }
    emp.normalize();
    return histogram_tv(emp, truth);
  };
  double tv_euler = terminal_tv(Stepper::kEuler, 12);
  double tv_rk2 = terminal_tv(Stepper::kRk2, 13);
  CHECK(tv_rk2 <= tv_euler + 0.01);
  CHECK(tv_euler <= 0.02);
}

TEST_CASE("rk2 corrector mixture coefficients sum to one before clamping") {
  RandomStream rng(14, 0);
  for (int rep = 0; rep < 100; ++rep) {
    double t = 0.8 * rng.next_double();
    double h = (1.0 - t) * 0.5 * rng.next_double() + 1e-3;
    if (t + h >= 1.0) continue;
    double a = 0.5 * h / (1.0 - t);
    double b = 0.5 * h / (1.0 - t - h);
    std::vector<double> pa(4), pb(4);
    double sa = 0, sb = 0;
    for (int i = 0; i < 4; ++i) {
      pa[i] = rng.next_double();
      sa += pa[i];
      pb[i] = rng.next_double();
      sb += pb[i];
    }
    int cur = static_cast<int>(rng.next_below(4));
    int hat = static_cast<int>(rng.next_below(4));
    double total = 0;
    for (int y = 0; y < 4; ++y)
      total += (y == cur ? 1.0 - a : 0.0) + a * pa[y] / sa + b * pb[y] / sb -
               (y == hat ? b : 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rk2 rejects the singular terminal interval; steppers validate steps") {
  auto den = constant_denoiser({{0.5, 0.5}});
  RandomStream rng(15, 0);
  FlatState x = make_state({0}, 2);
  CHECK_THROWS_AS(rk2_step(x, den, 0.5, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(euler_step(x, den, 0.8, 0.4, rng), std::invalid_argument);
  CHECK_THROWS_AS(euler_step(x, den, 0.5, 0.0, rng), std::invalid_argument);
}

TEST_CASE("point estimate takes the argmax with low-index ties") {
  DenoiserOutput out;
  out.reset(StateLayout{3, 0, 3, 1});
  auto set = [&](int d, std::vector<double> p) {
    auto span = out.dim(d);
    for (size_t i = 0; i < p.size(); ++i) span[i] = p[i];
  };
  set(0, {0.0, 1.0, 0.0});
  set(1, {0.5, 0.5, 0.0});
  set(2, {0.2, 0.3, 0.5});
  FlatState est = point_estimate(out);
  CHECK(est.tokens == std::vector<int32_t>{1, 0, 2});
}
