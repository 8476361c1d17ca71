#include <cmath>

#include "doctest.h"
#include "fragflow/categorical.hpp"

using namespace fragflow;

TEST_CASE("degenerate distribution always returns its support point") {
  RandomStream rng(1, 2);
  Categorical d({1.0, 0.0});
  for (int i = 0; i < 100; ++i) CHECK(d.sample(rng) == 0);
}

TEST_CASE("invalid weights are rejected") {
  CHECK_THROWS_AS(Categorical({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(Categorical({-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(Categorical({0.4, 0.4}), std::invalid_argument);  // sum far from 1
  CHECK_THROWS_AS(Categorical({}), std::invalid_argument);
}

TEST_CASE("small normalization drift is repaired, large rejected") {
  Categorical d({0.5 + 4e-7, 0.5});
  double sum = d[0] + d[1];
  CHECK(std::abs(sum - 1.0) < 1e-12);
  CHECK_THROWS(Categorical({0.5 + 1e-3, 0.5}));
}

TEST_CASE("fair coin empirical frequency") {
  RandomStream rng(7, 0);
  Categorical d({0.5, 0.5});
  int n = 100000, ones = 0;
  for (int i = 0; i < n; ++i) ones += d.sample(rng);
  double freq = static_cast<double>(ones) / n;
  CHECK(std::abs(freq - 0.5) < 0.02);
}

TEST_CASE("sampling is unbiased: TV between empirical and truth") {
  // TV <= 3*sqrt(d/n) at n = 1e5 for d <= 8
  for (int d = 2; d <= 8; d += 3) {
    RandomStream rng(13, d);
    std::vector<double> w(d);
    double sum = 0;
    for (int i = 0; i < d; ++i) {
      w[i] = 0.3 + rng.next_double();
      sum += w[i];
    }
    for (double& x : w) x /= sum;
    Categorical dist(w);
    const int n = 100000;
    std::vector<double> counts(d, 0.0);
    for (int i = 0; i < n; ++i) counts[dist.sample(rng)] += 1.0 / n;
    CHECK(total_variation(dist, Categorical(counts)) <= 3.0 * std::sqrt(double(d) / n));
  }
}

TEST_CASE("identical streams are bit-identical, children independent of schedule") {
  RandomStream a(42, 9), b(42, 9);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  RandomStream parent(5, 5);
  RandomStream c_before = parent.child(3);
  parent.next_u64();
  parent.next_u64();
  RandomStream c_after = parent.child(3);
  for (int i = 0; i < 100; ++i) CHECK(c_before.next_u64() == c_after.next_u64());

  // split advances the parent, so consecutive splits differ
  RandomStream p2(5, 5);
  RandomStream s1 = p2.split();
  RandomStream s2 = p2.split();
  CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("total variation values") {
  CHECK(total_variation(Categorical({0.3, 0.7}), Categorical({0.3, 0.7})) == 0.0);
  CHECK(total_variation(Categorical({1.0, 0.0}), Categorical({0.0, 1.0})) == 1.0);
  CHECK(total_variation(Categorical({0.75, 0.25}), Categorical({0.25, 0.75})) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(total_variation(Categorical({1.0}), Categorical({0.5, 0.5})),
                  std::invalid_argument);
}

TEST_CASE("KL divergence values") {
  CHECK(kl_divergence(Categorical({0.3, 0.7}), Categorical({0.3, 0.7})) == 0.0);
  CHECK(kl_divergence(Categorical({1.0, 0.0}), Categorical({0.5, 0.5})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence(Categorical({0.5, 0.5}), Categorical({1.0, 0.0})),
                  std::invalid_argument);
}

TEST_CASE("zero metrics exactly on equal inputs") {
  RandomStream rng(3, 1);
  for (int rep = 0; rep < 20; ++rep) {
    int d = 2 + static_cast<int>(rng.next_below(6));
    std::vector<double> w(d);
    double sum = 0;
    for (double& x : w) {
      x = rng.next_double() + 0.05;
      sum += x;
    }
    for (double& x : w) x /= sum;
    Categorical p(w);
    CHECK(total_variation(p, p) == 0.0);
    CHECK(kl_divergence(p, p) == 0.0);
  }
}
