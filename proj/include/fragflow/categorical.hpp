#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fragflow/random.hpp"

namespace fragflow {

// Inverse-CDF draw from non-negative weights that sum to ~1.
// Falls back to the last positive entry if rounding leaves u past the total.
inline int sample_index(std::span<const double> weights, RandomStream& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i];
    if (u < acc) return i;
  }
  if (last_positive < 0) throw std::invalid_argument("sample_index: all-zero weights");
  return last_positive;
}

// Probability vector over a finite vocabulary. Construction validates:
// entries must be non-negative and sum to 1. A sum within 1e-6 of 1 is
// silently renormalized (accumulated float error); larger deviations are
// rejected.
class Categorical {
 public:
  static constexpr double kSumTolerance = 1e-9;
  static constexpr double kRenormTolerance = 1e-6;

  explicit Categorical(std::vector<double> weights) : w_(std::move(weights)) {
    if (w_.empty()) throw std::invalid_argument("Categorical: empty weights");
    double sum = 0.0;
    for (double x : w_) {
      if (!(x >= 0.0)) throw std::invalid_argument("Categorical: negative or NaN weight");
      sum += x;
    }
    double dev = std::abs(sum - 1.0);
    if (dev > kRenormTolerance)
      throw std::invalid_argument("Categorical: weights sum to " + std::to_string(sum));
    if (dev > kSumTolerance) {
      for (double& x : w_) x /= sum;
    }
  }

  static Categorical delta(int index, int size) {
    std::vector<double> w(size, 0.0);
    w.at(index) = 1.0;
    return Categorical(std::move(w));
  }

  static Categorical uniform(int size) {
    return Categorical(std::vector<double>(size, 1.0 / size));
  }

  int size() const { return static_cast<int>(w_.size()); }
  double operator[](int i) const { return w_[i]; }
  const std::vector<double>& weights() const { return w_; }

  int sample(RandomStream& rng) const { return sample_index(w_, rng); }

 private:
  std::vector<double> w_;
};

inline double total_variation(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("total_variation: dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

// KL(p || q). Requires q > 0 wherever p > 0.
inline double kl_divergence(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0)
      throw std::invalid_argument("kl_divergence: absolute continuity violated");
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s < 0.0 ? 0.0 : s;
}

}  // namespace fragflow
