#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fragflow/categorical.hpp"
#include "fragflow/random.hpp"
#include "fragflow/state.hpp"

namespace fragflow {

// Uniform grid over [0,1]: t_i = i/T.
struct TimeGrid {
  int steps;

  explicit TimeGrid(int t) : steps(t) {
    if (t < 1) throw std::invalid_argument("TimeGrid: need at least one step");
  }
  double time(int i) const { return static_cast<double>(i) / steps; }
  double step() const { return 1.0 / steps; }
};

// Per-dimension clean-token distributions, stored as one flat buffer.
// Dimension i occupies vocab_of(i) consecutive probabilities.
struct DenoiserOutput {
  StateLayout layout;
  std::vector<double> probs;
  std::vector<int32_t> offsets;

  void reset(const StateLayout& l);
  std::span<double> dim(int32_t d) {
    return {probs.data() + offsets[d], static_cast<size_t>(layout.vocab_of(d))};
  }
  std::span<const double> dim(int32_t d) const {
    return {probs.data() + offsets[d], static_cast<size_t>(layout.vocab_of(d))};
  }
};

// Posterior model p(x_1^i | x_t). Implementations must be pure and safe for
// concurrent read-only evaluation.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual void evaluate(const FlatState& x, double t, DenoiserOutput& out) const = 0;

  DenoiserOutput evaluate(const FlatState& x, double t) const {
    DenoiserOutput out;
    evaluate(x, t, out);
    return out;
  }
};

// Per-dimension argmax; ties go to the lowest token index.
FlatState point_estimate(const DenoiserOutput& out);

// Rates u[y] = (denoised[y] - [y == current]) / (1 - t). Rows sum to zero and
// are non-negative off the current token.
struct VelocityRow {
  std::vector<double> rates;
};
VelocityRow marginal_velocity(const Categorical& denoised, int current, double t);

// Each dimension independently takes x0's token with probability 1-t and
// x1's with probability t.
FlatState sample_conditional_state(const FlatState& x0, const FlatState& x1, double t,
                                   RandomStream& rng);

enum class Stepper { kEuler, kRk2 };

// One Euler transition: per dimension, keep the current token with
// probability 1 - h/(1-t), otherwise draw from the denoised distribution.
// This mixture is the transition kernel delta(x_t) + h*u in a form that is
// non-negative for every h <= 1-t; at h = 1-t it samples the denoiser's law
// exactly.
FlatState euler_step(const FlatState& x, const Denoiser& den, double t, double h,
                     RandomStream& rng);

// Two-stage update: a predictor draw from the Euler kernel, then one sample
// from the half-and-half averaged-velocity kernel. Requires t + h < 1; the
// caller handles the terminal interval with the exact Euler collapse.
// The averaged kernel can go slightly negative at the predictor's token; mass
// is clamped at zero and renormalized.
FlatState rk2_step(const FlatState& x, const Denoiser& den, double t, double h,
                   RandomStream& rng);

using TrajectoryRecorder = std::function<void(int step, double t, const FlatState&)>;

FlatState simulate_trajectory(const FlatState& x0, const Denoiser& den,
                              const TimeGrid& grid, Stepper stepper, RandomStream& rng,
                              const TrajectoryRecorder& recorder = {});

std::string flat_state_to_json(const FlatState& s);

}  // namespace fragflow
