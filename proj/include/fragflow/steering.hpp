#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fragflow/flow.hpp"

namespace fragflow {

using RewardFn = std::function<double(const FlatState&)>;
using SourceSampler = std::function<FlatState(RandomStream&)>;

// One weighted trajectory. reward_sum is the running sum of intermediate
// rewards along the whole path (inherited through resampling);
// potential_log_sum accumulates every emitted intermediate log-potential so
// the terminal correction can cancel them exactly.
struct Particle {
  FlatState state;
  double log_weight = 0.0;
  double reward_sum = 0.0;
  double potential_log_sum = 0.0;
  RandomStream rng;
  std::vector<int> ancestry;
};

enum class ResampleMode { kEveryStep, kEssThreshold };

struct SteeringConfig {
  int particles = 4;
  double lambda = 1.0;
  ResampleMode resample_mode = ResampleMode::kEveryStep;
  double ess_fraction = 0.5;
  Stepper stepper = Stepper::kEuler;
};

// r(point_estimate(denoiser(x_t))), the denoiser-predicted terminal reward.
// At t = 1 this is the terminal reward of the state itself.
double intermediate_reward(const Denoiser& den, const RewardFn& reward,
                           const FlatState& x, double t);

// Intermediate potential U_t = exp(sum of rewards up to t): adds r to the
// running sum and the resulting cumulative log-potential to the weight.
void apply_intermediate_potential(Particle& p, double r);

// Terminal potential U_1 = exp(lambda * r1) / prod of intermediate
// potentials; the product over every emitted potential telescopes to
// exp(lambda * r1) exactly.
void apply_terminal_potential(Particle& p, double r1, double lambda);

// (sum w)^2 / sum w^2, in [1, K] for K positive weights.
double effective_sample_size(std::span<const double> weights);

// Systematic resampling: ancestors of the K offspring, non-decreasing order,
// expected copy count K * w_m / sum(w).
std::vector<int> systematic_resample(std::span<const double> weights, RandomStream& rng);

struct SmcTraceEntry {
  double t = 0.0;
  double ess = 0.0;
  double mean_reward = 0.0;
  bool resampled = false;
};

struct SmcResult {
  std::vector<Particle> particles;  // terminal, with final log-weights
  FlatState sample;                 // weighted draw from the terminal particles
};

// Feynman-Kac steered SMC over the flow's transition kernel. Particle m's
// stream is run.child(m) initially and is re-derived from (run, generation,
// m) after each resampling, so results do not depend on scheduling. With
// K = 1 no resampling happens and the run is bit-identical to
// simulate_trajectory on the same stream.
SmcResult smc_run(const SourceSampler& source, const Denoiser& den,
                  const RewardFn& reward, const TimeGrid& grid,
                  const SteeringConfig& cfg, RandomStream rng,
                  std::vector<SmcTraceEntry>* trace = nullptr);

// K independent unsteered trajectories; returns the terminal state with the
// highest reward, ties to the lowest particle index.
FlatState greedy_baseline_run(const SourceSampler& source, const Denoiser& den,
                              const RewardFn& reward, const TimeGrid& grid, int k,
                              RandomStream rng, Stepper stepper = Stepper::kEuler);

}  // namespace fragflow
