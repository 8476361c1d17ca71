#include "fragflow/steering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fragflow {

namespace {

constexpr double kTerminalEps = 1e-12;
constexpr uint64_t kResampleLane = (1ULL << 60) + 1;
constexpr uint64_t kChoiceLane = (1ULL << 60) + 2;

uint64_t particle_lane(int generation, int m) {
  if (generation == 0) return static_cast<uint64_t>(m);
  return (static_cast<uint64_t>(generation) << 32) | static_cast<uint64_t>(m);
}

std::vector<double> normalized_weights(const std::vector<Particle>& ps) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& p : ps) mx = std::max(mx, p.log_weight);
  if (!std::isfinite(mx))
    throw std::runtime_error("smc_run: all particle weights degenerate (-inf)");
  std::vector<double> w(ps.size());
  double total = 0.0;
  for (size_t m = 0; m < ps.size(); ++m) {
    w[m] = std::exp(ps[m].log_weight - mx);
    total += w[m];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double intermediate_reward(const Denoiser& den, const RewardFn& reward,
                           const FlatState& x, double t) {
  if (t >= 1.0 - kTerminalEps) return reward(x);
  thread_local DenoiserOutput out;
  den.evaluate(x, t, out);
  return reward(point_estimate(out));
}

void apply_intermediate_potential(Particle& p, double r) {
  if (r < 0.0 || r > 1.0)
    throw std::invalid_argument("apply_intermediate_potential: reward outside [0,1]");
  p.reward_sum += r;
  p.log_weight += p.reward_sum;       // log U_t = cumulative reward sum
  p.potential_log_sum += p.reward_sum;
}

void apply_terminal_potential(Particle& p, double r1, double lambda) {
  p.reward_sum += r1;
  p.log_weight += lambda * r1 - p.potential_log_sum;
}

double effective_sample_size(std::span<const double> weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("effective_sample_size: negative weight");
    s += w;
    s2 += w * w;
  }
  if (s2 <= 0.0) throw std::invalid_argument("effective_sample_size: all-zero weights");
  return s * s / s2;
}

std::vector<int> systematic_resample(std::span<const double> weights,
                                     RandomStream& rng) {
  const int k = static_cast<int>(weights.size());
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("systematic_resample: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("systematic_resample: all-zero weights");

  double u = rng.next_double();
  std::vector<int> ancestors(k);
  double acc = weights[0] / total;
  int m = 0;
  for (int i = 0; i < k; ++i) {
    double pos = (u + i) / k;
    while (pos >= acc && m + 1 < k) {
      ++m;
      acc += weights[m] / total;
    }
    ancestors[i] = m;
  }
  return ancestors;
}

SmcResult smc_run(const SourceSampler& source, const Denoiser& den,
                  const RewardFn& reward, const TimeGrid& grid,
                  const SteeringConfig& cfg, RandomStream rng,
                  std::vector<SmcTraceEntry>* trace) {
  if (cfg.particles < 1) throw std::invalid_argument("smc_run: need K >= 1");
  if (cfg.lambda < 0.0) throw std::invalid_argument("smc_run: lambda must be >= 0");
  if (cfg.ess_fraction <= 0.0 || cfg.ess_fraction > 1.0)
    throw std::invalid_argument("smc_run: ess_fraction outside (0,1]");

  const int k = cfg.particles;
  RandomStream resample_rng = rng.child(kResampleLane);
  RandomStream choice_rng = rng.child(kChoiceLane);

  std::vector<Particle> ps(k);
  for (int m = 0; m < k; ++m) {
    ps[m].rng = rng.child(particle_lane(0, m));
    ps[m].state = source(ps[m].rng);
  }

  int generation = 0;
  auto reweight_and_resample = [&](double t) {
    double mean_r = 0.0;
    for (auto& p : ps) {
      double r = intermediate_reward(den, reward, p.state, t);
      apply_intermediate_potential(p, r);
      mean_r += r;
    }
    mean_r /= k;

    std::vector<double> w = normalized_weights(ps);
    double ess = effective_sample_size(w);
    bool do_resample =
        k > 1 && (cfg.resample_mode == ResampleMode::kEveryStep ||
                  ess < cfg.ess_fraction * k);
    if (do_resample) {
      std::vector<int> anc = systematic_resample(w, resample_rng);
      ++generation;
      std::vector<Particle> next(k);
      for (int m = 0; m < k; ++m) {
        const Particle& a = ps[anc[m]];
        next[m].state = a.state;
        next[m].reward_sum = a.reward_sum;
        next[m].potential_log_sum = a.potential_log_sum;
        next[m].log_weight = 0.0;
        next[m].rng = rng.child(particle_lane(generation, m));
        next[m].ancestry = a.ancestry;
        next[m].ancestry.push_back(anc[m]);
      }
      ps = std::move(next);
    }
    if (trace) trace->push_back({t, ess, mean_r, do_resample});
  };

  reweight_and_resample(0.0);  // FK start: reweight the source by U_0

  for (int i = 0; i < grid.steps; ++i) {
    double t = grid.time(i);
    double h = grid.time(i + 1) - t;
    bool last = i + 1 == grid.steps;
    for (auto& p : ps) {
      if (cfg.stepper == Stepper::kRk2 && !last)
        p.state = rk2_step(p.state, den, t, h, p.rng);
      else
        p.state = euler_step(p.state, den, t, h, p.rng);
    }
    if (!last) {
      reweight_and_resample(grid.time(i + 1));
    } else {
      double mean_r = 0.0;
      for (auto& p : ps) {
        double r1 = reward(p.state);
        apply_terminal_potential(p, r1, cfg.lambda);
        mean_r += r1;
      }
      if (trace) trace->push_back({1.0, 0.0, mean_r / k, false});
    }
  }

  std::vector<double> w = normalized_weights(ps);
  if (trace && !trace->empty()) trace->back().ess = effective_sample_size(w);
  int pick = sample_index(w, choice_rng);

  SmcResult result;
  result.sample = ps[pick].state;
  result.particles = std::move(ps);
  return result;
}

FlatState greedy_baseline_run(const SourceSampler& source, const Denoiser& den,
                              const RewardFn& reward, const TimeGrid& grid, int k,
                              RandomStream rng, Stepper stepper) {
  if (k < 1) throw std::invalid_argument("greedy_baseline_run: need K >= 1");
  FlatState best;
  double best_r = -1.0;
  for (int m = 0; m < k; ++m) {
    RandomStream traj_rng = rng.child(static_cast<uint64_t>(m));
    FlatState x0 = source(traj_rng);
    FlatState x1 = simulate_trajectory(x0, den, grid, stepper, traj_rng);
    double r = reward(x1);
    if (r > best_r) {
      best_r = r;
      best = std::move(x1);
    }
  }
  return best;
}

}  // namespace fragflow
