#include "fragflow/flow.hpp"

#include <cmath>

#include "json.hpp"

namespace fragflow {

void DenoiserOutput::reset(const StateLayout& l) {
  layout = l;
  offsets.resize(l.dims());
  int32_t total = 0;
  for (int32_t d = 0; d < l.dims(); ++d) {
    offsets[d] = total;
    total += l.vocab_of(d);
  }
  probs.assign(total, 0.0);
}

FlatState point_estimate(const DenoiserOutput& out) {
  FlatState s;
  s.layout = out.layout;
  s.tokens.resize(out.layout.dims());
  for (int32_t d = 0; d < out.layout.dims(); ++d) {
    auto p = out.dim(d);
    int best = 0;
    for (int c = 1; c < static_cast<int>(p.size()); ++c)
      if (p[c] > p[best]) best = c;
    s.tokens[d] = best;
  }
  return s;
}

VelocityRow marginal_velocity(const Categorical& denoised, int current, double t) {
  if (t >= 1.0) throw std::invalid_argument("marginal_velocity: singular at t = 1");
  if (current < 0 || current >= denoised.size())
    throw std::invalid_argument("marginal_velocity: current token out of range");
  VelocityRow row;
  row.rates.resize(denoised.size());
  const double inv = 1.0 / (1.0 - t);
  for (int y = 0; y < denoised.size(); ++y)
    row.rates[y] = (denoised[y] - (y == current ? 1.0 : 0.0)) * inv;
  return row;
}

FlatState sample_conditional_state(const FlatState& x0, const FlatState& x1, double t,
                                   RandomStream& rng) {
  check_same_layout(x0, x1, "sample_conditional_state");
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("sample_conditional_state: t out of [0,1]");
  FlatState out = x0;
  for (size_t d = 0; d < out.tokens.size(); ++d)
    if (rng.next_double() < t) out.tokens[d] = x1.tokens[d];
  return out;
}

namespace {

constexpr double kTerminalEps = 1e-12;

void check_step(const FlatState& x, double t, double h, const char* where) {
  if (t < 0.0 || h <= 0.0 || t + h > 1.0 + kTerminalEps)
    throw std::invalid_argument(std::string(where) + ": invalid step");
  if (static_cast<int32_t>(x.tokens.size()) != x.layout.dims())
    throw std::invalid_argument(std::string(where) + ": token count mismatch");
}

// Draw from (1-alpha)*delta(cur) + alpha*p using a single uniform.
int sample_mixture(std::span<const double> p, int cur, double alpha, double u) {
  if (u >= alpha) return cur;
  double v = u / alpha;  // uniform on [0,1) given the denoiser branch
  double acc = 0.0;
  int last_positive = cur;
  for (int c = 0; c < static_cast<int>(p.size()); ++c) {
    if (p[c] > 0.0) last_positive = c;
    acc += p[c];
    if (v < acc) return c;
  }
  return last_positive;
}

}  // namespace

FlatState euler_step(const FlatState& x, const Denoiser& den, double t, double h,
                     RandomStream& rng) {
  check_step(x, t, h, "euler_step");
  const bool terminal = t + h >= 1.0 - kTerminalEps;
  const double alpha = terminal ? 1.0 : h / (1.0 - t);

  thread_local DenoiserOutput out;
  den.evaluate(x, t, out);

  RandomStream step_rng = rng.split();
  FlatState next = x;
  for (int32_t d = 0; d < x.layout.dims(); ++d) {
    RandomStream dim_rng = step_rng.child(static_cast<uint64_t>(d));
    next.tokens[d] =
        sample_mixture(out.dim(d), x.tokens[d], alpha, dim_rng.next_double());
  }
  return next;
}

FlatState rk2_step(const FlatState& x, const Denoiser& den, double t, double h,
                   RandomStream& rng) {
  check_step(x, t, h, "rk2_step");
  if (t + h >= 1.0 - kTerminalEps)
    throw std::invalid_argument("rk2_step: corrector velocity is singular at t + h = 1");

  RandomStream step_rng = rng.split();
  RandomStream pred_rng = step_rng.child(0);
  RandomStream corr_rng = step_rng.child(1);

  thread_local DenoiserOutput out_t, out_th;
  den.evaluate(x, t, out_t);

  const double alpha = h / (1.0 - t);
  FlatState pred = x;
  for (int32_t d = 0; d < x.layout.dims(); ++d) {
    RandomStream dim_rng = pred_rng.child(static_cast<uint64_t>(d));
    pred.tokens[d] =
        sample_mixture(out_t.dim(d), x.tokens[d], alpha, dim_rng.next_double());
  }

  den.evaluate(pred, t + h, out_th);

  const double a = 0.5 * h / (1.0 - t);
  const double b = 0.5 * h / (1.0 - t - h);
  FlatState next = x;
  std::vector<double> w;
  for (int32_t d = 0; d < x.layout.dims(); ++d) {
    auto pa = out_t.dim(d);
    auto pb = out_th.dim(d);
    const int cur = x.tokens[d];
    const int hat = pred.tokens[d];
    w.assign(pa.size(), 0.0);
    double total = 0.0;
    for (int c = 0; c < static_cast<int>(pa.size()); ++c) {
      double v = (c == cur ? 1.0 - a : 0.0) + a * pa[c] + b * pb[c] -
                 (c == hat ? b : 0.0);
      if (v < 0.0) v = 0.0;  // averaged kernel can dip below zero at the predictor token
      w[c] = v;
      total += v;
    }
    RandomStream dim_rng = corr_rng.child(static_cast<uint64_t>(d));
    if (total <= 0.0) {
      next.tokens[d] = cur;
      continue;
    }
    double u = dim_rng.next_double() * total;
    double acc = 0.0;
    int pick = cur;
    for (int c = 0; c < static_cast<int>(w.size()); ++c) {
      if (w[c] > 0.0) pick = c;
      acc += w[c];
      if (u < acc) {
        pick = c;
        break;
      }
    }
    next.tokens[d] = pick;
  }
  return next;
}

FlatState simulate_trajectory(const FlatState& x0, const Denoiser& den,
                              const TimeGrid& grid, Stepper stepper, RandomStream& rng,
                              const TrajectoryRecorder& recorder) {
  FlatState x = x0;
  if (recorder) recorder(0, 0.0, x);
  for (int i = 0; i < grid.steps; ++i) {
    double t = grid.time(i);
    double h = grid.time(i + 1) - t;
    // the final interval always collapses exactly onto the denoiser's law
    if (stepper == Stepper::kRk2 && i + 1 < grid.steps)
      x = rk2_step(x, den, t, h, rng);
    else
      x = euler_step(x, den, t, h, rng);
    if (recorder) recorder(i + 1, grid.time(i + 1), x);
  }
  return x;
}

std::string flat_state_to_json(const FlatState& s) {
  nlohmann::json j;
  j["layout"] = {{"node_dims", s.layout.node_dims},
                 {"edge_dims", s.layout.edge_dims},
                 {"node_vocab", s.layout.node_vocab},
                 {"edge_vocab", s.layout.edge_vocab}};
  j["tokens"] = s.tokens;
  return j.dump();
}

}  // namespace fragflow
