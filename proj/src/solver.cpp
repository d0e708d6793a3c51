#include "factlearn/solver.hpp"

#include <algorithm>
#include <cmath>

#include "factlearn/errors.hpp"

namespace factlearn {

namespace {

constexpr double kMinStep = 1e-8;
constexpr double kMaxStep = 1e8;

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Barzilai-Borwein step from s = Δθ and y = Δd. Under negative curvature
// (nonconvex FaMa) ‖s‖/‖y‖ is used instead; keeps `previous` when y vanishes.
double bb_step(std::span<const double> s, std::span<const double> y, double previous) {
  double sy = dot(s, y), yy = dot(y, y);
  if (!(yy > 1e-300)) return previous;
  if (!(sy > 0.0)) return std::clamp(std::sqrt(dot(s, s) / yy), kMinStep, kMaxStep);
  return std::clamp(sy / yy, kMinStep, kMaxStep);
}

// The smallest decrease that is still visible in J's floating-point value.
bool below_resolution(double alpha, double d_norm2, double j) {
  return 0.5 * alpha * d_norm2 <= 1e-16 * std::max(1.0, std::abs(j));
}

void check_finite(double j, std::span<const double> g, int iteration) {
  if (!std::isfinite(j) || !finite(g))
    throw NumericError("training diverged at iteration " + std::to_string(iteration) +
                       " (non-finite objective or gradient)");
}

TrainResult train_quadratic(const QuadraticObjective& obj, std::vector<double> theta, const SolverConfig& cfg) {
  TrainResult res;
  std::uint64_t matvecs_before = obj.sigma_applications();
  double j = obj.value(theta);
  std::vector<double> d = obj.gradient(theta);
  res.counters.objective_evaluations = 1;
  res.counters.gradient_evaluations = 1;
  double alpha = cfg.initial_step;
  check_finite(j, d, 0);
  res.trace.push_back({0, j, norm2(d), 0.0, 0});

  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    if (norm_inf(d) <= cfg.tolerance) {
      res.converged = true;
      res.stop_reason = "gradient";
      break;
    }
    LinearStep step = prepare_linear_step(obj, theta, d);
    int backtracks = 0;
    bool stalled = false;
    while (armijo_inequality(step, alpha)) {
      if (below_resolution(alpha, step.d_norm2, j)) {
        stalled = true;
        break;
      }
      alpha *= cfg.backtrack_factor;
      if (++backtracks > cfg.max_backtracks)
        throw NumericError("line search failed after " + std::to_string(cfg.max_backtracks) + " halvings");
    }
    res.counters.backtracks += static_cast<std::uint64_t>(backtracks);
    if (stalled) {
      res.converged = true;
      res.stop_reason = "resolution";
      break;
    }
    double j_next = j + objective_change(step, alpha);
    std::vector<double> d_next = next_gradient(step, alpha);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= alpha * d[i];
    check_finite(j_next, d_next, it + 1);
    res.trace.push_back({it + 1, j_next, norm2(d_next), alpha, backtracks});

    std::vector<double> s(d.size()), y(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      s[i] = -alpha * d[i];
      y[i] = d_next[i] - d[i];
    }
    double decrease = j - j_next;
    j = j_next;
    d = std::move(d_next);
    alpha = bb_step(s, y, alpha);
    if (decrease <= cfg.objective_tolerance * std::max(1.0, std::abs(j))) {
      ++it;
      res.converged = true;
      res.stop_reason = "objective";
      break;
    }
  }
  if (!res.converged) res.stop_reason = "max_iters";
  res.iterations = it;
  // Report J from a fresh evaluation; the tracked value accumulates rounding.
  res.objective = obj.value(theta);
  res.counters.sigma_matvecs = obj.sigma_applications() - matvecs_before;
  res.theta = std::move(theta);
  return res;
}

TrainResult train_generic(const Objective& obj, std::vector<double> theta, const SolverConfig& cfg) {
  TrainResult res;
  double j = obj.value(theta);
  std::vector<double> d = obj.gradient(theta);
  res.counters.objective_evaluations = 1;
  res.counters.gradient_evaluations = 1;
  check_finite(j, d, 0);
  double alpha = cfg.initial_step;
  res.trace.push_back({0, j, norm2(d), 0.0, 0});

  std::vector<double> trial(theta.size());
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    if (norm_inf(d) <= cfg.tolerance) {
      res.converged = true;
      res.stop_reason = "gradient";
      break;
    }
    double dn2 = dot(d, d);
    int backtracks = 0;
    bool stalled = false;
    double j_trial = 0.0;
    while (true) {
      for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] - alpha * d[i];
      j_trial = obj.value(trial);
      ++res.counters.objective_evaluations;
      if (std::isfinite(j_trial) && j_trial < j - 0.5 * alpha * dn2) break;
      if (below_resolution(alpha, dn2, j)) {
        stalled = true;
        break;
      }
      alpha *= cfg.backtrack_factor;
      if (++backtracks > cfg.max_backtracks)
        throw NumericError("line search failed after " + std::to_string(cfg.max_backtracks) + " halvings");
    }
    res.counters.backtracks += static_cast<std::uint64_t>(backtracks);
    if (stalled) {
      res.converged = true;
      res.stop_reason = "resolution";
      break;
    }
    std::vector<double> d_next = obj.gradient(trial);
    ++res.counters.gradient_evaluations;
    check_finite(j_trial, d_next, it + 1);
    res.trace.push_back({it + 1, j_trial, norm2(d_next), alpha, backtracks});

    std::vector<double> s(d.size()), y(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      s[i] = trial[i] - theta[i];
      y[i] = d_next[i] - d[i];
    }
    double decrease = j - j_trial;
    theta.swap(trial);
    j = j_trial;
    d = std::move(d_next);
    alpha = bb_step(s, y, alpha);
    if (decrease <= cfg.objective_tolerance * std::max(1.0, std::abs(j))) {
      ++it;
      res.converged = true;
      res.stop_reason = "objective";
      break;
    }
  }
  if (!res.converged) res.stop_reason = "max_iters";
  res.iterations = it;
  res.objective = j;
  res.theta = std::move(theta);
  return res;
}

}  // namespace

TrainResult train(const Objective& objective, const SolverConfig& config) {
  return train(objective, objective.initial_point(config.seed), config);
}

TrainResult train(const Objective& objective, std::vector<double> theta, const SolverConfig& config) {
  if (!(config.tolerance > 0.0)) throw SchemaError("solver tolerance must be positive");
  if (!(config.initial_step > 0.0)) throw SchemaError("solver initial step must be positive");
  if (theta.size() != objective.dimension()) throw SchemaError("initial point has the wrong dimension");
  if (const auto* q = objective.as_quadratic()) return train_quadratic(*q, std::move(theta), config);
  return train_generic(objective, std::move(theta), config);
}

}  // namespace factlearn
