#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factlearn/model.hpp"

namespace factlearn {

struct SolverConfig {
  int max_iters = 20000;
  double tolerance = 1e-10;            // gradient ∞-norm
  double objective_tolerance = 0.0;  // relative decrease of J over one iteration; 0 disables
  double initial_step = 1.0;
  double backtrack_factor = 0.5;
  int max_backtracks = 200;
  std::uint64_t seed = 1;
};

struct TraceRow {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;
  int backtracks = 0;
};

struct SolverCounters {
  std::uint64_t sigma_matvecs = 0;
  std::uint64_t objective_evaluations = 0;
  std::uint64_t gradient_evaluations = 0;
  std::uint64_t backtracks = 0;
};

struct TrainResult {
  std::vector<double> theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;  // gradient, objective, resolution (no visible decrease left) or max_iters
  std::vector<TraceRow> trace;
  SolverCounters counters;
};

// Batch gradient descent with Armijo backtracking and Barzilai-Borwein steps.
// Linear objectives use the closed-form step quantities (one Σ product per iteration).
TrainResult train(const Objective& objective, const SolverConfig& config);
TrainResult train(const Objective& objective, std::vector<double> theta, const SolverConfig& config);

}  // namespace factlearn
