#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "factlearn/config.hpp"
#include "factlearn/engine.hpp"
#include "factlearn/model.hpp"
#include "factlearn/oracle.hpp"
#include "factlearn/pca.hpp"
#include "factlearn/solver.hpp"

namespace factlearn {

// Loaded, sorted database and its variable order.
struct Workspace {
  Database db;
  VariableOrder order;

  static Workspace load(const JobConfig& config);
  static Workspace from(const Database& db, const OrderSpec& spec);
};

struct TrainReport {
  ModelSpec model;
  bool used_fds = false;
  std::size_t aggregate_count = 0;
  EngineCounters engine;
  std::size_t dimension = 0;
  std::vector<std::string> dropped_components;
  TrainResult result;
  ParameterSet parameters;
  double aggregate_seconds = 0.0;
  double converge_seconds = 0.0;
};

TrainReport run_training(const Workspace& ws, const ModelSpec& model, const SolverConfig& solver, bool use_fds,
                         const std::vector<SimpleFd>& fds, const EngineOptions& engine = {});

struct PcaReport {
  DummyLayout layout;
  EigenResult eigen;
  bool used_fds = false;
  std::size_t aggregate_count = 0;
  EngineCounters engine;
  double seconds = 0.0;
};

PcaReport run_pca(const Workspace& ws, const std::vector<Feature>& features, std::size_t k, bool use_fds,
                  const std::vector<SimpleFd>& fds, const EngineOptions& engine = {});

// Output documents use variable names and category labels, never interned ids.
nlohmann::json model_json(const TrainReport& report, const Database& db);
nlohmann::json pca_json(const PcaReport& report, const Database& db);
nlohmann::json aggregates_json(const AggregateResult& aggregates, const VariableOrder& order, const Database& db);
std::string trace_csv(const std::vector<TraceRow>& trace);

// Categorical assignment of a key over the given variables.
oracle::Assignment assignment_of(const std::vector<std::string>& key_variables, const Key& key);
// Parameter lookup in oracle terms; absent entries read as 0.
oracle::Lookup lookup_of(const ParameterSet& parameters);

struct VerifyReport {
  std::size_t join_rows = 0;
  double sigma_max_diff = 0.0;
  double c_max_diff = 0.0;
  double s_y_diff = 0.0;
  double objective_diff = 0.0;  // J at a random θ, factorized vs row loop
  std::size_t unmatched = 0;    // factorized coordinates missing from the oracle encoding
  double max_diff() const;
};

// Compares the factorized (Σ, c, s_Y) and objective against the materialized join.
VerifyReport verify(const Workspace& ws, const ModelSpec& model, std::uint64_t seed);

}  // namespace factlearn
