#include "factlearn/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "factlearn/errors.hpp"
#include "factlearn/fd.hpp"
#include "factlearn/sigma.hpp"

namespace factlearn {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

json key_json(const std::vector<std::string>& vars, const Key& key, const Database& db) {
  json k = json::object();
  for (std::size_t i = 0; i < vars.size(); ++i) k[vars[i]] = db.label(vars[i], key[i]);
  return k;
}

oracle::Model oracle_model(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear: return oracle::Model::Linear;
    case ModelKind::Polynomial2: return oracle::Model::Polynomial2;
    case ModelKind::Factorization: return oracle::Model::Factorization;
    case ModelKind::Pca: break;
  }
  throw SchemaError("no oracle model for PCA");
}

}  // namespace

Workspace Workspace::load(const JobConfig& config) {
  Database db;
  for (const auto& r : config.relations) db.load(r.path, r.name, r.attributes);
  return from(db, config.order);
}

Workspace Workspace::from(const Database& db, const OrderSpec& spec) {
  auto order = VariableOrder::build(spec, db);
  return Workspace{sort_database(db, order), order};
}

TrainReport run_training(const Workspace& ws, const ModelSpec& model, const SolverConfig& solver, bool use_fds,
                         const std::vector<SimpleFd>& fds, const EngineOptions& engine) {
  TrainReport report;
  report.model = model;
  report.used_fds = use_fds && !fds.empty();
  auto t0 = Clock::now();
  std::unique_ptr<Objective> objective;
  if (report.used_fds) {
    auto problem = build_fd_problem(ws.db, ws.order, model, FdCatalog(fds), engine);
    report.aggregate_count = problem.aggregates.monomials.size();
    report.engine = problem.aggregates.counters;
    for (const auto& m : problem.reduction.dropped_components) report.dropped_components.push_back(m.to_string());
    objective = std::move(problem.objective);
  } else {
    auto registers = build_registers(ws.order, enumerate_monomials(model).monomials);
    auto aggregates = compute_aggregates(ws.db, ws.order, registers, engine);
    report.aggregate_count = aggregates.monomials.size();
    report.engine = aggregates.counters;
    auto sigma = assemble(bind_components(component_monomials(model), ws.order), aggregates, model.label, ws.order);
    objective = make_objective(model, std::move(sigma));
  }
  report.aggregate_seconds = seconds_since(t0);
  report.dimension = objective->dimension();

  auto t1 = Clock::now();
  report.result = train(*objective, solver);
  report.converge_seconds = seconds_since(t1);
  report.parameters = objective->export_parameters(report.result.theta);
  return report;
}

PcaReport run_pca(const Workspace& ws, const std::vector<Feature>& features, std::size_t k, bool use_fds,
                  const std::vector<SimpleFd>& fds, const EngineOptions& engine) {
  PcaReport report;
  report.used_fds = use_fds && !fds.empty();
  auto t0 = Clock::now();
  if (report.used_fds) {
    auto setup = fd_pca_setup(ws.db, ws.order, features, FdCatalog(fds), engine);
    report.aggregate_count = setup.aggregates.monomials.size();
    report.engine = setup.aggregates.counters;
    if (k > setup.ambient.dimension())
      throw InputError("K = " + std::to_string(k) + " exceeds the dimension " +
                       std::to_string(setup.ambient.dimension()));
    report.eigen = fd_reduced_eigen(setup.reduced, setup.u, k);
    report.layout = setup.ambient;
  } else {
    auto registers = build_registers(ws.order, covariance_monomials(features).monomials);
    auto aggregates = compute_aggregates(ws.db, ws.order, registers, engine);
    report.aggregate_count = aggregates.monomials.size();
    report.engine = aggregates.counters;
    CovarianceTensor cov(aggregates, features, ws.order, ws.db);
    report.eigen = top_k_eigen(cov, k);
    report.layout = cov.layout();
  }
  report.seconds = seconds_since(t0);
  return report;
}

json model_json(const TrainReport& report, const Database& db) {
  json doc;
  doc["model"] = to_string(report.model.kind);
  if (report.model.kind == ModelKind::Factorization) doc["rank"] = report.model.rank;
  doc["lambda"] = report.model.lambda;
  doc["label"] = report.model.label ? json(*report.model.label) : json(nullptr);
  json feats = json::array();
  for (const auto& f : report.model.features) feats.push_back({{"name", f.name}, {"kind", to_string(f.kind)}});
  doc["features"] = feats;
  doc["used_fds"] = report.used_fds;
  doc["objective"] = report.result.objective;
  doc["iterations"] = report.result.iterations;
  doc["converged"] = report.result.converged;
  json blocks = json::array();
  const auto& ps = report.parameters;
  for (const auto& b : ps.layout.blocks()) {
    json entries = json::array();
    for (std::size_t r = 0; r < b.size(); ++r)
      entries.push_back({{"key", key_json(b.key_variables, b.keys[r], db)}, {"value", ps.values[b.offset + r]}});
    blocks.push_back({{"block", b.name}, {"variables", b.key_variables}, {"entries", entries}});
  }
  doc["parameters"] = blocks;
  return doc;
}

json pca_json(const PcaReport& report, const Database& db) {
  json doc;
  doc["k"] = report.eigen.values.size();
  doc["used_fds"] = report.used_fds;
  doc["truncated"] = report.eigen.truncated;
  doc["removed"] = report.layout.removed();
  doc["eigenvalues"] = report.eigen.values;
  std::vector<bool> degenerate(report.eigen.degenerate.begin(), report.eigen.degenerate.end());
  doc["degenerate"] = degenerate;
  json components = json::array();
  for (const auto& theta : report.eigen.vectors) {
    json entries = json::array();
    for (const auto& v : report.layout.variables()) {
      if (v.kind == AttributeKind::Continuous) {
        entries.push_back({{"variable", v.name}, {"category", nullptr}, {"value", theta[v.offset]}});
        continue;
      }
      for (std::size_t i = 0; i < v.retained.size(); ++i)
        entries.push_back(
            {{"variable", v.name}, {"category", db.label(v.name, v.retained[i])}, {"value", theta[v.offset + i]}});
    }
    components.push_back(entries);
  }
  doc["components"] = components;
  return doc;
}

json aggregates_json(const AggregateResult& aggregates, const VariableOrder& order, const Database& db) {
  json doc;
  doc["count"] = aggregates.count();
  json list = json::array();
  for (std::size_t i = 0; i < aggregates.monomials.size(); ++i) {
    const auto& m = aggregates.monomials[i];
    auto vars = key_variables(m, order);
    json entries = json::array();
    for (const auto& [key, value] : aggregates.maps[i])
      entries.push_back({{"key", key_json(vars, key, db)}, {"value", value}});
    list.push_back({{"monomial", m.to_string()}, {"key_variables", vars}, {"entries", entries}});
  }
  doc["aggregates"] = list;
  doc["counters"] = {{"values_scanned", aggregates.counters.values_scanned},
                     {"cache_hits", aggregates.counters.cache_hits},
                     {"cache_misses", aggregates.counters.cache_misses},
                     {"aggregate_map_entries_total", aggregates.counters.aggregate_map_entries_total}};
  return doc;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,objective,gradient_norm,step,backtracks\n";
  for (const auto& r : trace)
    out << r.iteration << ',' << r.objective << ',' << r.gradient_norm << ',' << r.step << ',' << r.backtracks << '\n';
  return out.str();
}

oracle::Assignment assignment_of(const std::vector<std::string>& key_variables, const Key& key) {
  oracle::Assignment a;
  for (std::size_t i = 0; i < key_variables.size(); ++i) a[key_variables[i]] = key[i];
  return a;
}

oracle::Lookup lookup_of(const ParameterSet& parameters) {
  return [&parameters](const std::string& block, const oracle::Assignment& assignment) {
    auto b = parameters.layout.find_block(block);
    if (!b) return 0.0;
    const auto& blk = parameters.layout.block(*b);
    Key key;
    for (const auto& v : blk.key_variables) {
      auto it = assignment.find(v);
      if (it == assignment.end()) return 0.0;
      key.push_back(it->second);
    }
    auto r = blk.find(key);
    return r ? parameters.values[blk.offset + *r] : 0.0;
  };
}

double VerifyReport::max_diff() const {
  return std::max({sigma_max_diff, c_max_diff, s_y_diff, objective_diff});
}

VerifyReport verify(const Workspace& ws, const ModelSpec& model, std::uint64_t seed) {
  VerifyReport report;
  auto registers = build_registers(ws.order, enumerate_monomials(model).monomials);
  auto aggregates = compute_aggregates(ws.db, ws.order, registers);
  auto sigma = assemble(bind_components(component_monomials(model), ws.order), aggregates, model.label, ws.order);
  auto layout = observed_layout(sigma);
  SigmaKernel kernel(sigma, layout);
  DenseMatrix fact = kernel.dense();

  auto table = oracle::materialize_join(ws.db);
  report.join_rows = table.size();
  std::vector<Attribute> feats;
  for (const auto& f : model.features) feats.push_back({f.name, f.kind});
  auto terms = oracle::model_terms(oracle_model(model.kind), feats);
  auto dense = oracle::dense_sigma(table, terms, model.label);

  std::vector<std::optional<std::size_t>> to_oracle(layout.dimension());
  for (const auto& b : layout.blocks())
    for (std::size_t r = 0; r < b.size(); ++r) {
      to_oracle[b.offset + r] = dense.encoding.find(b.name, assignment_of(b.key_variables, b.keys[r]));
      if (!to_oracle[b.offset + r]) ++report.unmatched;
    }
  if (layout.dimension() != dense.encoding.dimension())
    report.unmatched += layout.dimension() > dense.encoding.dimension() ? 0 : dense.encoding.dimension() - layout.dimension();

  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (std::size_t i = 0; i < layout.dimension(); ++i) {
    if (!to_oracle[i]) continue;
    for (std::size_t j = 0; j < layout.dimension(); ++j) {
      if (!to_oracle[j]) continue;
      report.sigma_max_diff = std::max(report.sigma_max_diff, rel(fact(i, j), dense.sigma(*to_oracle[i], *to_oracle[j])));
    }
    if (model.label)
      report.c_max_diff = std::max(report.c_max_diff, rel(kernel.correlation()[i], dense.c[*to_oracle[i]]));
  }
  if (model.label) {
    report.s_y_diff = rel(kernel.label_moment(), dense.s_y);
    auto objective = make_objective(model, std::move(sigma));
    auto x = objective->initial_point(seed);
    if (model.kind != ModelKind::Factorization) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      for (double& v : x) v = dist(rng);
    }
    auto params = objective->export_parameters(x);
    auto lookup = lookup_of(params);
    double loss = oracle::mean_square_loss(table, *model.label, [&](std::size_t r) {
      return model.kind == ModelKind::Factorization ? oracle::fama_predict(table, r, feats, model.rank, lookup)
                                                    : oracle::linear_predict(table, r, terms, lookup);
    });
    double j_oracle = loss + 0.5 * model.lambda * dot(params.values, params.values);
    report.objective_diff = rel(objective->value(x), j_oracle);
  }
  return report;
}

}  // namespace factlearn
