#include "factlearn/cli.hpp"

#include <cstdlib>
#include <sstream>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "factlearn/errors.hpp"
#include "factlearn/pipeline.hpp"

namespace factlearn {

namespace {

EngineOptions engine_options() {
  EngineOptions opts;
  if (const char* t = std::getenv("FACTLEARN_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(t, &end, 10);
    if (end == t || *end != '\0' || n < 1) throw ConfigError(std::string("FACTLEARN_THREADS must be a positive integer, got '") + t + "'");
    opts.threads = static_cast<unsigned>(n);
  }
  return opts;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << content;
}

void print_counters(std::ostream& out, std::size_t aggregates, const EngineCounters& c) {
  out << "aggregates      " << aggregates << " (map entries " << c.aggregate_map_entries_total << ")\n";
  out << "values scanned  " << c.values_scanned << "\n";
  out << "cache           " << c.cache_hits << " hits, " << c.cache_misses << " misses\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learning models over relational joins from factorized aggregates"};
  app.name("factlearn");
  app.require_subcommand(1);

  std::string config_path, out_path, trace_path, project_path;
  bool use_fds = false, explain = false;
  std::size_t k = 1;
  std::uint64_t seed = 1;
  bool seed_given = false;

  auto* train_cmd = app.add_subcommand("train", "Train the configured model");
  train_cmd->add_option("--config", config_path, "Job config (JSON)")->required();
  train_cmd->add_flag("--use-fds", use_fds, "Train in the FD-reduced space");
  train_cmd->add_option("--trace", trace_path, "Write the per-iteration trace as CSV");
  train_cmd->add_option("--out", out_path, "Model JSON output")->required();

  auto* pca_cmd = app.add_subcommand("pca", "Top-K principal components of the features");
  pca_cmd->add_option("--config", config_path, "Job config (JSON)")->required();
  pca_cmd->add_option("--k", k, "Number of components")->required()->check(CLI::PositiveNumber);
  pca_cmd->add_flag("--use-fds", use_fds, "Use the FD dimension reduction");
  pca_cmd->add_option("--out", out_path, "Eigen JSON output")->required();
  pca_cmd->add_option("--project", project_path, "Projected coordinates of the join rows as CSV");

  auto* agg_cmd = app.add_subcommand("aggregate", "Compute and dump the aggregates of the configured model");
  agg_cmd->add_option("--config", config_path, "Job config (JSON)")->required();
  agg_cmd->add_flag("--explain", explain, "Print the aggregate registers per variable");
  agg_cmd->add_option("--out", out_path, "Aggregate JSON output (default stdout)");

  auto* verify_cmd = app.add_subcommand("verify", "Compare against the materialized join");
  verify_cmd->add_option("--config", config_path, "Job config (JSON)")->required();
  verify_cmd->add_option("--seed", seed, "Seed of the random parameters")->each([&](const std::string&) {
    seed_given = true;
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    auto engine = engine_options();
    JobConfig cfg = load_config(config_path);
    Workspace ws = Workspace::load(cfg);

    if (*train_cmd) {
      bool fds = use_fds || cfg.use_fds;
      auto report = run_training(ws, cfg.model(), cfg.solver, fds, cfg.fds, engine);
      write_file(out_path, model_json(report, ws.db).dump(2) + "\n");
      if (!trace_path.empty()) write_file(trace_path, trace_csv(report.result.trace));
      out << std::setprecision(10);
      out << "model           " << to_string(report.model.kind) << (report.used_fds ? " (FD-reduced)" : "") << "\n";
      out << "parameters      " << report.dimension << "\n";
      if (!report.dropped_components.empty()) out << "dropped         " << report.dropped_components.size() << " components\n";
      print_counters(out, report.aggregate_count, report.engine);
      out << "objective       " << report.result.objective << "\n";
      out << "iterations      " << report.result.iterations << " (" << report.result.stop_reason << ")\n";
      out << "aggregate time  " << report.aggregate_seconds << " s\n";
      out << "converge time   " << report.converge_seconds << " s\n";
      if (!report.result.converged) {
        err << "error: training did not converge (" << report.result.stop_reason << ")\n";
        return 1;
      }
      return 0;
    }

    if (*pca_cmd) {
      bool fds = use_fds || cfg.use_fds;
      auto report = run_pca(ws, cfg.features, k, fds, cfg.fds, engine);
      write_file(out_path, pca_json(report, ws.db).dump(2) + "\n");
      out << std::setprecision(10);
      for (const auto& r : report.layout.removed()) out << "removed         " << r << " (single category)\n";
      print_counters(out, report.aggregate_count, report.engine);
      for (std::size_t j = 0; j < report.eigen.values.size(); ++j)
        out << "lambda_" << j + 1 << std::string(j + 1 < 10 ? 9 : 8, ' ') << report.eigen.values[j]
            << (report.eigen.degenerate[j] ? "  (near-degenerate)" : "") << "\n";
      if (report.eigen.truncated)
        err << "warning: only " << report.eigen.values.size() << " positive eigenvalues exist\n";
      if (!project_path.empty()) {
        auto table = oracle::materialize_join(ws.db);
        auto coords = project(table.columns, table.rows, report.layout, report.eigen);
        std::ostringstream csv;
        csv.precision(17);
        for (std::size_t j = 0; j < report.eigen.vectors.size(); ++j) csv << (j ? "," : "") << "pc" << j + 1;
        csv << "\n";
        for (const auto& row : coords) {
          for (std::size_t j = 0; j < row.size(); ++j) csv << (j ? "," : "") << row[j];
          csv << "\n";
        }
        write_file(project_path, csv.str());
      }
      return 0;
    }

    if (*agg_cmd) {
      auto model = cfg.model();
      auto registers = build_registers(ws.order, enumerate_monomials(model).monomials);
      if (explain) out << registers.explain(ws.order);
      auto aggregates = compute_aggregates(ws.db, ws.order, registers, engine);
      auto doc = aggregates_json(aggregates, ws.order, ws.db).dump(2) + "\n";
      if (out_path.empty())
        out << doc;
      else
        write_file(out_path, doc);
      if (explain) print_counters(out, aggregates.monomials.size(), aggregates.counters);
      return 0;
    }

    auto report = verify(ws, cfg.model(), seed_given ? seed : cfg.seed);
    out << std::setprecision(3) << std::scientific;
    out << "join rows       " << report.join_rows << "\n";
    out << "sigma max |d|   " << report.sigma_max_diff << "\n";
    out << "c max |d|       " << report.c_max_diff << "\n";
    out << "s_Y |d|         " << report.s_y_diff << "\n";
    out << "objective |d|   " << report.objective_diff << "\n";
    if (report.unmatched) out << "unmatched       " << report.unmatched << " coordinates\n";
    bool ok = report.max_diff() <= 1e-10 && report.unmatched == 0;
    out << "max |d| " << report.max_diff() << (ok ? " <= " : " > ") << "1e-10\n";
    return ok ? 0 : 1;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const FdViolationError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace factlearn
