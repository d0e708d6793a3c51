#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "factlearn/registry.hpp"
#include "factlearn/relational.hpp"
#include "factlearn/solver.hpp"

namespace factlearn {

struct RelationConfig {
  std::string name;
  std::filesystem::path path;  // resolved against the config's directory
  std::vector<Attribute> attributes;
};

struct JobConfig {
  std::vector<RelationConfig> relations;
  OrderSpec order;
  std::vector<Feature> features;  // continuous first, then categorical
  std::optional<std::string> label;
  ModelKind kind = ModelKind::Linear;
  int rank = 0;
  double lambda = 0.0;
  SolverConfig solver;
  std::vector<SimpleFd> fds;
  bool use_fds = false;
  std::uint64_t seed = 1;

  ModelSpec model() const;
};

// Throws ConfigError with the offending line where it can be located. Features
// and label must be order variables; the label is continuous and not a feature.
JobConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
JobConfig load_config(const std::filesystem::path& path);

}  // namespace factlearn
