#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "factlearn/aggregate_map.hpp"
#include "factlearn/dense.hpp"
#include "factlearn/engine.hpp"
#include "factlearn/registry.hpp"
#include "factlearn/relational.hpp"

namespace factlearn {

struct HComponent {
  std::size_t index = 0;
  Monomial monomial;
  std::vector<std::string> categorical;  // C_j in variable-order position
};

std::vector<HComponent> bind_components(const std::vector<Monomial>& monomials, const VariableOrder& order);

// Categorical variables of a monomial in variable-order position.
std::vector<std::string> key_variables(const Monomial& m, const VariableOrder& order);

// Ordered parameter blocks; each block has one row per key tuple.
class BlockLayout {
 public:
  struct Block {
    std::string name;
    std::vector<std::string> key_variables;
    std::vector<Key> keys;
    std::size_t offset = 0;
    std::map<Key, std::size_t> index;

    std::size_t size() const { return keys.size(); }
    std::optional<std::size_t> find(const Key& key) const {
      auto it = index.find(key);
      if (it == index.end()) return std::nullopt;
      return it->second;
    }
  };

  std::size_t add(std::string name, std::vector<std::string> key_variables, std::vector<Key> keys);

  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(std::size_t i) const { return blocks_[i]; }
  std::size_t size() const { return blocks_.size(); }
  std::size_t dimension() const { return dimension_; }
  std::optional<std::size_t> find_block(const std::string& name) const;

 private:
  std::vector<Block> blocks_;
  std::map<std::string, std::size_t> by_name_;
  std::size_t dimension_ = 0;
};

// Normalized (Σ, c, s_Y). Every (i, j) pair references one shared map; pairs
// whose product monomials coincide share the same map.
class SparseSigma {
 public:
  struct SharedMap {
    Monomial monomial;
    std::vector<std::string> key_variables;
    AggregateMap map;
  };
  struct Pair {
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t map = 0;
  };

  const std::vector<HComponent>& components() const { return components_; }
  const std::vector<Pair>& pairs() const { return pairs_; }
  const std::vector<SharedMap>& maps() const { return maps_; }
  const SharedMap& shared(std::size_t index) const { return maps_[index]; }

  const SharedMap& sigma(std::size_t i, std::size_t j) const;
  // Map of h_j alone (its observed keys).
  const SharedMap& component_map(std::size_t j) const { return maps_[component_maps_[j]]; }
  bool has_label() const { return label_.has_value(); }
  const std::optional<std::string>& label() const { return label_; }
  const SharedMap& correlation(std::size_t j) const { return maps_[correlation_maps_.at(j)]; }
  double label_moment() const { return label_moment_; }
  double count() const { return count_; }

  // Σ over pairs i <= j of the pair's map size.
  std::size_t stored_entries() const;

  friend SparseSigma assemble(std::vector<HComponent> components, const AggregateResult& aggregates,
                              const std::optional<std::string>& label, const VariableOrder& order);

 private:
  std::size_t intern_map(const Monomial& m, const AggregateResult& aggregates, const VariableOrder& order);

  std::vector<HComponent> components_;
  std::vector<Pair> pairs_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pair_index_;
  std::vector<SharedMap> maps_;
  std::map<Monomial, std::size_t> map_index_;
  std::vector<std::size_t> component_maps_;
  std::vector<std::size_t> correlation_maps_;
  std::optional<std::string> label_;
  double label_moment_ = 0.0;
  double count_ = 0.0;
};

SparseSigma assemble(std::vector<HComponent> components, const AggregateResult& aggregates,
                     const std::optional<std::string>& label, const VariableOrder& order);

// One block per h-component, keyed by the keys observed in the join.
BlockLayout observed_layout(const SparseSigma& sigma);

// Projects a key over `from` variables onto the `to` variables (a subset).
std::vector<std::size_t> key_projection(const std::vector<std::string>& from, const std::vector<std::string>& to);

// Σ compiled against a layout: each stored map entry becomes a (row, col, value)
// triplet; off-diagonal pairs are applied to both rows.
class SigmaKernel {
 public:
  SigmaKernel() = default;
  SigmaKernel(const SparseSigma& sigma, const BlockLayout& layout);

  std::size_t dimension() const { return dimension_; }
  // out = Σ g
  void multiply(std::span<const double> g, std::span<double> out) const;
  // gᵀ Σ g
  double quadratic_form(std::span<const double> g) const;
  const std::vector<double>& correlation() const { return c_; }
  double label_moment() const { return s_y_; }
  DenseMatrix dense() const;

 private:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };
  std::size_t dimension_ = 0;
  std::vector<Triplet> diagonal_;
  std::vector<Triplet> off_diagonal_;
  std::vector<double> c_;
  double s_y_ = 0.0;
};

}  // namespace factlearn
