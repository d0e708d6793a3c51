#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "factlearn/relational.hpp"

namespace factlearn {

using VariableKinds = std::map<std::string, AttributeKind>;

// Product of variable powers; the empty monomial is the constant 1.
class Monomial {
 public:
  Monomial() = default;
  Monomial(std::initializer_list<std::pair<const std::string, int>> powers);

  static Monomial variable(const std::string& name, int exponent = 1);

  int exponent(const std::string& variable) const;
  int degree() const;
  bool is_constant() const { return powers_.empty(); }
  const std::map<std::string, int>& powers() const { return powers_; }
  std::vector<std::string> variables() const;
  bool contains(const std::string& variable) const { return powers_.count(variable) > 0; }

  // Product with categorical exponents capped at 1 (indicators are idempotent).
  Monomial times(const Monomial& other, const VariableKinds& kinds) const;
  Monomial project(const std::set<std::string>& variables) const;
  Monomial without(const std::string& variable) const;

  std::string to_string() const;

  friend bool operator==(const Monomial& a, const Monomial& b) { return a.powers_ == b.powers_; }
  friend bool operator<(const Monomial& a, const Monomial& b) { return a.powers_ < b.powers_; }

 private:
  std::map<std::string, int> powers_;
};

enum class ModelKind { Linear, Polynomial2, Factorization, Pca };

const char* to_string(ModelKind kind);

struct Feature {
  std::string name;
  AttributeKind kind = AttributeKind::Continuous;
};

struct ModelSpec {
  ModelKind kind = ModelKind::Linear;
  int rank = 0;
  std::vector<Feature> features;
  std::optional<std::string> label;
  double lambda = 0.0;

  int degree() const { return kind == ModelKind::Linear || kind == ModelKind::Pca ? 1 : 2; }
  VariableKinds kinds() const;
};

// h-component monomials in a fixed order: constant, singletons (feature
// order), then degree-2 terms in (i <= j) feature order. PCA has no constant.
std::vector<Monomial> component_monomials(const ModelSpec& model);

// Which (Σ, c, s_Y) entries an aggregate serves. i = -1 marks c (label times h_j);
// i = j = -1 marks s_Y.
struct AggregateRole {
  int i = -1;
  int j = -1;
};

struct MonomialSet {
  std::vector<Monomial> monomials;  // sorted, unique
  std::map<Monomial, std::vector<AggregateRole>> roles;
  std::size_t size() const { return monomials.size(); }
  bool contains(const Monomial& m) const { return roles.count(m) > 0; }
};

// {h_i h_j} ∪ {y h_j} ∪ {y²} ∪ {1} ∪ {h_j}.
MonomialSet enumerate_monomials(const std::vector<Monomial>& components, const std::optional<std::string>& label,
                                const VariableKinds& kinds);
MonomialSet enumerate_monomials(const ModelSpec& model);

struct RegisterEntry {
  Monomial monomial;
  int local_exponent = 0;
  std::vector<std::size_t> children;  // entry index in each child's register
  std::size_t key_arity = 0;
};

struct NodeRegister {
  int node = 0;
  bool adds_key = false;  // categorical variable referenced by some entry
  int max_exponent = 0;
  std::vector<RegisterEntry> entries;  // entry 0 is the constant monomial
  std::optional<std::size_t> find(const Monomial& m) const;
};

class RegisterHierarchy {
 public:
  RegisterHierarchy() = default;
  RegisterHierarchy(std::vector<NodeRegister> nodes, std::vector<Monomial> root_monomials);

  const std::vector<NodeRegister>& nodes() const { return nodes_; }
  const NodeRegister& node(int index) const { return nodes_[static_cast<std::size_t>(index)]; }
  const NodeRegister& root() const { return nodes_.front(); }
  std::optional<std::size_t> root_index(const Monomial& m) const { return root().find(m); }
  std::size_t total_entries() const;

  std::string explain(const VariableOrder& order) const;

 private:
  std::vector<NodeRegister> nodes_;
};

RegisterHierarchy build_registers(const VariableOrder& order, const std::vector<Monomial>& monomials);

}  // namespace factlearn
