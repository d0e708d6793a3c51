#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace factlearn {

using CategoryId = std::uint32_t;

enum class AttributeKind { Continuous, Categorical };

const char* to_string(AttributeKind kind);

struct Attribute {
  std::string name;
  AttributeKind kind = AttributeKind::Continuous;
};

// Interns the labels of one categorical variable; ids follow first occurrence.
class Dictionary {
 public:
  CategoryId intern(std::string_view label);
  std::optional<CategoryId> find(std::string_view label) const;
  const std::string& label(CategoryId id) const;
  std::size_t size() const { return labels_.size(); }

 private:
  std::unordered_map<std::string, CategoryId> ids_;
  std::vector<std::string> labels_;
};

// Dictionaries are per variable name across the whole database, so equal
// labels of a join variable in different relations get equal ids.
class Dictionaries {
 public:
  Dictionary& of(const std::string& variable) { return dicts_[variable]; }
  const Dictionary* find(const std::string& variable) const;

 private:
  std::map<std::string, Dictionary> dicts_;
};

// Row-major tuple store. Categorical cells hold the category id as a double.
class Relation {
 public:
  Relation() = default;
  Relation(std::string name, std::vector<Attribute> attributes);

  const std::string& name() const { return name_; }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t arity() const { return attributes_.size(); }
  std::size_t size() const { return arity() == 0 ? 0 : cells_.size() / arity(); }
  bool empty() const { return size() == 0; }

  std::optional<std::size_t> column_of(std::string_view variable) const;
  double at(std::size_t row, std::size_t col) const { return cells_[row * arity() + col]; }
  std::span<const double> row(std::size_t r) const { return {cells_.data() + r * arity(), arity()}; }

  void append(std::span<const double> row);
  void reserve(std::size_t rows) { cells_.reserve(rows * arity()); }

 private:
  std::string name_;
  std::vector<Attribute> attributes_;
  std::vector<double> cells_;
};

Relation load_csv(const std::filesystem::path& path, std::string name, std::vector<Attribute> schema,
                  Dictionaries& dictionaries);

class Database {
 public:
  // Adds a relation; a variable must have the same kind everywhere it appears.
  void add(Relation relation);
  Relation& load(const std::filesystem::path& path, std::string name, std::vector<Attribute> schema);

  const std::vector<Relation>& relations() const { return relations_; }
  std::vector<Relation>& relations() { return relations_; }
  const Relation& relation(std::string_view name) const;

  bool has_variable(const std::string& variable) const { return kinds_.count(variable) > 0; }
  AttributeKind kind_of(const std::string& variable) const;
  const std::map<std::string, AttributeKind>& kinds() const { return kinds_; }

  Dictionaries& dictionaries() { return dictionaries_; }
  const Dictionaries& dictionaries() const { return dictionaries_; }
  CategoryId intern(const std::string& variable, std::string_view label) {
    return dictionaries_.of(variable).intern(label);
  }
  const std::string& label(const std::string& variable, CategoryId id) const;
  std::optional<CategoryId> category(const std::string& variable, std::string_view label) const;

 private:
  std::vector<Relation> relations_;
  std::map<std::string, AttributeKind> kinds_;
  Dictionaries dictionaries_;
};

// Nested description of a variable order as given in a config.
struct OrderSpec {
  std::string variable;
  std::vector<OrderSpec> children;
  std::optional<std::vector<std::string>> dependencies;
};

class VariableOrder {
 public:
  struct Node {
    std::string variable;
    AttributeKind kind = AttributeKind::Continuous;
    int parent = -1;
    std::vector<int> children;
    std::vector<int> ancestors;     // root first
    std::vector<int> dependencies;  // subset of ancestors, ascending
    std::vector<std::size_t> relations;
    int subtree_end = 0;  // one past the last pre-order index of the subtree
  };

  // Nodes are numbered in pre-order; index 0 is the root.
  static VariableOrder build(const OrderSpec& spec, const Database& db);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int index) const { return nodes_[static_cast<std::size_t>(index)]; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(std::string_view variable) const;
  int index_of(std::string_view variable) const;
  bool cacheable(int index) const;
  bool in_subtree(int node, int root) const {
    return node >= root && node < nodes_[static_cast<std::size_t>(root)].subtree_end;
  }
  std::vector<std::string> subtree_variables(int index) const;

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int, std::less<>> index_;
};

// Reorders columns by pre-order position and sorts tuples lexicographically.
Relation sort_for_order(const Relation& relation, const VariableOrder& order);
Database sort_database(const Database& db, const VariableOrder& order);
bool is_sorted_for_order(const Relation& relation, const VariableOrder& order);

struct SimpleFd {
  std::string determinant;
  std::vector<std::string> determined;
};

class FdCatalog {
 public:
  FdCatalog() = default;
  explicit FdCatalog(std::vector<SimpleFd> fds);

  const std::vector<SimpleFd>& groups() const { return fds_; }
  bool empty() const { return fds_.empty(); }
  bool is_determined(const std::string& variable) const;
  bool is_determinant(const std::string& variable) const;
  // Index of the group containing the variable (as determinant or determined).
  std::optional<std::size_t> group_of(const std::string& variable) const;

 private:
  std::vector<SimpleFd> fds_;
};

struct FdViolation {
  std::string determinant;
  std::string target;
  std::string determinant_label;
  std::string first_value;
  std::string second_value;
};

struct FdValidation {
  std::vector<FdViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string report() const;
};

FdValidation validate_fds(const Database& db, const FdCatalog& catalog);

}  // namespace factlearn
