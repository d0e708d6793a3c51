#include "factlearn/relational.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "factlearn/errors.hpp"

namespace factlearn {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

const char* to_string(AttributeKind kind) {
  return kind == AttributeKind::Continuous ? "continuous" : "categorical";
}

CategoryId Dictionary::intern(std::string_view label) {
  auto it = ids_.find(std::string(label));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<CategoryId>(labels_.size());
  labels_.emplace_back(label);
  ids_.emplace(std::string(label), id);
  return id;
}

std::optional<CategoryId> Dictionary::find(std::string_view label) const {
  auto it = ids_.find(std::string(label));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Dictionary::label(CategoryId id) const {
  if (id >= labels_.size()) throw SchemaError("unknown category id " + std::to_string(id));
  return labels_[id];
}

const Dictionary* Dictionaries::find(const std::string& variable) const {
  auto it = dicts_.find(variable);
  return it == dicts_.end() ? nullptr : &it->second;
}

Relation::Relation(std::string name, std::vector<Attribute> attributes)
    : name_(std::move(name)), attributes_(std::move(attributes)) {
  std::set<std::string> seen;
  for (const auto& a : attributes_) {
    if (!seen.insert(a.name).second)
      throw SchemaError("relation " + name_ + ": attribute " + a.name + " appears twice");
  }
}

std::optional<std::size_t> Relation::column_of(std::string_view variable) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == variable) return i;
  return std::nullopt;
}

void Relation::append(std::span<const double> row) {
  if (row.size() != arity())
    throw SchemaError("relation " + name_ + ": row has " + std::to_string(row.size()) + " values, expected " +
                      std::to_string(arity()));
  cells_.insert(cells_.end(), row.begin(), row.end());
}

Relation load_csv(const std::filesystem::path& path, std::string name, std::vector<Attribute> schema,
                  Dictionaries& dictionaries) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_line(line);
  if (header.size() != schema.size())
    throw InputError(path.string() + ": header has " + std::to_string(header.size()) + " columns, schema has " +
                     std::to_string(schema.size()));
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != schema[i].name)
      throw InputError(path.string() + ": header column " + std::to_string(i + 1) + " is '" + header[i] +
                       "', expected '" + schema[i].name + "'");
  }

  Relation rel(std::move(name), std::move(schema));
  std::vector<double> row(rel.arity());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != rel.arity())
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(rel.arity()) + " values, found " + std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& attr = rel.attributes()[i];
      const std::string& cell = cells[i];
      if (cell.empty())
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": empty value for " + attr.name);
      if (attr.kind == AttributeKind::Categorical) {
        row[i] = static_cast<double>(dictionaries.of(attr.name).intern(cell));
        continue;
      }
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + cell +
                         "' as a continuous value for " + attr.name);
      row[i] = v;
    }
    rel.append(row);
  }
  return rel;
}

void Database::add(Relation relation) {
  for (const auto& r : relations_)
    if (r.name() == relation.name()) throw SchemaError("duplicate relation name " + relation.name());
  for (const auto& a : relation.attributes()) {
    auto it = kinds_.find(a.name);
    if (it != kinds_.end() && it->second != a.kind)
      throw SchemaError("variable " + a.name + " is " + to_string(it->second) + " in one relation and " +
                        to_string(a.kind) + " in " + relation.name());
  }
  for (const auto& a : relation.attributes()) kinds_.emplace(a.name, a.kind);
  relations_.push_back(std::move(relation));
}

Relation& Database::load(const std::filesystem::path& path, std::string name, std::vector<Attribute> schema) {
  add(load_csv(path, std::move(name), std::move(schema), dictionaries_));
  return relations_.back();
}

const Relation& Database::relation(std::string_view name) const {
  for (const auto& r : relations_)
    if (r.name() == name) return r;
  throw SchemaError("unknown relation " + std::string(name));
}

AttributeKind Database::kind_of(const std::string& variable) const {
  auto it = kinds_.find(variable);
  if (it == kinds_.end()) throw SchemaError("unknown variable " + variable);
  return it->second;
}

const std::string& Database::label(const std::string& variable, CategoryId id) const {
  const Dictionary* d = dictionaries_.find(variable);
  if (!d) throw SchemaError("variable " + variable + " has no categories");
  return d->label(id);
}

std::optional<CategoryId> Database::category(const std::string& variable, std::string_view label) const {
  const Dictionary* d = dictionaries_.find(variable);
  if (!d) return std::nullopt;
  return d->find(label);
}

VariableOrder VariableOrder::build(const OrderSpec& spec, const Database& db) {
  VariableOrder vo;
  std::vector<const OrderSpec*> specs;

  auto visit = [&](auto&& self, const OrderSpec& s, int parent) -> void {
    if (vo.index_.count(s.variable)) throw SchemaError("variable " + s.variable + " appears twice in the order");
    if (!db.has_variable(s.variable))
      throw SchemaError("variable " + s.variable + " in the order does not occur in any relation");
    int idx = static_cast<int>(vo.nodes_.size());
    Node n;
    n.variable = s.variable;
    n.kind = db.kind_of(s.variable);
    n.parent = parent;
    if (parent >= 0) {
      n.ancestors = vo.nodes_[static_cast<std::size_t>(parent)].ancestors;
      n.ancestors.push_back(parent);
      vo.nodes_[static_cast<std::size_t>(parent)].children.push_back(idx);
    }
    vo.nodes_.push_back(std::move(n));
    specs.push_back(&s);
    vo.index_.emplace(s.variable, idx);
    for (const auto& c : s.children) self(self, c, idx);
    vo.nodes_[static_cast<std::size_t>(idx)].subtree_end = static_cast<int>(vo.nodes_.size());
  };
  visit(visit, spec, -1);

  for (const auto& [var, kind] : db.kinds())
    if (!vo.index_.count(var)) throw SchemaError("variable " + var + " is missing from the variable order");

  // Relation attributes must lie on one root-to-leaf path.
  std::vector<std::vector<int>> rel_nodes;
  for (std::size_t r = 0; r < db.relations().size(); ++r) {
    const auto& rel = db.relations()[r];
    std::vector<int> ids;
    for (const auto& a : rel.attributes()) ids.push_back(vo.index_of(a.name));
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 1; i < ids.size(); ++i)
      if (!vo.in_subtree(ids[i], ids[i - 1]))
        throw SchemaError("relation " + rel.name() + ": attributes " + vo.nodes_[ids[i - 1]].variable + " and " +
                          vo.nodes_[ids[i]].variable + " are not on one root-to-leaf path");
    for (int id : ids) vo.nodes_[static_cast<std::size_t>(id)].relations.push_back(r);
    rel_nodes.push_back(std::move(ids));
  }

  for (std::size_t x = 0; x < vo.nodes_.size(); ++x) {
    Node& n = vo.nodes_[x];
    std::set<int> touched;
    for (const auto& ids : rel_nodes) {
      bool hits = std::any_of(ids.begin(), ids.end(), [&](int id) { return vo.in_subtree(id, static_cast<int>(x)); });
      if (hits) touched.insert(ids.begin(), ids.end());
    }
    for (int a : n.ancestors)
      if (touched.count(a)) n.dependencies.push_back(a);

    if (specs[x]->dependencies) {
      std::set<int> given;
      for (const auto& name : *specs[x]->dependencies) {
        auto it = vo.index_.find(name);
        if (it == vo.index_.end())
          throw SchemaError("dependency set of " + n.variable + " names unknown variable " + name);
        if (std::find(n.ancestors.begin(), n.ancestors.end(), it->second) == n.ancestors.end())
          throw SchemaError("dependency set of " + n.variable + " contains " + name + ", which is not an ancestor");
        given.insert(it->second);
      }
      for (int d : n.dependencies)
        if (!given.count(d))
          throw SchemaError("dependency set of " + n.variable + " omits " + vo.nodes_[d].variable +
                            ", on which its subtree depends");
      n.dependencies.assign(given.begin(), given.end());
    }
  }
  return vo;
}

bool VariableOrder::contains(std::string_view variable) const { return index_.find(variable) != index_.end(); }

int VariableOrder::index_of(std::string_view variable) const {
  auto it = index_.find(variable);
  if (it == index_.end()) throw SchemaError("variable " + std::string(variable) + " is not in the variable order");
  return it->second;
}

bool VariableOrder::cacheable(int index) const {
  const Node& n = node(index);
  return n.dependencies.size() != n.ancestors.size();
}

std::vector<std::string> VariableOrder::subtree_variables(int index) const {
  std::vector<std::string> out;
  for (int i = index; i < node(index).subtree_end; ++i) out.push_back(node(i).variable);
  return out;
}

namespace {

std::vector<std::size_t> column_permutation(const Relation& relation, const VariableOrder& order) {
  std::vector<std::size_t> perm(relation.arity());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> pos(relation.arity());
  for (std::size_t i = 0; i < relation.arity(); ++i) pos[i] = order.index_of(relation.attributes()[i].name);
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return pos[a] < pos[b]; });
  for (std::size_t i = 1; i < perm.size(); ++i)
    if (!order.in_subtree(pos[perm[i]], pos[perm[i - 1]]))
      throw SchemaError("relation " + relation.name() + ": attributes " + relation.attributes()[perm[i - 1]].name +
                        " and " + relation.attributes()[perm[i]].name + " are not on one root-to-leaf path");
  return perm;
}

}  // namespace

Relation sort_for_order(const Relation& relation, const VariableOrder& order) {
  auto perm = column_permutation(relation, order);
  std::vector<Attribute> attrs;
  for (auto c : perm) attrs.push_back(relation.attributes()[c]);

  std::vector<std::size_t> rows(relation.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    for (auto c : perm) {
      double x = relation.at(a, c), y = relation.at(b, c);
      if (x < y) return true;
      if (y < x) return false;
    }
    return false;
  });

  Relation out(relation.name(), std::move(attrs));
  out.reserve(relation.size());
  std::vector<double> buf(relation.arity());
  for (auto r : rows) {
    for (std::size_t i = 0; i < perm.size(); ++i) buf[i] = relation.at(r, perm[i]);
    out.append(buf);
  }
  return out;
}

bool is_sorted_for_order(const Relation& relation, const VariableOrder& order) {
  for (std::size_t i = 1; i < relation.arity(); ++i)
    if (order.index_of(relation.attributes()[i - 1].name) >= order.index_of(relation.attributes()[i].name))
      return false;
  for (std::size_t r = 1; r < relation.size(); ++r) {
    auto a = relation.row(r - 1), b = relation.row(r);
    if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) return false;
  }
  return true;
}

Database sort_database(const Database& db, const VariableOrder& order) {
  Database out = db;
  for (auto& r : out.relations()) r = sort_for_order(r, order);
  return out;
}

FdCatalog::FdCatalog(std::vector<SimpleFd> fds) : fds_(std::move(fds)) {
  std::set<std::string> seen;
  for (const auto& fd : fds_) {
    if (fd.determinant.empty()) throw SchemaError("functional dependency without a determinant");
    if (fd.determined.empty())
      throw SchemaError("functional dependency " + fd.determinant + " -> {} has an empty determined set");
    if (!seen.insert(fd.determinant).second)
      throw SchemaError("variable " + fd.determinant + " belongs to more than one functional dependency group");
    for (const auto& c : fd.determined) {
      if (c == fd.determinant) throw SchemaError("functional dependency " + c + " -> " + c + " is trivial");
      if (!seen.insert(c).second)
        throw SchemaError("variable " + c + " belongs to more than one functional dependency group");
    }
  }
}

bool FdCatalog::is_determined(const std::string& variable) const {
  for (const auto& fd : fds_)
    if (std::find(fd.determined.begin(), fd.determined.end(), variable) != fd.determined.end()) return true;
  return false;
}

bool FdCatalog::is_determinant(const std::string& variable) const {
  return std::any_of(fds_.begin(), fds_.end(), [&](const SimpleFd& fd) { return fd.determinant == variable; });
}

std::optional<std::size_t> FdCatalog::group_of(const std::string& variable) const {
  for (std::size_t i = 0; i < fds_.size(); ++i) {
    if (fds_[i].determinant == variable) return i;
    const auto& d = fds_[i].determined;
    if (std::find(d.begin(), d.end(), variable) != d.end()) return i;
  }
  return std::nullopt;
}

std::string FdValidation::report() const {
  std::ostringstream out;
  for (const auto& v : violations)
    out << v.determinant << " -> " << v.target << ": " << v.determinant << "=" << v.determinant_label << " maps to both "
        << v.first_value << " and " << v.second_value << "\n";
  return out.str();
}

FdValidation validate_fds(const Database& db, const FdCatalog& catalog) {
  FdValidation result;
  for (const auto& fd : catalog.groups()) {
    if (!db.has_variable(fd.determinant)) throw SchemaError("functional dependency names unknown variable " + fd.determinant);
    if (db.kind_of(fd.determinant) != AttributeKind::Categorical)
      throw SchemaError("determinant " + fd.determinant + " must be categorical");
    for (const auto& c : fd.determined) {
      if (!db.has_variable(c)) throw SchemaError("functional dependency names unknown variable " + c);
      bool housed = false;
      std::map<double, double> image;
      bool reported = false;
      for (const auto& rel : db.relations()) {
        auto fc = rel.column_of(fd.determinant);
        auto cc = rel.column_of(c);
        if (!fc || !cc) continue;
        housed = true;
        for (std::size_t r = 0; r < rel.size() && !reported; ++r) {
          double f = rel.at(r, *fc), v = rel.at(r, *cc);
          auto [it, inserted] = image.emplace(f, v);
          if (inserted || it->second == v) continue;
          auto show = [&](double x) {
            return db.kind_of(c) == AttributeKind::Categorical ? db.label(c, static_cast<CategoryId>(x))
                                                               : format_value(x);
          };
          result.violations.push_back({fd.determinant, c, db.label(fd.determinant, static_cast<CategoryId>(f)),
                                       show(it->second), show(v)});
          reported = true;
        }
      }
      if (!housed)
        throw SchemaError("no relation contains both " + fd.determinant + " and " + c +
                          "; the dependency cannot be checked");
    }
  }
  return result;
}

}  // namespace factlearn
