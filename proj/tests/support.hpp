#pragma once

#include <cstdint>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "factlearn/pipeline.hpp"

namespace testsupport {

using namespace factlearn;

struct Table {
  std::string name;
  std::vector<Attribute> attributes;
  std::vector<std::vector<std::string>> rows;  // labels or numbers as text
};

inline Attribute cat(const std::string& n) { return {n, AttributeKind::Categorical}; }
inline Attribute cont(const std::string& n) { return {n, AttributeKind::Continuous}; }

inline Database make_db(const std::vector<Table>& tables) {
  Database db;
  for (const auto& t : tables) {
    Relation r(t.name, t.attributes);
    for (const auto& row : t.rows) {
      std::vector<double> cells;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (t.attributes[c].kind == AttributeKind::Categorical)
          cells.push_back(db.intern(t.attributes[c].name, row[c]));
        else
          cells.push_back(std::stod(row[c]));
      }
      r.append(cells);
    }
    db.add(std::move(r));
  }
  return db;
}

inline OrderSpec node(std::string v, std::vector<OrderSpec> children = {}) {
  OrderSpec s;
  s.variable = std::move(v);
  s.children = std::move(children);
  return s;
}

// A chain of nodes v0 -> v1 -> ... (each the only child of the previous).
inline std::vector<OrderSpec> chain(const std::vector<std::string>& vars) {
  if (vars.empty()) return {};
  OrderSpec s = node(vars.back());
  for (std::size_t i = vars.size() - 1; i-- > 0;) s = node(vars[i], {s});
  return {s};
}

struct Instance {
  Database db;
  OrderSpec order;
  std::vector<Feature> features;
  std::string label;
  std::vector<SimpleFd> fds;

  Workspace workspace() const { return Workspace::from(db, order); }
  ModelSpec model(ModelKind kind, double lambda = 0.1, int rank = 0) const {
    ModelSpec m;
    m.kind = kind;
    m.features = features;
    m.label = label;
    m.lambda = lambda;
    m.rank = rank;
    return m;
  }
};

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin() { return uniform(0, 1) == 1; }
  std::mt19937_64& rng() { return rng_; }

  std::string value(const Attribute& a, int domain) {
    if (a.kind == AttributeKind::Categorical) return a.name + std::to_string(uniform(0, domain - 1));
    return std::to_string(real(-2.0, 2.0));
  }

  // Random acyclic schema: 2 relations sharing a key, a 3-relation star, or a
  // 3-relation chain. At most 6 variables including the continuous label y.
  Instance random_schema(int max_rows = 40) {
    Instance inst;
    int shape = uniform(0, 2);
    std::vector<std::string> keys = shape == 2 ? std::vector<std::string>{"K", "L"} : std::vector<std::string>{"K"};
    int relations = shape == 0 ? 2 : 3;
    int budget = 6 - static_cast<int>(keys.size()) - 1;  // remaining non-key, non-label variables
    std::vector<std::vector<Attribute>> extras(static_cast<std::size_t>(relations));
    int next = 0;
    for (int r = 0; r < relations && budget > 0; ++r) {
      int n = std::min(budget, uniform(0, 2));
      for (int i = 0; i < n; ++i) {
        std::string name = std::string(1, static_cast<char>('a' + next++));
        extras[static_cast<std::size_t>(r)].push_back(coin() ? cat(name) : cont(name));
      }
      budget -= n;
    }
    int label_rel = uniform(0, relations - 1);
    extras[static_cast<std::size_t>(label_rel)].push_back(cont("y"));

    std::vector<Table> tables;
    std::vector<OrderSpec> under_k, under_l;
    for (int r = 0; r < relations; ++r) {
      Table t;
      t.name = "R" + std::to_string(r);
      if (shape == 2) {
        if (r == 0) t.attributes = {cat("K")};
        if (r == 1) t.attributes = {cat("K"), cat("L")};
        if (r == 2) t.attributes = {cat("L")};
      } else {
        t.attributes = {cat("K")};
      }
      std::vector<std::string> names;
      for (const auto& a : extras[static_cast<std::size_t>(r)]) {
        t.attributes.push_back(a);
        names.push_back(a.name);
      }
      auto sub = chain(names);
      auto& target = (shape == 2 && r > 0) ? under_l : under_k;
      target.insert(target.end(), sub.begin(), sub.end());
      int rows = uniform(1, max_rows);
      bool keep_duplicates = coin();
      std::set<std::vector<std::string>> seen;
      for (int i = 0; i < rows; ++i) {
        std::vector<std::string> row;
        for (const auto& a : t.attributes) {
          bool key = a.name == "K" || a.name == "L";
          // The first row of every relation joins, so the join is never empty.
          row.push_back(key && i == 0 ? a.name + "0" : value(a, key ? 4 : 3));
        }
        // Duplicate tuples are kept in half of the relations (bag semantics).
        if (keep_duplicates || seen.insert(row).second) t.rows.push_back(row);
      }
      tables.push_back(std::move(t));
    }
    if (shape == 2) under_k.push_back(node("L", under_l));
    inst.order = node("K", under_k);
    inst.db = make_db(tables);
    for (const auto& t : tables)
      for (const auto& a : t.attributes)
        if (a.name != "y" && std::none_of(inst.features.begin(), inst.features.end(),
                                          [&](const Feature& f) { return f.name == a.name; }))
          inst.features.push_back({a.name, a.kind});
    inst.label = "y";
    return inst;
  }

  // Fact(S, [P,] x, y) joined with dimensions keyed by S (and P): S -> g
  // (categorical) and S -> h (continuous); with two groups also P -> q.
  Instance fd_schema(int groups, bool continuous_target, int fact_rows = 60) {
    Instance inst;
    int ns = uniform(3, 6), ng = uniform(2, std::min(3, ns)), np = uniform(2, 4), nq = 2;
    std::vector<int> g_of(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) g_of[static_cast<std::size_t>(s)] = s < ng ? s : uniform(0, ng - 1);
    std::vector<double> h_of;
    for (int s = 0; s < ns; ++s) h_of.push_back(real(0.5, 2.0));

    Table fact{"Fact", {cat("S"), cont("x"), cont("y")}, {}};
    if (groups > 1) fact.attributes = {cat("S"), cat("P"), cont("x"), cont("y")};
    std::set<std::vector<std::string>> seen;
    for (int i = 0; i < fact_rows; ++i) {
      std::vector<std::string> row{"s" + std::to_string(i < ns ? i : uniform(0, ns - 1))};
      if (groups > 1) row.push_back("p" + std::to_string(i < np ? i : uniform(0, np - 1)));
      row.push_back(std::to_string(real(-1.0, 1.0)));
      row.push_back(std::to_string(real(-2.0, 2.0)));
      if (seen.insert(row).second) fact.rows.push_back(row);
    }
    Table dim{"DimS", {cat("S"), cat("g")}, {}};
    if (continuous_target) dim.attributes.push_back(cont("h"));
    for (int s = 0; s < ns; ++s) {
      std::vector<std::string> row{"s" + std::to_string(s), "g" + std::to_string(g_of[static_cast<std::size_t>(s)])};
      if (continuous_target) row.push_back(std::to_string(h_of[static_cast<std::size_t>(s)]));
      dim.rows.push_back(row);
    }
    std::vector<Table> tables{fact, dim};
    std::vector<std::string> dim_vars{"g"};
    if (continuous_target) dim_vars.push_back("h");
    if (groups > 1) {
      Table dp{"DimP", {cat("P"), cat("q")}, {}};
      for (int p = 0; p < np; ++p)
        dp.rows.push_back({"p" + std::to_string(p), "q" + std::to_string(p < nq ? p : uniform(0, nq - 1))});
      tables.push_back(dp);
      // S -> {P -> {q, x -> y}, g -> h}
      auto dims = chain(dim_vars);
      inst.order = node("S", {node("P", {node("q"), node("x", {node("y")})}), dims[0]});
      inst.fds = {{"S", continuous_target ? std::vector<std::string>{"g", "h"} : std::vector<std::string>{"g"}},
                  {"P", {"q"}}};
      inst.features = {{"x", AttributeKind::Continuous}, {"S", AttributeKind::Categorical},
                       {"g", AttributeKind::Categorical}, {"P", AttributeKind::Categorical},
                       {"q", AttributeKind::Categorical}};
    } else {
      auto dims = chain(dim_vars);
      inst.order = node("S", {node("x", {node("y")}), dims[0]});
      inst.fds = {{"S", continuous_target ? std::vector<std::string>{"g", "h"} : std::vector<std::string>{"g"}}};
      inst.features = {{"x", AttributeKind::Continuous}, {"S", AttributeKind::Categorical},
                       {"g", AttributeKind::Categorical}};
    }
    if (continuous_target) inst.features.push_back({"h", AttributeKind::Continuous});
    inst.db = make_db(tables);
    inst.label = "y";
    return inst;
  }

 private:
  std::mt19937_64 rng_;
};

// Oracle coordinate of every layout coordinate (by block name and key assignment).
inline std::vector<std::size_t> oracle_index(const BlockLayout& layout, const oracle::Encoding& enc) {
  std::vector<std::size_t> out(layout.dimension(), static_cast<std::size_t>(-1));
  for (const auto& b : layout.blocks())
    for (std::size_t r = 0; r < b.size(); ++r)
      if (auto c = enc.find(b.name, assignment_of(b.key_variables, b.keys[r]))) out[b.offset + r] = *c;
  return out;
}

inline std::vector<Attribute> attributes_of(const std::vector<Feature>& features) {
  std::vector<Attribute> out;
  for (const auto& f : features) out.push_back({f.name, f.kind});
  return out;
}

inline oracle::Model oracle_model(ModelKind kind) {
  return kind == ModelKind::Linear ? oracle::Model::Linear
         : kind == ModelKind::Polynomial2 ? oracle::Model::Polynomial2
                                          : oracle::Model::Factorization;
}

// Unreduced Σ of a model, straight from the engine.
inline SparseSigma sigma_for(const Workspace& ws, const ModelSpec& model) {
  auto aggs = compute_aggregates(ws.db, ws.order, build_registers(ws.order, enumerate_monomials(model).monomials));
  return assemble(bind_components(component_monomials(model), ws.order), aggs, model.label, ws.order);
}

// Central differences of f at x.
template <class F>
std::vector<double> numeric_gradient(F&& f, std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double up = f(x);
    x[i] = keep - h;
    double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Hub(K) with k satellites Sat_i(K, v_i) of m rows each, all sharing one key value.
inline Instance star_schema(int k, int m) {
  Instance inst;
  std::vector<Table> tables{{"Hub", {cat("K")}, {{"k0"}}}};
  std::vector<OrderSpec> children;
  for (int i = 0; i < k; ++i) {
    std::string v = "v" + std::to_string(i);
    Table t{"Sat" + std::to_string(i), {cat("K"), cont(v)}, {}};
    for (int r = 0; r < m; ++r) t.rows.push_back({"k0", std::to_string(r + 1)});
    tables.push_back(t);
    children.push_back(node(v));
    inst.features.push_back({v, AttributeKind::Continuous});
  }
  inst.order = node("K", children);
  inst.db = make_db(tables);
  return inst;
}

}  // namespace testsupport
