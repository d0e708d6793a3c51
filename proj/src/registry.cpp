#include "factlearn/registry.hpp"

#include <algorithm>
#include <sstream>

#include "factlearn/errors.hpp"

namespace factlearn {

Monomial::Monomial(std::initializer_list<std::pair<const std::string, int>> powers) {
  for (const auto& [v, e] : powers)
    if (e > 0) powers_[v] += e;
}

Monomial Monomial::variable(const std::string& name, int exponent) {
  Monomial m;
  if (exponent > 0) m.powers_[name] = exponent;
  return m;
}

int Monomial::exponent(const std::string& variable) const {
  auto it = powers_.find(variable);
  return it == powers_.end() ? 0 : it->second;
}

int Monomial::degree() const {
  int d = 0;
  for (const auto& [v, e] : powers_) d += e;
  return d;
}

std::vector<std::string> Monomial::variables() const {
  std::vector<std::string> out;
  for (const auto& [v, e] : powers_) out.push_back(v);
  return out;
}

Monomial Monomial::times(const Monomial& other, const VariableKinds& kinds) const {
  Monomial out = *this;
  for (const auto& [v, e] : other.powers_) out.powers_[v] += e;
  for (auto& [v, e] : out.powers_) {
    auto it = kinds.find(v);
    if (it != kinds.end() && it->second == AttributeKind::Categorical) e = 1;
  }
  return out;
}

Monomial Monomial::project(const std::set<std::string>& variables) const {
  Monomial out;
  for (const auto& [v, e] : powers_)
    if (variables.count(v)) out.powers_[v] = e;
  return out;
}

Monomial Monomial::without(const std::string& variable) const {
  Monomial out = *this;
  out.powers_.erase(variable);
  return out;
}

std::string Monomial::to_string() const {
  if (powers_.empty()) return "1";
  std::string s;
  for (const auto& [v, e] : powers_) {
    if (!s.empty()) s += "*";
    s += v;
    if (e > 1) s += "^" + std::to_string(e);
  }
  return s;
}

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear: return "lr";
    case ModelKind::Polynomial2: return "pr2";
    case ModelKind::Factorization: return "fama";
    case ModelKind::Pca: return "pca";
  }
  return "?";
}

VariableKinds ModelSpec::kinds() const {
  VariableKinds k;
  for (const auto& f : features) k[f.name] = f.kind;
  if (label) k[*label] = AttributeKind::Continuous;
  return k;
}

std::vector<Monomial> component_monomials(const ModelSpec& model) {
  std::vector<Monomial> out;
  if (model.kind != ModelKind::Pca) out.emplace_back();
  for (const auto& f : model.features) out.push_back(Monomial::variable(f.name));
  if (model.degree() == 1) return out;
  const auto& fs = model.features;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    for (std::size_t j = i; j < fs.size(); ++j) {
      if (i == j) {
        if (model.kind == ModelKind::Polynomial2 && fs[i].kind == AttributeKind::Continuous)
          out.push_back(Monomial::variable(fs[i].name, 2));
        continue;
      }
      out.push_back(Monomial{{fs[i].name, 1}, {fs[j].name, 1}});
    }
  }
  return out;
}

MonomialSet enumerate_monomials(const std::vector<Monomial>& components, const std::optional<std::string>& label,
                                const VariableKinds& kinds) {
  MonomialSet set;
  set.roles[Monomial{}];
  for (std::size_t i = 0; i < components.size(); ++i) {
    set.roles[components[i]];
    for (std::size_t j = i; j < components.size(); ++j)
      set.roles[components[i].times(components[j], kinds)].push_back(
          {static_cast<int>(i), static_cast<int>(j)});
  }
  if (label) {
    Monomial y = Monomial::variable(*label);
    for (std::size_t j = 0; j < components.size(); ++j)
      set.roles[y.times(components[j], kinds)].push_back({-1, static_cast<int>(j)});
    set.roles[Monomial::variable(*label, 2)].push_back({-1, -1});
  }
  for (const auto& [m, r] : set.roles) set.monomials.push_back(m);
  return set;
}

MonomialSet enumerate_monomials(const ModelSpec& model) {
  return enumerate_monomials(component_monomials(model), model.label, model.kinds());
}

std::optional<std::size_t> NodeRegister::find(const Monomial& m) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), m,
                             [](const RegisterEntry& e, const Monomial& x) { return e.monomial < x; });
  if (it == entries.end() || !(it->monomial == m)) return std::nullopt;
  return static_cast<std::size_t>(it - entries.begin());
}

RegisterHierarchy::RegisterHierarchy(std::vector<NodeRegister> nodes, std::vector<Monomial>)
    : nodes_(std::move(nodes)) {}

std::size_t RegisterHierarchy::total_entries() const {
  std::size_t n = 0;
  for (const auto& r : nodes_) n += r.entries.size();
  return n;
}

std::string RegisterHierarchy::explain(const VariableOrder& order) const {
  std::ostringstream out;
  for (std::size_t x = 0; x < nodes_.size(); ++x) {
    const auto& node = order.node(static_cast<int>(x));
    std::string indent(2 * node.ancestors.size(), ' ');
    out << indent << node.variable << " (" << to_string(node.kind) << ")";
    out << " dep={";
    for (std::size_t i = 0; i < node.dependencies.size(); ++i)
      out << (i ? "," : "") << order.node(node.dependencies[i]).variable;
    out << "}" << (order.cacheable(static_cast<int>(x)) ? " cached" : "") << "\n";
    const auto& reg = nodes_[x];
    for (std::size_t l = 0; l < reg.entries.size(); ++l) {
      const auto& e = reg.entries[l];
      out << indent << "  [" << l << "] " << e.monomial.to_string() << " = ";
      if (e.local_exponent == 0)
        out << "1";
      else if (node.kind == AttributeKind::Categorical)
        out << "[" << node.variable << "]";
      else
        out << node.variable << (e.local_exponent > 1 ? "^" + std::to_string(e.local_exponent) : "");
      for (std::size_t c = 0; c < e.children.size(); ++c)
        out << " x " << order.node(node.children[c]).variable << "[" << e.children[c] << "]";
      out << "\n";
    }
  }
  return out.str();
}

namespace {

void build_node(const VariableOrder& order, int x, const std::set<Monomial>& monomials, std::vector<NodeRegister>& out,
                const VariableKinds& kinds) {
  const auto& node = order.node(x);
  std::vector<std::set<Monomial>> child_sets(node.children.size());
  std::vector<std::set<std::string>> child_vars;
  for (int c : node.children) {
    auto vars = order.subtree_variables(c);
    child_vars.emplace_back(vars.begin(), vars.end());
  }
  for (std::size_t c = 0; c < node.children.size(); ++c) child_sets[c].insert(Monomial{});
  for (const auto& m : monomials)
    for (std::size_t c = 0; c < node.children.size(); ++c) child_sets[c].insert(m.project(child_vars[c]));
  for (std::size_t c = 0; c < node.children.size(); ++c) build_node(order, node.children[c], child_sets[c], out, kinds);

  NodeRegister reg;
  reg.node = x;
  for (const auto& m : monomials) {
    RegisterEntry e;
    e.monomial = m;
    e.local_exponent = m.exponent(node.variable);
    for (std::size_t c = 0; c < node.children.size(); ++c) {
      auto idx = out[static_cast<std::size_t>(node.children[c])].find(m.project(child_vars[c]));
      e.children.push_back(*idx);
    }
    for (const auto& [v, p] : m.powers())
      if (kinds.at(v) == AttributeKind::Categorical) ++e.key_arity;
    reg.max_exponent = std::max(reg.max_exponent, e.local_exponent);
    if (e.local_exponent > 0 && node.kind == AttributeKind::Categorical) reg.adds_key = true;
    reg.entries.push_back(std::move(e));
  }
  out[static_cast<std::size_t>(x)] = std::move(reg);
}

}  // namespace

RegisterHierarchy build_registers(const VariableOrder& order, const std::vector<Monomial>& monomials) {
  VariableKinds kinds;
  for (const auto& n : order.nodes()) kinds[n.variable] = n.kind;
  std::set<Monomial> root{Monomial{}};
  for (const auto& m : monomials) {
    for (const auto& [v, e] : m.powers()) {
      if (!order.contains(v)) throw SchemaError("monomial " + m.to_string() + " references unknown variable " + v);
      if (kinds.at(v) == AttributeKind::Categorical && e > 1)
        throw SchemaError("monomial " + m.to_string() + " raises categorical " + v + " to a power");
    }
    root.insert(m);
  }
  std::vector<NodeRegister> nodes(order.size());
  build_node(order, 0, root, nodes, kinds);
  return RegisterHierarchy(std::move(nodes), std::vector<Monomial>(root.begin(), root.end()));
}

}  // namespace factlearn
