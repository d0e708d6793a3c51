#include "factlearn/sigma.hpp"

#include <algorithm>

#include "factlearn/errors.hpp"

namespace factlearn {

std::vector<std::string> key_variables(const Monomial& m, const VariableOrder& order) {
  std::vector<std::pair<int, std::string>> vars;
  for (const auto& [v, e] : m.powers()) {
    int idx = order.index_of(v);
    if (order.node(idx).kind == AttributeKind::Categorical) vars.emplace_back(idx, v);
  }
  std::sort(vars.begin(), vars.end());
  std::vector<std::string> out;
  for (auto& [i, v] : vars) out.push_back(std::move(v));
  return out;
}

std::vector<HComponent> bind_components(const std::vector<Monomial>& monomials, const VariableOrder& order) {
  std::vector<HComponent> out;
  for (std::size_t j = 0; j < monomials.size(); ++j) out.push_back({j, monomials[j], key_variables(monomials[j], order)});
  return out;
}

std::size_t BlockLayout::add(std::string name, std::vector<std::string> key_vars, std::vector<Key> keys) {
  if (by_name_.count(name)) throw Error("duplicate parameter block " + name);
  Block b;
  b.name = std::move(name);
  b.key_variables = std::move(key_vars);
  b.keys = std::move(keys);
  b.offset = dimension_;
  for (std::size_t r = 0; r < b.keys.size(); ++r) {
    if (b.keys[r].size() != b.key_variables.size()) throw Error("block " + b.name + ": key arity mismatch");
    if (!b.index.emplace(b.keys[r], r).second) throw Error("block " + b.name + ": duplicate key");
  }
  dimension_ += b.keys.size();
  by_name_.emplace(b.name, blocks_.size());
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

std::optional<std::size_t> BlockLayout::find_block(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

const SparseSigma::SharedMap& SparseSigma::sigma(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  auto it = pair_index_.find({i, j});
  if (it == pair_index_.end()) throw Error("no sigma pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
  return maps_[pairs_[it->second].map];
}

std::size_t SparseSigma::stored_entries() const {
  std::size_t n = 0;
  for (const auto& p : pairs_) n += maps_[p.map].map.size();
  return n;
}

std::size_t SparseSigma::intern_map(const Monomial& m, const AggregateResult& aggregates, const VariableOrder& order) {
  auto it = map_index_.find(m);
  if (it != map_index_.end()) return it->second;
  if (!aggregates.contains(m)) throw Error("aggregate for monomial " + m.to_string() + " was not computed");
  // Divide rather than multiply by 1/|D| so that COUNT/|D| is exactly 1.
  const AggregateMap& raw = aggregates.at(m);
  AggregateMap normalized(raw.arity());
  for (const auto& [k, v] : raw) normalized.add(k, v / count_);
  maps_.push_back({m, key_variables(m, order), std::move(normalized)});
  map_index_.emplace(m, maps_.size() - 1);
  return maps_.size() - 1;
}

SparseSigma assemble(std::vector<HComponent> components, const AggregateResult& aggregates,
                     const std::optional<std::string>& label, const VariableOrder& order) {
  SparseSigma s;
  s.components_ = std::move(components);
  s.label_ = label;
  s.count_ = aggregates.count();
  if (s.count_ <= 0.0) throw Error("the join is empty; nothing to learn from");
  VariableKinds kinds;
  for (const auto& n : order.nodes()) kinds[n.variable] = n.kind;

  const auto& comps = s.components_;
  for (std::size_t j = 0; j < comps.size(); ++j) s.component_maps_.push_back(s.intern_map(comps[j].monomial, aggregates, order));
  for (std::size_t i = 0; i < comps.size(); ++i) {
    for (std::size_t j = i; j < comps.size(); ++j) {
      Monomial m = comps[i].monomial.times(comps[j].monomial, kinds);
      std::size_t map = s.intern_map(m, aggregates, order);
      s.pair_index_.emplace(std::make_pair(i, j), s.pairs_.size());
      s.pairs_.push_back({i, j, map});
    }
  }
  if (label) {
    Monomial y = Monomial::variable(*label);
    for (std::size_t j = 0; j < comps.size(); ++j)
      s.correlation_maps_.push_back(s.intern_map(y.times(comps[j].monomial, kinds), aggregates, order));
    s.label_moment_ = aggregates.at(Monomial::variable(*label, 2)).scalar() / s.count_;
  }
  return s;
}

BlockLayout observed_layout(const SparseSigma& sigma) {
  BlockLayout layout;
  for (std::size_t j = 0; j < sigma.components().size(); ++j) {
    const auto& shared = sigma.component_map(j);
    std::vector<Key> keys;
    for (const auto& [k, v] : shared.map) keys.push_back(k);
    layout.add(sigma.components()[j].monomial.to_string(), shared.key_variables, std::move(keys));
  }
  return layout;
}

std::vector<std::size_t> key_projection(const std::vector<std::string>& from, const std::vector<std::string>& to) {
  std::vector<std::size_t> pos;
  for (const auto& v : to) {
    auto it = std::find(from.begin(), from.end(), v);
    if (it == from.end()) throw Error("key variable " + v + " missing from group-by key");
    pos.push_back(static_cast<std::size_t>(it - from.begin()));
  }
  return pos;
}

namespace {

Key project_key(const Key& k, const std::vector<std::size_t>& pos) {
  Key out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out[i] = k[pos[i]];
  return out;
}

}  // namespace

SigmaKernel::SigmaKernel(const SparseSigma& sigma, const BlockLayout& layout) : dimension_(layout.dimension()) {
  const auto& comps = sigma.components();
  if (layout.size() != comps.size()) throw Error("layout has a different number of blocks than Σ has components");
  for (std::size_t j = 0; j < comps.size(); ++j)
    if (layout.block(j).key_variables != comps[j].categorical)
      throw Error("layout block " + layout.block(j).name + " does not match the key variables of component " +
                  comps[j].monomial.to_string());

  auto row_of = [&](std::size_t comp, const Key& key) {
    auto r = layout.block(comp).find(key);
    if (!r) throw Error("dimension mismatch: key of component " + comps[comp].monomial.to_string() +
                        " not present in its parameter block");
    return layout.block(comp).offset + *r;
  };

  for (const auto& p : sigma.pairs()) {
    const auto& shared = sigma.shared(p.map);
    auto pi = key_projection(shared.key_variables, comps[p.i].categorical);
    auto pj = key_projection(shared.key_variables, comps[p.j].categorical);
    for (const auto& [k, v] : shared.map) {
      std::size_t r = row_of(p.i, project_key(k, pi));
      std::size_t c = row_of(p.j, project_key(k, pj));
      (p.i == p.j ? diagonal_ : off_diagonal_).push_back({r, c, v});
    }
  }

  c_.assign(dimension_, 0.0);
  if (sigma.has_label()) {
    for (std::size_t j = 0; j < comps.size(); ++j) {
      const auto& shared = sigma.correlation(j);
      auto pj = key_projection(shared.key_variables, comps[j].categorical);
      for (const auto& [k, v] : shared.map) c_[row_of(j, project_key(k, pj))] += v;
    }
    s_y_ = sigma.label_moment();
  }
}

void SigmaKernel::multiply(std::span<const double> g, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : diagonal_) out[t.row] += t.value * g[t.col];
  for (const auto& t : off_diagonal_) {
    out[t.row] += t.value * g[t.col];
    out[t.col] += t.value * g[t.row];
  }
}

double SigmaKernel::quadratic_form(std::span<const double> g) const {
  double diag = 0.0, off = 0.0;
  for (const auto& t : diagonal_) diag += t.value * g[t.row] * g[t.col];
  for (const auto& t : off_diagonal_) off += t.value * g[t.row] * g[t.col];
  return diag + 2.0 * off;
}

DenseMatrix SigmaKernel::dense() const {
  DenseMatrix m(dimension_, dimension_);
  for (const auto& t : diagonal_) m(t.row, t.col) += t.value;
  for (const auto& t : off_diagonal_) {
    m(t.row, t.col) += t.value;
    m(t.col, t.row) += t.value;
  }
  return m;
}

}  // namespace factlearn
