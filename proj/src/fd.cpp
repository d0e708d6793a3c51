#include "factlearn/fd.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "factlearn/errors.hpp"

namespace factlearn {

FdMatrix FdMatrix::identity(std::string f, std::vector<CategoryId> domain) {
  FdMatrix m;
  m.determinant = f;
  m.target = std::move(f);
  m.target_kind = AttributeKind::Categorical;
  m.categories = domain;
  m.domain = std::move(domain);
  for (std::size_t j = 0; j < m.domain.size(); ++j) m.image.push_back(j);
  return m;
}

double FdMatrix::entry(std::size_t row, std::size_t col) const {
  if (target_kind == AttributeKind::Continuous) return values[col];
  return image[col] == row ? 1.0 : 0.0;
}

DenseMatrix FdMatrix::dense() const {
  DenseMatrix m(rows(), cols());
  for (std::size_t j = 0; j < cols(); ++j) {
    if (target_kind == AttributeKind::Continuous)
      m(0, j) = values[j];
    else
      m(image[j], j) = 1.0;
  }
  return m;
}

std::vector<double> FdMatrix::apply(std::span<const double> x) const {
  std::vector<double> out(rows(), 0.0);
  for (std::size_t j = 0; j < cols(); ++j) {
    if (target_kind == AttributeKind::Continuous)
      out[0] += values[j] * x[j];
    else
      out[image[j]] += x[j];
  }
  return out;
}

std::vector<double> FdMatrix::apply_transpose(std::span<const double> y) const {
  std::vector<double> out(cols(), 0.0);
  for (std::size_t j = 0; j < cols(); ++j)
    out[j] = target_kind == AttributeKind::Continuous ? values[j] * y[0] : y[image[j]];
  return out;
}

FdMatrix build_r_matrix(const Database& db, const std::string& f, const std::string& c,
                        std::optional<std::vector<CategoryId>> domain) {
  if (!db.has_variable(f) || !db.has_variable(c))
    throw SchemaError("functional dependency " + f + " -> " + c + " names an unknown variable");
  if (db.kind_of(f) != AttributeKind::Categorical) throw SchemaError("determinant " + f + " must be categorical");
  std::map<CategoryId, double> image;
  bool housed = false;
  for (const auto& rel : db.relations()) {
    auto fc = rel.column_of(f), cc = rel.column_of(c);
    if (!fc || !cc) continue;
    housed = true;
    for (std::size_t r = 0; r < rel.size(); ++r) {
      auto fv = static_cast<CategoryId>(rel.at(r, *fc));
      double cv = rel.at(r, *cc);
      auto [it, inserted] = image.emplace(fv, cv);
      if (!inserted && it->second != cv)
        throw FdViolationError("functional dependency " + f + " -> " + c + " violated: " + f + "=" +
                               db.label(f, fv) + " has two images");
    }
  }
  if (!housed) throw SchemaError("no relation contains both " + f + " and " + c);

  FdMatrix m;
  m.determinant = f;
  m.target = c;
  m.target_kind = db.kind_of(c);
  if (domain) {
    m.domain = std::move(*domain);
  } else {
    for (const auto& [k, v] : image) m.domain.push_back(k);
  }
  std::vector<double> img;
  for (auto fv : m.domain) {
    auto it = image.find(fv);
    if (it == image.end())
      throw SchemaError("category " + db.label(f, fv) + " of " + f + " has no value of " + c);
    img.push_back(it->second);
  }
  if (m.target_kind == AttributeKind::Continuous) {
    m.values = std::move(img);
  } else {
    std::set<CategoryId> cats;
    for (double v : img) cats.insert(static_cast<CategoryId>(v));
    m.categories.assign(cats.begin(), cats.end());
    for (double v : img)
      m.image.push_back(static_cast<std::size_t>(
          std::lower_bound(m.categories.begin(), m.categories.end(), static_cast<CategoryId>(v)) -
          m.categories.begin()));
  }
  return m;
}

GroupImage group_image(const Monomial& u, const std::string& f, const std::vector<CategoryId>& domain,
                       const std::map<std::string, FdMatrix>& r, const VariableOrder& order) {
  GroupImage g;
  g.monomial = u;
  g.key_variables = key_variables(u, order);
  std::vector<Key> raw(domain.size());
  g.weight.assign(domain.size(), 1.0);
  for (std::size_t j = 0; j < domain.size(); ++j) {
    for (const auto& v : g.key_variables) {
      if (v == f) {
        raw[j].push_back(domain[j]);
      } else {
        const FdMatrix& m = r.at(v);
        raw[j].push_back(m.categories[m.image[j]]);
      }
    }
    for (const auto& [v, e] : u.powers()) {
      if (v == f) continue;
      const FdMatrix& m = r.at(v);
      if (m.target_kind == AttributeKind::Continuous) g.weight[j] *= std::pow(m.values[j], e);
    }
  }
  std::set<Key> distinct(raw.begin(), raw.end());
  g.keys.assign(distinct.begin(), distinct.end());
  for (const auto& k : raw)
    g.key_of.push_back(static_cast<std::size_t>(std::lower_bound(g.keys.begin(), g.keys.end(), k) - g.keys.begin()));
  return g;
}

BInverse BInverse::from_images(std::size_t n, const std::vector<GroupImage>& images) {
  BInverse b;
  b.inverse_ = DenseMatrix::identity(n);
  b.b_ = DenseMatrix::identity(n);
  std::vector<double> u(n), w(n);
  for (const auto& img : images) {
    for (std::size_t k = 0; k < img.keys.size(); ++k) {
      std::fill(u.begin(), u.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j)
        if (img.key_of[j] == k) u[j] = img.weight[j];
      w = b.inverse_.multiply(u);
      double denom = 1.0 + dot(u, w);
      if (!(denom > 0.0)) throw NumericError("B matrix update lost positive definiteness");
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          b.inverse_(r, c) -= w[r] * w[c] / denom;
          b.b_(r, c) += u[r] * u[c];
        }
      ++b.updates_;
    }
  }
  return b;
}

ReducedModel reduce(const ModelSpec& model, const FdCatalog& catalog) {
  ReducedModel red;
  red.original = model;
  std::map<std::string, AttributeKind> features;
  for (const auto& f : model.features) features[f.name] = f.kind;
  std::set<std::string> determined;
  for (const auto& fd : catalog.groups()) {
    auto it = features.find(fd.determinant);
    if (it == features.end()) continue;
    FdGroup g{fd.determinant, {}};
    for (const auto& c : fd.determined)
      if (features.count(c)) g.determined.push_back(c);
    if (g.determined.empty()) continue;
    if (it->second != AttributeKind::Categorical)
      throw SchemaError("determinant " + fd.determinant + " must be categorical");
    determined.insert(g.determined.begin(), g.determined.end());
    red.groups.push_back(std::move(g));
  }
  red.reduced = model;
  red.reduced.features.clear();
  for (const auto& f : model.features)
    if (!determined.count(f.name)) red.reduced.features.push_back(f);
  red.original_components = component_monomials(model);
  for (const auto& m : red.original_components) {
    bool drop = std::any_of(determined.begin(), determined.end(), [&](const std::string& v) { return m.contains(v); });
    (drop ? red.dropped_components : red.kept_components).push_back(m);
  }
  return red;
}

void apply_modes(std::vector<double>& x, const std::vector<std::size_t>& dims,
                 const std::vector<std::pair<std::size_t, const DenseMatrix*>>& modes) {
  std::vector<double> tmp(x.size());
  for (const auto& [mode, m] : modes) {
    std::size_t n = dims[mode];
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = mode + 1; i < dims.size(); ++i) inner *= dims[i];
    for (std::size_t i = 0; i < mode; ++i) outer *= dims[i];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t in = 0; in < inner; ++in) {
          double s = 0.0;
          for (std::size_t k = 0; k < n; ++k) s += (*m)(r, k) * x[(o * n + k) * inner + in];
          tmp[(o * n + r) * inner + in] = s;
        }
    x.swap(tmp);
  }
}

namespace {

std::optional<std::size_t> group_with_determinant(const std::vector<GroupArtifacts>& groups, const std::string& v) {
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (groups[g].group.determinant == v) return g;
  return std::nullopt;
}

// Merges (variable, value) sources into a key over `key_vars`.
Key merge_key(const std::vector<std::string>& key_vars,
              const std::vector<std::pair<const std::vector<std::string>*, const Key*>>& sources) {
  Key out;
  out.reserve(key_vars.size());
  for (const auto& v : key_vars) {
    bool found = false;
    for (const auto& [vars, key] : sources) {
      auto it = std::find(vars->begin(), vars->end(), v);
      if (it != vars->end()) {
        out.push_back((*key)[static_cast<std::size_t>(it - vars->begin())]);
        found = true;
        break;
      }
    }
    if (!found) throw Error("no value for key variable " + v);
  }
  return out;
}

}  // namespace

ReducedLinearModel::Prepared ReducedLinearModel::prepare(SparseSigma sigma, std::vector<GroupArtifacts> groups,
                                                         int degree, const VariableOrder& order) {
  Prepared p;
  const auto& comps = sigma.components();
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const auto& b = comps[j].monomial;
    ReducedBlock rb;
    std::vector<std::pair<int, std::size_t>> found;
    for (const auto& v : b.variables())
      if (auto g = group_with_determinant(groups, v)) found.emplace_back(order.index_of(v), *g);
    std::sort(found.begin(), found.end());
    if (found.empty()) {
      std::vector<Key> keys;
      for (const auto& [k, v] : sigma.component_map(j).map) keys.push_back(k);
      p.layout.add(b.to_string(), comps[j].categorical, std::move(keys));
      p.blocks.push_back(std::move(rb));
      continue;
    }
    rb.w = b;
    for (const auto& [pos, g] : found) rb.w = rb.w.without(groups[g].group.determinant);
    std::optional<std::size_t> wj;
    for (std::size_t i = 0; i < comps.size(); ++i)
      if (comps[i].monomial == rb.w) wj = i;
    if (!wj) throw Error("component " + rb.w.to_string() + " is missing from the reduced model");
    rb.w_key_variables = sigma.component_map(*wj).key_variables;
    for (const auto& [k, v] : sigma.component_map(*wj).map) rb.w_keys.push_back(k);
    int budget = degree - rb.w.degree() - static_cast<int>(found.size() - 1);
    rb.dims.push_back(rb.w_keys.size());
    for (const auto& [pos, g] : found) {
      rb.parts.push_back({g, budget});
      rb.dims.push_back(groups[g].domain.size());
    }

    std::vector<Key> keys;
    std::vector<std::vector<std::string>> part_vars;
    for (const auto& part : rb.parts) part_vars.push_back({groups[part.group].group.determinant});
    std::vector<Key> part_keys(rb.parts.size(), Key(1));
    std::size_t total = 1;
    for (auto d : rb.dims) total *= d;
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      std::vector<std::size_t> idx(rb.dims.size());
      for (std::size_t m = rb.dims.size(); m-- > 0;) {
        idx[m] = rem % rb.dims[m];
        rem /= rb.dims[m];
      }
      std::vector<std::pair<const std::vector<std::string>*, const Key*>> sources{
          {&rb.w_key_variables, &rb.w_keys[idx[0]]}};
      for (std::size_t q = 0; q < rb.parts.size(); ++q) {
        part_keys[q][0] = groups[rb.parts[q].group].domain[idx[q + 1]];
        sources.emplace_back(&part_vars[q], &part_keys[q]);
      }
      keys.push_back(merge_key(comps[j].categorical, sources));
    }
    p.layout.add(b.to_string(), comps[j].categorical, std::move(keys));
    p.blocks.push_back(std::move(rb));
  }
  p.sigma = std::move(sigma);
  p.groups = std::move(groups);
  return p;
}

ReducedLinearModel::ReducedLinearModel(SparseSigma sigma, double lambda, std::vector<GroupArtifacts> groups,
                                       const ReducedModel& reduction, const VariableOrder& order)
    : ReducedLinearModel(prepare(std::move(sigma), std::move(groups), reduction.original.degree(), order), lambda,
                         reduction, order) {}

ReducedLinearModel::ReducedLinearModel(Prepared prepared, double lambda, const ReducedModel& reduction,
                                       const VariableOrder& order)
    : LinearModel(std::move(prepared.sigma), std::move(prepared.layout), lambda),
      groups_(std::move(prepared.groups)),
      reduced_(std::move(prepared.blocks)),
      original_components_(reduction.original_components),
      order_(order) {
  for (const auto& rb : reduced_)
    for (const auto& part : rb.parts)
      if (!groups_[part.group].inverses.count(part.budget))
        throw Error("missing B inverse for group " + groups_[part.group].group.determinant);
}

void ReducedLinearModel::apply_penalty(std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < reduced_.size(); ++j) {
    const auto& blk = layout().block(j);
    const auto& rb = reduced_[j];
    if (rb.parts.empty()) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(blk.offset), blk.size(),
                  out.begin() + static_cast<std::ptrdiff_t>(blk.offset));
      continue;
    }
    std::vector<double> seg(x.begin() + static_cast<std::ptrdiff_t>(blk.offset),
                            x.begin() + static_cast<std::ptrdiff_t>(blk.offset + blk.size()));
    std::vector<std::pair<std::size_t, const DenseMatrix*>> modes;
    for (std::size_t q = 0; q < rb.parts.size(); ++q)
      modes.emplace_back(q + 1, &groups_[rb.parts[q].group].inverses.at(rb.parts[q].budget).inverse());
    apply_modes(seg, rb.dims, modes);
    std::copy(seg.begin(), seg.end(), out.begin() + static_cast<std::ptrdiff_t>(blk.offset));
  }
}

double ReducedLinearModel::omega(std::span<const double> gamma) const {
  std::vector<double> p(gamma.size());
  apply_penalty(gamma, p);
  return dot(gamma, p);
}

std::vector<double> ReducedLinearModel::omega_gradient(std::span<const double> gamma) const {
  std::vector<double> p(gamma.size());
  apply_penalty(gamma, p);
  for (auto& v : p) v *= 2.0;
  return p;
}

ParameterSet ReducedLinearModel::recover(std::span<const double> gamma) const {
  std::vector<double> pg(gamma.size());
  apply_penalty(gamma, pg);

  struct Out {
    std::vector<std::string> key_vars;
    std::map<Key, double> values;
  };
  std::map<Monomial, Out> produced;
  for (std::size_t j = 0; j < reduced_.size(); ++j) {
    const auto& blk = layout().block(j);
    const auto& rb = reduced_[j];
    const Monomial& b = sigma().components()[j].monomial;
    if (rb.parts.empty()) {
      Out o{blk.key_variables, {}};
      for (std::size_t r = 0; r < blk.size(); ++r) o.values[blk.keys[r]] = gamma[blk.offset + r];
      produced.emplace(b, std::move(o));
      continue;
    }
    // Every choice of one image per part yields one original component.
    std::vector<const std::vector<GroupImage>*> choices;
    for (const auto& part : rb.parts) choices.push_back(&groups_[part.group].images.at(part.budget));
    std::vector<std::size_t> pick(rb.parts.size(), 0);
    while (true) {
      Monomial a = rb.w;
      std::vector<const GroupImage*> imgs;
      for (std::size_t q = 0; q < pick.size(); ++q) {
        imgs.push_back(&(*choices[q])[pick[q]]);
        for (const auto& [v, e] : imgs.back()->monomial.powers()) a = a.times(Monomial::variable(v, e), {});
      }
      Out o{key_variables(a, order_), {}};
      std::size_t total = blk.size();
      for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        std::vector<std::size_t> idx(rb.dims.size());
        for (std::size_t m = rb.dims.size(); m-- > 0;) {
          idx[m] = rem % rb.dims[m];
          rem /= rb.dims[m];
        }
        double w = 1.0;
        std::vector<std::pair<const std::vector<std::string>*, const Key*>> sources{
            {&rb.w_key_variables, &rb.w_keys[idx[0]]}};
        for (std::size_t q = 0; q < imgs.size(); ++q) {
          std::size_t col = idx[q + 1];
          w *= imgs[q]->weight[col];
          sources.emplace_back(&imgs[q]->key_variables, &imgs[q]->keys[imgs[q]->key_of[col]]);
        }
        o.values[merge_key(o.key_vars, sources)] += w * pg[blk.offset + flat];
      }
      if (!produced.emplace(a, std::move(o)).second)
        throw Error("component " + a.to_string() + " recovered twice");
      std::size_t q = 0;
      while (q < pick.size() && ++pick[q] == choices[q]->size()) pick[q++] = 0;
      if (q == pick.size()) break;
    }
  }

  ParameterSet out;
  for (const auto& a : original_components_) {
    auto it = produced.find(a);
    if (it == produced.end()) throw Error("component " + a.to_string() + " has no recovered parameters");
    std::vector<Key> keys;
    for (const auto& [k, v] : it->second.values) {
      keys.push_back(k);
      out.values.push_back(v);
    }
    out.layout.add(a.to_string(), it->second.key_vars, std::move(keys));
  }
  if (produced.size() != original_components_.size()) throw Error("recovered components outside the original model");
  return out;
}

void FdFactorizationPenalty::bind(const FactorizationModel& model) {
  model_ = &model;
  const auto& layout = model.layout();
  views_.clear();
  special_.assign(layout.dimension(), false);
  auto mark = [&](std::size_t block) {
    const auto& b = layout.block(block);
    for (std::size_t r = 0; r < b.size(); ++r) special_[b.offset + r] = true;
    return b.offset;
  };
  for (const auto& g : groups_) {
    GroupView v;
    const auto& fb = layout.block(model.first_order_block(g.group.determinant));
    std::vector<Key> expected;
    for (auto id : g.domain) expected.push_back({id});
    if (fb.keys != expected) throw Error("determinant block of " + g.group.determinant + " does not match its domain");
    v.first_order_f = mark(model.first_order_block(g.group.determinant));
    for (int l = 1; l <= rank_; ++l) v.factor_f.push_back(mark(model.factor_block(g.group.determinant, l)));
    for (const auto& c : g.group.determined) {
      const FdMatrix& r = g.r.at(c);
      std::vector<std::size_t> offs;
      for (int l = 1; l <= rank_; ++l) {
        const auto& cb = layout.block(model.factor_block(c, l));
        if (cb.size() != r.rows()) throw Error("factor block of " + c + " does not match its FD image");
        offs.push_back(cb.offset);
      }
      v.factor_c.push_back(std::move(offs));
      v.r.push_back(&r);
    }
    views_.push_back(std::move(v));
  }
}

FdFactorizationPenalty::GroupState FdFactorizationPenalty::state(std::size_t g, std::span<const double> x) const {
  const auto& view = views_[g];
  const std::size_t n = groups_[g].domain.size();
  GroupState s;
  s.beta.assign(n, 0.0);
  for (int l = 0; l < rank_; ++l) {
    std::vector<std::vector<double>> us;
    std::vector<double> delta(n, 0.0);
    std::vector<double> sq(n, 0.0);
    for (std::size_t c = 0; c < view.r.size(); ++c) {
      const FdMatrix& r = *view.r[c];
      auto u = r.apply_transpose(x.subspan(view.factor_c[c][static_cast<std::size_t>(l)], r.rows()));
      for (std::size_t j = 0; j < n; ++j) {
        delta[j] += u[j];
        sq[j] += u[j] * u[j];
      }
      us.push_back(std::move(u));
    }
    const double* gf = x.data() + view.factor_f[static_cast<std::size_t>(l)];
    for (std::size_t j = 0; j < n; ++j) s.beta[j] += (gf[j] - 0.5 * delta[j]) * delta[j] - 0.5 * sq[j];
    s.u.push_back(std::move(us));
    s.delta.push_back(std::move(delta));
  }
  std::vector<double> diff(n);
  for (std::size_t j = 0; j < n; ++j) diff[j] = x[view.first_order_f + j] - s.beta[j];
  s.z = groups_[g].inverses.at(1).apply(diff);
  return s;
}

double FdFactorizationPenalty::value(std::span<const double> x) const {
  double omega = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!special_[i]) omega += x[i] * x[i];
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& view = views_[g];
    const std::size_t n = groups_[g].domain.size();
    auto s = state(g, x);
    for (std::size_t j = 0; j < n; ++j) omega += (x[view.first_order_f + j] - s.beta[j]) * s.z[j];
    for (int l = 0; l < rank_; ++l) {
      const double* gf = x.data() + view.factor_f[static_cast<std::size_t>(l)];
      for (std::size_t j = 0; j < n; ++j) {
        double t = gf[j] - s.delta[static_cast<std::size_t>(l)][j];
        omega += t * t;
      }
    }
  }
  return omega;
}

void FdFactorizationPenalty::gradient(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = special_[i] ? 0.0 : 2.0 * x[i];
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& view = views_[g];
    const std::size_t n = groups_[g].domain.size();
    auto s = state(g, x);
    for (std::size_t j = 0; j < n; ++j) out[view.first_order_f + j] = 2.0 * s.z[j];
    for (int l = 0; l < rank_; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const double* gf = x.data() + view.factor_f[li];
      const auto& delta = s.delta[li];
      std::vector<double> resid(n);  // γ_f − δ
      for (std::size_t j = 0; j < n; ++j) {
        resid[j] = gf[j] - delta[j];
        out[view.factor_f[li] + j] = 2.0 * (resid[j] - delta[j] * s.z[j]);
      }
      for (std::size_t c = 0; c < view.r.size(); ++c) {
        const auto& u = s.u[li][c];
        std::vector<double> v(n);
        for (std::size_t j = 0; j < n; ++j) v[j] = resid[j] + (resid[j] - u[j]) * s.z[j];
        auto rv = view.r[c]->apply(v);
        for (std::size_t k = 0; k < rv.size(); ++k) out[view.factor_c[c][li] + k] -= 2.0 * rv[k];
      }
    }
  }
}

ParameterSet FdFactorizationPenalty::recover(std::span<const double> x, const std::vector<Feature>& features,
                                             const VariableOrder&) const {
  const auto& layout = model_->layout();
  ParameterSet out;
  auto copy_block = [&](std::size_t block) {
    const auto& b = layout.block(block);
    out.layout.add(b.name, b.key_variables, b.keys);
    out.values.insert(out.values.end(), x.begin() + static_cast<std::ptrdiff_t>(b.offset),
                      x.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()));
  };
  std::vector<GroupState> states;
  for (std::size_t g = 0; g < groups_.size(); ++g) states.push_back(state(g, x));
  auto group_of = [&](const std::string& v) -> std::pair<std::optional<std::size_t>, std::optional<std::size_t>> {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      if (groups_[g].group.determinant == v) return {g, std::nullopt};
      const auto& d = groups_[g].group.determined;
      for (std::size_t c = 0; c < d.size(); ++c)
        if (d[c] == v) return {g, c};
    }
    return {std::nullopt, std::nullopt};
  };

  copy_block(model_->first_order_block("1"));
  for (const auto& f : features) {
    auto [g, c] = group_of(f.name);
    if (!g) {
      copy_block(model_->first_order_block(f.name));
      continue;
    }
    const auto& art = groups_[*g];
    if (!c) {
      std::vector<Key> keys;
      for (auto id : art.domain) keys.push_back({id});
      out.layout.add(f.name, {f.name}, std::move(keys));
      out.values.insert(out.values.end(), states[*g].z.begin(), states[*g].z.end());
      continue;
    }
    const FdMatrix& r = art.r.at(f.name);
    std::vector<Key> keys;
    std::vector<std::string> kv;
    if (r.target_kind == AttributeKind::Categorical) {
      kv.push_back(f.name);
      for (auto id : r.categories) keys.push_back({id});
    } else {
      keys.push_back({});
    }
    out.layout.add(f.name, kv, std::move(keys));
    auto vals = r.apply(states[*g].z);
    out.values.insert(out.values.end(), vals.begin(), vals.end());
  }
  for (const auto& f : features) {
    for (int l = 1; l <= rank_; ++l) {
      auto [g, c] = group_of(f.name);
      std::size_t block = model_->factor_block(f.name, l);
      if (!g || c) {
        copy_block(block);
        continue;
      }
      const auto& b = layout.block(block);
      out.layout.add(b.name, b.key_variables, b.keys);
      const auto& delta = states[*g].delta[static_cast<std::size_t>(l - 1)];
      for (std::size_t j = 0; j < b.size(); ++j) out.values.push_back(x[b.offset + j] - delta[j]);
    }
  }
  return out;
}

FdProblem build_fd_problem(const Database& db, const VariableOrder& order, const ModelSpec& model,
                           const FdCatalog& catalog, const EngineOptions& options) {
  if (model.kind == ModelKind::Pca) throw SchemaError("use the PCA entry points for FD-reduced PCA");
  auto validation = validate_fds(db, catalog);
  if (!validation.ok()) throw FdViolationError("functional dependencies do not hold:\n" + validation.report());

  FdProblem problem;
  problem.reduction = reduce(model, catalog);
  const auto& red = problem.reduction;
  auto kinds = model.kinds();
  auto monomials = enumerate_monomials(red.kept_components, model.label, kinds);
  auto registers = build_registers(order, monomials.monomials);
  problem.aggregates = compute_aggregates(db, order, registers, options);
  SparseSigma sigma = assemble(bind_components(red.kept_components, order), problem.aggregates, model.label, order);

  std::vector<GroupArtifacts> groups;
  for (const auto& g : red.groups) {
    GroupArtifacts art;
    art.group = g;
    for (const auto& [k, v] : problem.aggregates.at(Monomial::variable(g.determinant))) art.domain.push_back(k[0]);
    for (const auto& c : g.determined) art.r.emplace(c, build_r_matrix(db, g.determinant, c, art.domain));
    std::set<std::string> members(g.determined.begin(), g.determined.end());
    members.insert(g.determinant);
    for (int budget = 1; budget <= model.degree(); ++budget) {
      std::vector<GroupImage> images, updates;
      for (const auto& u : red.original_components) {
        if (u.is_constant() || u.degree() > budget) continue;
        auto vars = u.variables();
        if (!std::all_of(vars.begin(), vars.end(), [&](const std::string& v) { return members.count(v) > 0; }))
          continue;
        images.push_back(group_image(u, g.determinant, art.domain, art.r, order));
        if (!(u == Monomial::variable(g.determinant))) updates.push_back(images.back());
      }
      art.inverses.emplace(budget, BInverse::from_images(art.domain.size(), updates));
      art.images.emplace(budget, std::move(images));
    }
    groups.push_back(std::move(art));
  }

  if (model.kind == ModelKind::Factorization) {
    std::map<std::string, std::vector<Key>> factor_keys;
    for (const auto& art : groups)
      for (const auto& [c, r] : art.r) {
        std::vector<Key> keys;
        if (r.target_kind == AttributeKind::Categorical)
          for (auto id : r.categories) keys.push_back({id});
        else
          keys.push_back({});
        factor_keys[c] = std::move(keys);
      }
    auto penalty = std::make_shared<FdFactorizationPenalty>(std::move(groups), model.rank);
    auto fm = std::make_unique<FactorizationModel>(std::move(sigma), model.rank, model.lambda, model.features,
                                                   std::move(factor_keys), penalty);
    penalty->bind(*fm);
    auto features = model.features;
    fm->set_exporter([penalty, features, order](std::span<const double> x) {
      return penalty->recover(x, features, order);
    });
    problem.objective = std::move(fm);
  } else {
    problem.objective = std::make_unique<ReducedLinearModel>(std::move(sigma), model.lambda, std::move(groups),
                                                             problem.reduction, order);
  }
  return problem;
}

}  // namespace factlearn
