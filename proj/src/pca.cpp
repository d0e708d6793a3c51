#include "factlearn/pca.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "factlearn/errors.hpp"
#include "factlearn/sigma.hpp"

namespace factlearn {

DenseMatrix SymmetricOperator::dense() const {
  std::size_t n = dimension();
  DenseMatrix m(n, n);
  std::vector<double> e(n, 0.0), out(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    apply(e, out);
    for (std::size_t i = 0; i < n; ++i) m(i, j) = out[i];
    e[j] = 0.0;
  }
  return m;
}

void DenseOperator::apply(std::span<const double> x, std::span<double> out) const {
  auto y = m_.multiply(x);
  std::copy(y.begin(), y.end(), out.begin());
}

void DeflatedOperator::apply(std::span<const double> x, std::span<double> out) const {
  base_.apply(x, out);
  for (const auto& [lambda, theta] : terms_) {
    double p = lambda * dot(theta, x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= p * theta[i];
  }
}

DummyLayout DummyLayout::build(const std::vector<Feature>& features,
                               const std::map<std::string, std::map<CategoryId, double>>& counts,
                               const Database& db) {
  DummyLayout layout;
  for (const auto& f : features) {
    Variable v;
    v.name = f.name;
    v.kind = f.kind;
    if (f.kind == AttributeKind::Categorical) {
      auto it = counts.find(f.name);
      if (it == counts.end() || it->second.size() <= 1) {
        layout.removed_.push_back(f.name);
        continue;
      }
      const auto& c = it->second;
      CategoryId drop = c.begin()->first;
      for (const auto& [id, n] : c) {
        double best = c.at(drop);
        if (n < best || (n == best && db.label(f.name, id) < db.label(f.name, drop))) drop = id;
      }
      v.dropped = drop;
      for (const auto& [id, n] : c)
        if (id != drop) v.retained.push_back(id);
    }
    v.offset = layout.dimension_;
    layout.dimension_ += v.size();
    layout.variables_.push_back(std::move(v));
  }
  return layout;
}

const DummyLayout::Variable* DummyLayout::find(const std::string& name) const {
  for (const auto& v : variables_)
    if (v.name == name) return &v;
  return nullptr;
}

std::optional<std::size_t> DummyLayout::coordinate(const std::string& name, CategoryId category) const {
  const Variable* v = find(name);
  if (!v) return std::nullopt;
  if (v->kind == AttributeKind::Continuous) return v->offset;
  auto it = std::lower_bound(v->retained.begin(), v->retained.end(), category);
  if (it == v->retained.end() || *it != category) return std::nullopt;
  return v->offset + static_cast<std::size_t>(it - v->retained.begin());
}

MonomialSet covariance_monomials(const std::vector<Feature>& features) {
  ModelSpec spec;
  spec.kind = ModelKind::Pca;
  spec.features = features;
  return enumerate_monomials(spec);
}

namespace {

std::map<std::string, std::map<CategoryId, double>> category_counts(const AggregateResult& aggregates,
                                                                   const std::vector<Feature>& features) {
  std::map<std::string, std::map<CategoryId, double>> counts;
  for (const auto& f : features) {
    if (f.kind != AttributeKind::Categorical) continue;
    auto& c = counts[f.name];
    for (const auto& [key, n] : aggregates.at(Monomial::variable(f.name))) c[key[0]] = n;
  }
  return counts;
}

}  // namespace

CovarianceTensor::CovarianceTensor(const AggregateResult& aggregates, const std::vector<Feature>& features,
                                   const VariableOrder& order, const Database& db)
    : layout_(DummyLayout::build(features, category_counts(aggregates, features), db)) {
  double n = aggregates.count();
  if (n <= 0.0) throw InputError("covariance over an empty join");
  VariableKinds kinds;
  for (const auto& f : features) kinds[f.name] = f.kind;

  mean_.assign(layout_.dimension(), 0.0);
  for (const auto& v : layout_.variables()) {
    const auto& map = aggregates.at(Monomial::variable(v.name));
    if (v.kind == AttributeKind::Continuous) {
      mean_[v.offset] = map.scalar() / n;
    } else {
      for (std::size_t k = 0; k < v.retained.size(); ++k) mean_[v.offset + k] = map.get({v.retained[k]}) / n;
    }
  }

  const auto& vars = layout_.variables();
  for (std::size_t a = 0; a < vars.size(); ++a) {
    for (std::size_t b = a; b < vars.size(); ++b) {
      const auto& va = vars[a];
      const auto& vb = vars[b];
      Monomial m = Monomial::variable(va.name).times(Monomial::variable(vb.name), kinds);
      auto key_vars = key_variables(m, order);
      auto position = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(key_vars.begin(), key_vars.end(), name) - key_vars.begin());
      };
      std::size_t pa = va.kind == AttributeKind::Categorical ? position(va.name) : 0;
      std::size_t pb = vb.kind == AttributeKind::Categorical ? position(vb.name) : 0;
      for (const auto& [key, raw] : aggregates.at(m)) {
        auto coord = [&](const DummyLayout::Variable& v, std::size_t pos) -> std::optional<std::size_t> {
          if (v.kind == AttributeKind::Continuous) return v.offset;
          return layout_.coordinate(v.name, key[pos]);
        };
        auto ra = coord(va, pa);
        auto rb = coord(vb, pb);
        if (!ra || !rb) continue;
        double value = raw / n;
        if (a == b) {
          if (*ra == *rb) diagonal_.push_back({*ra, *rb, value});
        } else {
          off_diagonal_.push_back({*ra, *rb, value});
        }
      }
    }
  }
}

void CovarianceTensor::apply(std::span<const double> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : diagonal_) out[t.row] += t.value * x[t.col];
  for (const auto& t : off_diagonal_) {
    out[t.row] += t.value * x[t.col];
    out[t.col] += t.value * x[t.row];
  }
  double p = dot(mean_, x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= p * mean_[i];
}

CovarianceTensor centered_covariance(const AggregateResult& aggregates, const std::vector<Feature>& features,
                                     const VariableOrder& order, const Database& db) {
  return CovarianceTensor(aggregates, features, order, db);
}

namespace {

void normalize(std::vector<double>& x) {
  double n = norm2(x);
  if (n == 0.0) return;
  for (double& v : x) v /= n;
}

void orient(std::vector<double>& x) {
  for (double v : x) {
    if (std::abs(v) <= 1e-10) continue;
    if (v < 0)
      for (double& w : x) w = -w;
    return;
  }
}

void orthogonalize(std::vector<double>& x, const std::vector<std::vector<double>>& basis) {
  for (const auto& q : basis) {
    double p = dot(q, x);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= p * q[i];
  }
}

std::vector<double> random_start(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

void flag_degenerate(EigenResult& r, double gap) {
  r.degenerate.assign(r.values.size(), false);
  for (std::size_t j = 0; j + 1 < r.values.size(); ++j) {
    double scale = std::max(1.0, std::abs(r.values[j]));
    if (std::abs(r.values[j] - r.values[j + 1]) <= gap * scale) r.degenerate[j] = r.degenerate[j + 1] = true;
  }
}

}  // namespace

EigenResult top_k_eigen(const SymmetricOperator& sigma, std::size_t k, const EigenConfig& config) {
  std::size_t n = sigma.dimension();
  if (k > n) throw InputError("K = " + std::to_string(k) + " exceeds the dimension " + std::to_string(n));
  EigenResult result;
  DeflatedOperator op(sigma);
  std::mt19937_64 rng(config.seed);

  for (std::size_t l = 0; l < k; ++l) {
    auto theta = random_start(n, rng);
    orthogonalize(theta, result.vectors);
    normalize(theta);
    if (norm2(theta) == 0.0) throw NumericError("eigen start vector vanished");

    // θ-step: Armijo ascent on the Rayleigh quotient along g = Σθ − 2νθ;
    // ν-step: ν = θᵀΣθ / (2‖θ‖²), exact.
    std::vector<double> s_theta(n), g(n), s_g(n), prev_theta, prev_g;
    double alpha = config.max_iters > 0 ? 1.0 : 0.0;
    bool converged = false;
    int it = 0;
    double rq = 0.0;
    for (; it < config.max_iters; ++it) {
      op.apply(theta, s_theta);
      rq = dot(theta, s_theta);
      for (std::size_t i = 0; i < n; ++i) g[i] = s_theta[i] - rq * theta[i];
      orthogonalize(g, result.vectors);
      double gg = dot(g, g);
      if (std::sqrt(gg) <= config.tolerance * std::max(1.0, std::abs(rq))) {
        converged = true;
        break;
      }
      if (!prev_theta.empty()) {
        double ss = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double s = theta[i] - prev_theta[i];
          double y = g[i] - prev_g[i];
          ss += s * s;
          sy += s * y;
        }
        if (sy != 0.0) alpha = std::clamp(ss / std::abs(sy), 1e-8, 1e8);
      }
      op.apply(g, s_g);
      double rho = dot(g, s_g) / gg;
      // R(θ + αg) − R(θ) = α‖g‖²(2 + α(ρ − R)) / (1 + α²‖g‖²) since θ ⟂ g.
      int backtracks = 0;
      while ((2.0 + alpha * (rho - rq)) / (1.0 + alpha * alpha * gg) < 0.5) {
        alpha *= 0.5;
        if (++backtracks > 200) throw NumericError("eigen line search failed");
      }
      prev_theta = theta;
      prev_g = g;
      for (std::size_t i = 0; i < n; ++i) theta[i] += alpha * g[i];
      normalize(theta);
    }
    if (!converged)
      throw NumericError("eigenpair " + std::to_string(l + 1) + " did not converge within " +
                         std::to_string(config.max_iters) + " iterations");
    orient(theta);
    op.deflate(rq, theta);
    result.values.push_back(rq);
    result.vectors.push_back(std::move(theta));
    result.iterations.push_back(it);
  }
  flag_degenerate(result, config.degenerate_gap);
  return result;
}

std::vector<std::vector<double>> project(const std::vector<std::string>& columns,
                                         const std::vector<std::vector<double>>& rows, const DummyLayout& layout,
                                         const EigenResult& eigen) {
  std::vector<std::size_t> col;
  for (const auto& v : layout.variables()) {
    auto it = std::find(columns.begin(), columns.end(), v.name);
    if (it == columns.end()) throw InputError("projection rows lack column '" + v.name + "'");
    col.push_back(static_cast<std::size_t>(it - columns.begin()));
  }
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<double> p(eigen.vectors.size(), 0.0);
    for (std::size_t v = 0; v < layout.variables().size(); ++v) {
      const auto& var = layout.variables()[v];
      double cell = row[col[v]];
      if (var.kind == AttributeKind::Continuous) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] += cell * eigen.vectors[j][var.offset];
      } else if (auto c = layout.coordinate(var.name, static_cast<CategoryId>(cell))) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] += eigen.vectors[j][*c];
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

FdPcaSetup fd_pca_setup(const Database& db, const VariableOrder& order, const std::vector<Feature>& features,
                        const FdCatalog& catalog, const EngineOptions& options) {
  auto validation = validate_fds(db, catalog);
  if (!validation.ok()) throw FdViolationError("functional dependencies do not hold:\n" + validation.report());
  ModelSpec spec;
  spec.kind = ModelKind::Pca;
  spec.features = features;
  auto red = reduce(spec, catalog);

  auto registers = build_registers(order, covariance_monomials(red.reduced.features).monomials);
  AggregateResult aggregates = compute_aggregates(db, order, registers, options);
  CovarianceTensor reduced(aggregates, red.reduced.features, order, db);

  // Ambient category counts of determined variables follow from the determinant's counts through R.
  auto counts = category_counts(aggregates, red.reduced.features);
  std::map<std::string, std::pair<std::string, FdMatrix>> r_of;
  for (const auto& g : red.groups) {
    std::vector<CategoryId> domain;
    for (const auto& [key, n] : aggregates.at(Monomial::variable(g.determinant))) domain.push_back(key[0]);
    for (const auto& c : g.determined) {
      auto r = build_r_matrix(db, g.determinant, c, domain);
      if (r.target_kind == AttributeKind::Categorical) {
        auto& cc = counts[c];
        for (std::size_t j = 0; j < r.cols(); ++j) cc[r.categories[r.image[j]]] += counts[g.determinant][r.domain[j]];
      }
      r_of.emplace(c, std::make_pair(g.determinant, std::move(r)));
    }
  }
  DummyLayout ambient = DummyLayout::build(features, counts, db);

  const auto& rl = reduced.layout();
  DenseMatrix u(ambient.dimension(), rl.dimension());
  for (const auto& v : ambient.variables()) {
    auto rit = r_of.find(v.name);
    if (rit == r_of.end()) {
      const auto* rv = rl.find(v.name);
      if (!rv) throw SchemaError("variable '" + v.name + "' missing from the reduced layout");
      for (std::size_t k = 0; k < v.size(); ++k) u(v.offset + k, rv->offset + k) = 1.0;
      continue;
    }
    const auto& [f, r] = rit->second;
    const auto* fv = rl.find(f);
    if (!fv) continue;  // single-category determinant: everything it determines is constant
    auto column = [&](CategoryId id) {
      return static_cast<std::size_t>(std::lower_bound(r.domain.begin(), r.domain.end(), id) - r.domain.begin());
    };
    std::size_t d = column(*fv->dropped);
    for (std::size_t k = 0; k < v.size(); ++k) {
      std::size_t row = 0;
      if (v.kind == AttributeKind::Categorical)
        row = static_cast<std::size_t>(std::lower_bound(r.categories.begin(), r.categories.end(), v.retained[k]) -
                                       r.categories.begin());
      for (std::size_t jj = 0; jj < fv->retained.size(); ++jj)
        u(v.offset + k, fv->offset + jj) = r.entry(row, column(fv->retained[jj])) - r.entry(row, d);
    }
  }
  std::size_t dropped = r_of.size();
  return FdPcaSetup{std::move(ambient), std::move(reduced), std::move(u), std::move(aggregates), dropped};
}

EigenResult fd_reduced_eigen(const SymmetricOperator& reduced, const DenseMatrix& u, std::size_t k,
                             const EigenConfig& config) {
  std::size_t n = reduced.dimension();
  if (u.cols() != n) throw InputError("stacking matrix does not match the reduced covariance");
  DenseMatrix gram = u.transpose() * u;
  std::mt19937_64 rng(config.seed);
  EigenResult result;
  std::vector<std::vector<double>> etas, lefts;  // η_p and Σ̄η_p / (η_pᵀΣ̄η_p)

  double top = 0.0;
  for (std::size_t l = 0; l < k && l < n; ++l) {
    auto eta = random_start(n, rng);
    normalize(eta);
    std::vector<double> w(n), v;
    double lambda = 0.0;
    bool converged = false;
    int it = 0;
    for (; it < config.max_iters; ++it) {
      reduced.apply(eta, w);
      v = gram.multiply(w);
      for (std::size_t p = 0; p < etas.size(); ++p) {
        double c = result.values[p] * dot(lefts[p], eta);
        for (std::size_t i = 0; i < n; ++i) v[i] -= c * etas[p][i];
      }
      double wn = dot(w, eta);
      lambda = wn > 0.0 ? dot(w, v) / wn : 0.0;
      double res = 0.0;
      for (std::size_t i = 0; i < n; ++i) res += (v[i] - lambda * eta[i]) * (v[i] - lambda * eta[i]);
      double vn = norm2(v);
      if (vn <= 1e-14 * std::max(1.0, top)) break;
      if (std::sqrt(res) <= config.tolerance * std::max(1.0, std::abs(lambda))) {
        converged = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) eta[i] = v[i] / vn;
    }
    if (!converged && it >= config.max_iters)
      throw NumericError("reduced eigenpair " + std::to_string(l + 1) + " did not converge");
    if (!converged || lambda <= 1e-12 * std::max(1.0, top)) break;
    top = std::max(top, lambda);

    reduced.apply(eta, w);
    double norm = dot(w, eta);
    std::vector<double> left(w);
    for (double& x : left) x /= norm;
    auto theta = u.multiply(w);
    for (double& x : theta) x /= lambda;
    normalize(theta);
    orient(theta);

    result.values.push_back(lambda);
    result.vectors.push_back(std::move(theta));
    result.iterations.push_back(it);
    etas.push_back(eta);
    lefts.push_back(std::move(left));
  }
  result.truncated = result.values.size() < k;
  flag_degenerate(result, config.degenerate_gap);
  return result;
}

}  // namespace factlearn
