#include "factlearn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "factlearn/errors.hpp"

namespace factlearn::oracle {

std::size_t Table::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw InputError("join has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

namespace {

struct VectorHash {
  std::size_t operator()(const std::vector<double>& v) const {
    std::size_t h = v.size();
    for (double x : v) h ^= std::hash<double>{}(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

Table join_one(const Table& left, const Relation& right, std::size_t max_rows) {
  std::vector<std::pair<std::size_t, std::size_t>> shared;  // (left col, right col)
  std::vector<std::size_t> extra;
  for (std::size_t c = 0; c < right.arity(); ++c) {
    const auto& name = right.attributes()[c].name;
    auto it = std::find(left.columns.begin(), left.columns.end(), name);
    if (it != left.columns.end())
      shared.emplace_back(static_cast<std::size_t>(it - left.columns.begin()), c);
    else
      extra.push_back(c);
  }
  Table out;
  out.columns = left.columns;
  out.kinds = left.kinds;
  for (auto c : extra) {
    out.columns.push_back(right.attributes()[c].name);
    out.kinds.push_back(right.attributes()[c].kind);
  }
  std::unordered_map<std::vector<double>, std::vector<std::size_t>, VectorHash> buckets;
  for (std::size_t r = 0; r < right.size(); ++r) {
    std::vector<double> key;
    for (const auto& s : shared) key.push_back(right.at(r, s.second));
    buckets[key].push_back(r);
  }
  for (const auto& row : left.rows) {
    std::vector<double> key;
    for (const auto& s : shared) key.push_back(row[s.first]);
    auto it = buckets.find(key);
    if (it == buckets.end()) continue;
    for (auto r : it->second) {
      auto joined = row;
      for (auto c : extra) joined.push_back(right.at(r, c));
      out.rows.push_back(std::move(joined));
      if (out.rows.size() > max_rows)
        throw InputError("materialized join exceeds " + std::to_string(max_rows) + " rows");
    }
  }
  return out;
}

}  // namespace

Table materialize_join(const Database& db, std::size_t max_rows) {
  const auto& rels = db.relations();
  Table t;
  if (rels.empty()) return t;
  t.rows.emplace_back();  // the empty tuple joins with anything
  std::vector<bool> used(rels.size(), false);
  for (std::size_t step = 0; step < rels.size(); ++step) {
    // Prefer a relation sharing a column with what has been joined so far.
    std::size_t pick = rels.size();
    for (std::size_t i = 0; i < rels.size() && pick == rels.size(); ++i) {
      if (used[i]) continue;
      for (const auto& a : rels[i].attributes())
        if (std::find(t.columns.begin(), t.columns.end(), a.name) != t.columns.end()) pick = i;
    }
    if (pick == rels.size())
      for (std::size_t i = 0; i < rels.size(); ++i)
        if (!used[i]) {
          pick = i;
          break;
        }
    used[pick] = true;
    t = join_one(t, rels[pick], max_rows);
  }
  return t;
}

std::string Term::name() const {
  if (powers.empty()) return "1";
  std::string s;
  for (const auto& [v, e] : powers) {
    if (!s.empty()) s += "*";
    s += v;
    if (e > 1) s += "^" + std::to_string(e);
  }
  return s;
}

std::vector<Term> model_terms(Model model, const std::vector<Attribute>& features) {
  std::vector<Term> out;
  out.push_back(Term{});
  for (const auto& f : features) out.push_back(Term{{{f.name, 1}}});
  if (model == Model::Linear) return out;
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i; j < features.size(); ++j) {
      if (i == j) {
        if (model == Model::Polynomial2 && features[i].kind == AttributeKind::Continuous)
          out.push_back(Term{{{features[i].name, 2}}});
        continue;
      }
      out.push_back(Term{{{features[i].name, 1}, {features[j].name, 1}}});
    }
  return out;
}

namespace {

Assignment assignment_of(const Table& t, std::size_t row, const Term& term) {
  Assignment a;
  for (const auto& [v, e] : term.powers) {
    std::size_t c = t.column(v);
    if (t.kinds[c] == AttributeKind::Categorical) a[v] = static_cast<CategoryId>(t.rows[row][c]);
  }
  return a;
}

double continuous_part(const Table& t, std::size_t row, const Term& term) {
  double x = 1.0;
  for (const auto& [v, e] : term.powers) {
    std::size_t c = t.column(v);
    if (t.kinds[c] == AttributeKind::Continuous) x *= std::pow(t.rows[row][c], e);
  }
  return x;
}

}  // namespace

Encoding::Encoding(const Table& table, std::vector<Term> terms) : terms_(std::move(terms)) {
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    std::map<Assignment, bool> seen;
    for (std::size_t r = 0; r < table.size(); ++r) seen[assignment_of(table, r, terms_[k])] = true;
    for (const auto& [a, unused] : seen) {
      index_[{terms_[k].name(), a}] = coords_.size();
      coords_.push_back({k, a});
    }
  }
}

std::optional<std::size_t> Encoding::find(const std::string& term, const Assignment& assignment) const {
  auto it = index_.find({term, assignment});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> Encoding::encode(const Table& table, std::size_t row) const {
  std::vector<double> h(coords_.size(), 0.0);
  for (const auto& term : terms_) {
    auto c = find(term.name(), assignment_of(table, row, term));
    if (c) h[*c] = continuous_part(table, row, term);
  }
  return h;
}

DenseProblem dense_sigma(const Table& table, const std::vector<Term>& terms, const std::optional<std::string>& label) {
  DenseProblem p{Encoding(table, terms), {}, {}, 0.0, static_cast<double>(table.size())};
  std::size_t n = p.encoding.dimension();
  p.sigma = DenseMatrix(n, n);
  p.c.assign(n, 0.0);
  if (table.size() == 0) return p;
  std::optional<std::size_t> yc;
  if (label) yc = table.column(*label);
  for (std::size_t r = 0; r < table.size(); ++r) {
    auto h = p.encoding.encode(table, r);
    for (std::size_t i = 0; i < n; ++i) {
      if (h[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) p.sigma(i, j) += h[i] * h[j];
    }
    if (yc) {
      double y = table.rows[r][*yc];
      for (std::size_t i = 0; i < n; ++i) p.c[i] += y * h[i];
      p.s_y += y * y;
    }
  }
  for (double& v : p.sigma.data()) v /= p.count;
  for (double& v : p.c) v /= p.count;
  p.s_y /= p.count;
  return p;
}

std::vector<double> solve(DenseMatrix a, std::vector<double> b) {
  std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (std::abs(a(piv, k)) < 1e-300) throw NumericError("singular linear system");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

std::vector<double> ridge_solve(const DenseMatrix& sigma, std::span<const double> c, double lambda) {
  DenseMatrix a = sigma;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  return solve(std::move(a), std::vector<double>(c.begin(), c.end()));
}

DenseMatrix dense_inverse(const DenseMatrix& a) {
  std::size_t n = a.rows();
  DenseMatrix inv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    auto col = solve(a, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

double quadratic_objective(const DenseProblem& p, std::span<const double> theta, double lambda) {
  auto st = p.sigma.multiply(theta);
  return 0.5 * dot(theta, st) - dot(p.c, theta) + 0.5 * p.s_y + 0.5 * lambda * dot(theta, theta);
}

double mean_square_loss(const Table& table, const std::string& label,
                        const std::function<double(std::size_t row)>& predict) {
  if (table.size() == 0) return 0.0;
  std::size_t yc = table.column(label);
  double s = 0.0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    double e = predict(r) - table.rows[r][yc];
    s += e * e;
  }
  return s / (2.0 * static_cast<double>(table.size()));
}

double linear_predict(const Table& table, std::size_t row, const std::vector<Term>& terms, const Lookup& theta) {
  double s = 0.0;
  for (const auto& term : terms)
    s += theta(term.name(), assignment_of(table, row, term)) * continuous_part(table, row, term);
  return s;
}

double fama_predict(const Table& table, std::size_t row, const std::vector<Attribute>& features, int rank,
                    const Lookup& theta) {
  double s = theta("1", {});
  std::vector<Assignment> assign;
  std::vector<double> x;
  for (const auto& f : features) {
    Term t{{{f.name, 1}}};
    assign.push_back(assignment_of(table, row, t));
    x.push_back(continuous_part(table, row, t));
    s += theta(f.name, assign.back()) * x.back();
  }
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j)
      for (int l = 0; l < rank; ++l) {
        auto tag = "#" + std::to_string(l + 1);
        s += theta(features[i].name + tag, assign[i]) * theta(features[j].name + tag, assign[j]) * x[i] * x[j];
      }
  return s;
}

Eigen dense_eigen(const DenseMatrix& input, double tolerance) {
  std::size_t n = input.rows();
  DenseMatrix a = input;
  DenseMatrix v = DenseMatrix::identity(n);
  auto off = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < 100 && off() > tolerance; ++sweep) {
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  if (off() > tolerance) throw NumericError("Jacobi rotations did not converge");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  Eigen e;
  for (auto i : idx) {
    e.values.push_back(a(i, i));
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v(k, i);
    e.vectors.push_back(std::move(col));
  }
  return e;
}

Eigen power_iteration(const DenseMatrix& input, std::size_t k, double tolerance, int max_iters) {
  DenseMatrix a = input;
  std::size_t n = a.rows();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen e;
  for (std::size_t l = 0; l < k; ++l) {
    std::vector<double> x(n);
    for (double& v : x) v = dist(rng);
    double nx = norm2(x);
    for (double& v : x) v /= nx;
    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
      auto y = a.multiply(x);
      lambda = dot(x, y);
      double res = 0.0;
      for (std::size_t i = 0; i < n; ++i) res += (y[i] - lambda * x[i]) * (y[i] - lambda * x[i]);
      if (std::sqrt(res) <= tolerance * std::max(1.0, std::abs(lambda))) break;
      double ny = norm2(y);
      if (ny == 0.0) break;
      for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a(i, j) -= lambda * x[i] * x[j];
    e.values.push_back(lambda);
    e.vectors.push_back(std::move(x));
  }
  return e;
}

Covariance dense_covariance(const Table& table, const std::vector<Attribute>& features, const Database& db) {
  Covariance cov;
  struct Source {
    std::size_t column;
    std::optional<CategoryId> category;
  };
  std::vector<Source> sources;
  for (const auto& f : features) {
    std::size_t col = table.column(f.name);
    if (f.kind == AttributeKind::Continuous) {
      cov.coordinates.push_back({f.name, std::nullopt});
      sources.push_back({col, std::nullopt});
      continue;
    }
    std::map<CategoryId, std::size_t> counts;
    for (const auto& row : table.rows) ++counts[static_cast<CategoryId>(row[col])];
    if (counts.size() <= 1) continue;
    CategoryId drop = counts.begin()->first;
    for (const auto& [id, n] : counts)
      if (n < counts[drop] || (n == counts[drop] && db.label(f.name, id) < db.label(f.name, drop))) drop = id;
    for (const auto& [id, n] : counts) {
      if (id == drop) continue;
      cov.coordinates.push_back({f.name, id});
      sources.push_back({col, id});
    }
  }
  std::size_t d = sources.size();
  for (const auto& row : table.rows) {
    std::vector<double> x(d);
    for (std::size_t k = 0; k < d; ++k) {
      double cell = row[sources[k].column];
      x[k] = sources[k].category ? (static_cast<CategoryId>(cell) == *sources[k].category ? 1.0 : 0.0) : cell;
    }
    cov.rows.push_back(std::move(x));
  }
  double n = static_cast<double>(table.size());
  cov.mean.assign(d, 0.0);
  cov.matrix = DenseMatrix(d, d);
  if (n == 0) return cov;
  for (const auto& x : cov.rows)
    for (std::size_t k = 0; k < d; ++k) cov.mean[k] += x[k] / n;
  for (const auto& x : cov.rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov.matrix(i, j) += (x[i] - cov.mean[i]) * (x[j] - cov.mean[j]) / n;
  return cov;
}

}  // namespace factlearn::oracle
