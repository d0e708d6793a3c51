#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "factlearn/dense.hpp"
#include "factlearn/relational.hpp"

// Brute-force reference implementations. Nothing here uses the factorized
// engine or the Σ builder; everything works on the materialized join.
namespace factlearn::oracle {

struct Table {
  std::vector<std::string> columns;
  std::vector<AttributeKind> kinds;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
  std::size_t size() const { return rows.size(); }
};

// Natural join of every relation (hash join). Throws when it exceeds max_rows.
Table materialize_join(const Database& db, std::size_t max_rows = 10000);

using Assignment = std::map<std::string, CategoryId>;

struct Term {
  std::map<std::string, int> powers;
  // "1", "A", "A^2*B" (variables by name).
  std::string name() const;
};

enum class Model { Linear, Polynomial2, Factorization };

// Constant, singletons, then degree-2 terms (i <= j); squares only for
// continuous features of PR², none for FaMa.
std::vector<Term> model_terms(Model model, const std::vector<Attribute>& features);

struct Coordinate {
  std::size_t term = 0;
  Assignment assignment;  // categorical variables of the term
};

// One-hot encoding: one coordinate per term and categorical assignment seen in the table.
class Encoding {
 public:
  Encoding(const Table& table, std::vector<Term> terms);

  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<Coordinate>& coordinates() const { return coords_; }
  std::size_t dimension() const { return coords_.size(); }
  std::optional<std::size_t> find(const std::string& term, const Assignment& assignment) const;
  std::vector<double> encode(const Table& table, std::size_t row) const;

 private:
  std::vector<Term> terms_;
  std::vector<Coordinate> coords_;
  std::map<std::pair<std::string, Assignment>, std::size_t> index_;
};

struct DenseProblem {
  Encoding encoding;
  DenseMatrix sigma;
  std::vector<double> c;
  double s_y = 0.0;
  double count = 0.0;
};

DenseProblem dense_sigma(const Table& table, const std::vector<Term>& terms, const std::optional<std::string>& label);

// Gaussian elimination with partial pivoting on (Σ + λI)θ = c.
std::vector<double> ridge_solve(const DenseMatrix& sigma, std::span<const double> c, double lambda);
std::vector<double> solve(DenseMatrix a, std::vector<double> b);
DenseMatrix dense_inverse(const DenseMatrix& a);

// ½θᵀΣθ − ⟨c, θ⟩ + s_Y/2 + (λ/2)‖θ‖².
double quadratic_objective(const DenseProblem& p, std::span<const double> theta, double lambda);

// 1/(2|D|) Σ (prediction − y)² over the rows.
double mean_square_loss(const Table& table, const std::string& label,
                        const std::function<double(std::size_t row)>& predict);

// Parameter lookup by block name ("A", "A#1", ...; factors numbered from 1) and categorical assignment.
using Lookup = std::function<double(const std::string& block, const Assignment& assignment)>;

double linear_predict(const Table& table, std::size_t row, const std::vector<Term>& terms, const Lookup& theta);
// ⟨w, (1, x)⟩ + Σ_{i<j} Σ_l v_i^(l) v_j^(l) x_i x_j.
double fama_predict(const Table& table, std::size_t row, const std::vector<Attribute>& features, int rank,
                    const Lookup& theta);

struct Eigen {
  std::vector<double> values;                // descending
  std::vector<std::vector<double>> vectors;  // unit norm
};

// Cyclic Jacobi rotations until the off-diagonal norm is at most tolerance.
Eigen dense_eigen(const DenseMatrix& a, double tolerance = 1e-12);

// Normalized power iteration with Hotelling deflation.
Eigen power_iteration(const DenseMatrix& a, std::size_t k, double tolerance = 1e-13, int max_iters = 1000000);

struct DummyCoordinate {
  std::string variable;
  std::optional<CategoryId> category;
};

struct Covariance {
  std::vector<DummyCoordinate> coordinates;
  DenseMatrix matrix;
  std::vector<double> mean;
  std::vector<std::vector<double>> rows;  // dummy-encoded rows (uncentered)
};

// Dummy encoding drops the lowest-count category (ties: smallest label).
Covariance dense_covariance(const Table& table, const std::vector<Attribute>& features, const Database& db);

}  // namespace factlearn::oracle
