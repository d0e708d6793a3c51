#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "factlearn/dense.hpp"
#include "factlearn/engine.hpp"
#include "factlearn/fd.hpp"
#include "factlearn/registry.hpp"
#include "factlearn/relational.hpp"

namespace factlearn {

class SymmetricOperator {
 public:
  virtual ~SymmetricOperator() = default;
  virtual std::size_t dimension() const = 0;
  virtual void apply(std::span<const double> x, std::span<double> out) const = 0;
  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(dimension());
    apply(x, out);
    return out;
  }
  DenseMatrix dense() const;
};

class DenseOperator : public SymmetricOperator {
 public:
  explicit DenseOperator(DenseMatrix m) : m_(std::move(m)) {}
  std::size_t dimension() const override { return m_.rows(); }
  void apply(std::span<const double> x, std::span<double> out) const override;

 private:
  DenseMatrix m_;
};

// Σ − Σ_l λ_l θ_l θ_lᵀ, applied lazily.
class DeflatedOperator : public SymmetricOperator {
 public:
  explicit DeflatedOperator(const SymmetricOperator& base) : base_(base) {}
  void deflate(double lambda, std::vector<double> theta) { terms_.emplace_back(lambda, std::move(theta)); }
  std::size_t dimension() const override { return base_.dimension(); }
  void apply(std::span<const double> x, std::span<double> out) const override;

 private:
  const SymmetricOperator& base_;
  std::vector<std::pair<double, std::vector<double>>> terms_;
};

// Coordinates of the dummy encoding: one per continuous variable, one per
// retained category of a categorical variable (the lowest-count one is dropped).
class DummyLayout {
 public:
  struct Variable {
    std::string name;
    AttributeKind kind = AttributeKind::Continuous;
    std::optional<CategoryId> dropped;
    std::vector<CategoryId> retained;  // ascending id
    std::size_t offset = 0;
    std::size_t size() const { return kind == AttributeKind::Continuous ? 1 : retained.size(); }
  };

  // counts: per categorical feature, category -> number of join rows.
  static DummyLayout build(const std::vector<Feature>& features,
                           const std::map<std::string, std::map<CategoryId, double>>& counts, const Database& db);

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<std::string>& removed() const { return removed_; }
  std::size_t dimension() const { return dimension_; }
  const Variable* find(const std::string& name) const;
  // Coordinate of (variable, category); nullopt for dropped or unseen categories.
  std::optional<std::size_t> coordinate(const std::string& name, CategoryId category) const;

 private:
  std::vector<Variable> variables_;
  std::vector<std::string> removed_;
  std::size_t dimension_ = 0;
};

// Centered covariance Σ₁ = raw/|D| − μμᵀ over the dummy encoding.
class CovarianceTensor : public SymmetricOperator {
 public:
  CovarianceTensor(const AggregateResult& aggregates, const std::vector<Feature>& features, const VariableOrder& order,
                   const Database& db);

  std::size_t dimension() const override { return layout_.dimension(); }
  void apply(std::span<const double> x, std::span<double> out) const override;
  const DummyLayout& layout() const { return layout_; }
  const std::vector<double>& mean() const { return mean_; }

 private:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };
  DummyLayout layout_;
  std::vector<double> mean_;
  std::vector<Triplet> diagonal_;
  std::vector<Triplet> off_diagonal_;
};

CovarianceTensor centered_covariance(const AggregateResult& aggregates, const std::vector<Feature>& features,
                                     const VariableOrder& order, const Database& db);

// Degree-1 monomials whose aggregates the covariance needs.
MonomialSet covariance_monomials(const std::vector<Feature>& features);

struct EigenConfig {
  int max_iters = 200000;
  double tolerance = 1e-11;
  std::uint64_t seed = 7;
  double degenerate_gap = 1e-8;
};

struct EigenResult {
  std::vector<double> values;                // descending
  std::vector<std::vector<double>> vectors;  // unit norm, first nonzero coordinate positive
  std::vector<bool> degenerate;              // gap to a neighbouring eigenvalue below the threshold
  std::vector<int> iterations;
  bool truncated = false;  // fewer than K positive eigenvalues exist
};

// Alternating optimization of J(θ, λ) = θᵀΣθ − λ(‖θ‖² − 1) per eigenpair,
// followed by deflation.
EigenResult top_k_eigen(const SymmetricOperator& sigma, std::size_t k, const EigenConfig& config = {});

// Projection of rows (category ids for categorical columns) onto eigenvectors.
std::vector<std::vector<double>> project(const std::vector<std::string>& columns,
                                         const std::vector<std::vector<double>>& rows, const DummyLayout& layout,
                                         const EigenResult& eigen);

// FD-reduced PCA: the reduced covariance over V − S, the stacking matrix U
// (ambient dummy coordinates × reduced coordinates) and the ambient layout.
struct FdPcaSetup {
  DummyLayout ambient;
  CovarianceTensor reduced;
  DenseMatrix u;
  AggregateResult aggregates;
  std::size_t dropped_variables = 0;
};

FdPcaSetup fd_pca_setup(const Database& sorted_db, const VariableOrder& order, const std::vector<Feature>& features,
                        const FdCatalog& catalog, const EngineOptions& options = {});

// Eigenpairs of UᵀU Σ̄₁ by power iteration with deflation; vectors are
// recovered in the ambient layout as U Σ̄₁ η / λ.
EigenResult fd_reduced_eigen(const SymmetricOperator& reduced, const DenseMatrix& u, std::size_t k,
                             const EigenConfig& config = {});

}  // namespace factlearn
