#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "factlearn/sigma.hpp"

namespace factlearn {

// Parameter values together with the layout that names them.
struct ParameterSet {
  BlockLayout layout;
  std::vector<double> values;

  double value(const std::string& block, const Key& key) const;
};

// Copies values of `from` into `to` by (block name, key); missing entries are 0.
// The squared norm of entries of `from` absent in `to` is returned through dropped_sq.
std::vector<double> align(const ParameterSet& from, const BlockLayout& to, double* dropped_sq = nullptr);

class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> x) const = 0;
  virtual void gradient(std::span<const double> x, std::span<double> out) const = 0;
  virtual std::vector<double> initial_point(std::uint64_t seed) const;
  // Parameters in the original (unreduced) model's terms, labelled.
  virtual ParameterSet export_parameters(std::span<const double> x) const = 0;
  virtual const class QuadraticObjective* as_quadratic() const { return nullptr; }

  std::vector<double> gradient(std::span<const double> x) const {
    std::vector<double> g(dimension());
    gradient(x, g);
    return g;
  }
};

// J(x) = ½ xᵀΣx − ⟨c, x⟩ + s/2 + (λ/2) xᵀPx with P symmetric positive definite
// (P = I for unreduced linear models).
class QuadraticObjective : public Objective {
 public:
  using Objective::gradient;
  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> out) const override;
  const QuadraticObjective* as_quadratic() const override { return this; }

  void apply_sigma(std::span<const double> x, std::span<double> out) const {
    ++sigma_applications_;
    do_apply_sigma(x, out);
  }
  virtual void apply_penalty(std::span<const double> x, std::span<double> out) const;
  virtual const std::vector<double>& c() const = 0;
  virtual double s() const = 0;
  virtual double lambda() const = 0;

  std::uint64_t sigma_applications() const { return sigma_applications_; }

 protected:
  virtual void do_apply_sigma(std::span<const double> x, std::span<double> out) const = 0;

 private:
  mutable std::uint64_t sigma_applications_ = 0;
};

// LR and PR²: g is the identity, parameters live in the h-component layout.
class LinearModel : public QuadraticObjective {
 public:
  LinearModel(SparseSigma sigma, double lambda);
  LinearModel(SparseSigma sigma, BlockLayout layout, double lambda);

  std::size_t dimension() const override { return layout_.dimension(); }
  ParameterSet export_parameters(std::span<const double> x) const override;
  const std::vector<double>& c() const override { return kernel_.correlation(); }
  double s() const override { return kernel_.label_moment(); }
  double lambda() const override { return lambda_; }

  const SparseSigma& sigma() const { return sigma_; }
  const BlockLayout& layout() const { return layout_; }
  const SigmaKernel& kernel() const { return kernel_; }

 protected:
  void do_apply_sigma(std::span<const double> x, std::span<double> out) const override {
    kernel_.multiply(x, out);
  }

 private:
  SparseSigma sigma_;
  BlockLayout layout_;
  SigmaKernel kernel_;
  double lambda_;
};

// Penalty term Ω(θ) of a model; the objective adds (λ/2) Ω.
class Penalty {
 public:
  virtual ~Penalty() = default;
  virtual double value(std::span<const double> x) const = 0;
  // ∂Ω/∂x
  virtual void gradient(std::span<const double> x, std::span<double> out) const = 0;
};

class SquaredNorm : public Penalty {
 public:
  double value(std::span<const double> x) const override { return dot(x, x); }
  void gradient(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i];
  }
};

// Degree-2 rank-r factorization machine. Parameters: first-order blocks for the
// constant and every singleton component, then factor blocks "v#l" for
// l = 1..r. Pair components of Σ are evaluated from the factors (CP form).
class FactorizationModel : public Objective {
 public:
  using Objective::gradient;
  // factor_keys: key set per factor variable (defaults to the singleton's
  // observed keys); factor variables beyond Σ's features only enter the penalty.
  FactorizationModel(SparseSigma sigma, int rank, double lambda, std::vector<Feature> factor_features = {},
                     std::map<std::string, std::vector<Key>> factor_keys = {},
                     std::shared_ptr<const Penalty> penalty = nullptr);

  std::size_t dimension() const override { return layout_.dimension(); }
  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> out) const override;
  std::vector<double> initial_point(std::uint64_t seed) const override;
  ParameterSet export_parameters(std::span<const double> x) const override;

  // g(θ) evaluated on the observed keys of every h-component.
  std::vector<double> g_evaluate(std::span<const double> x) const;

  const BlockLayout& layout() const { return layout_; }
  const BlockLayout& h_layout() const { return h_layout_; }
  const SparseSigma& sigma() const { return sigma_; }
  int rank() const { return rank_; }
  std::size_t factor_block(const std::string& variable, int l) const;
  std::size_t first_order_block(const std::string& component) const;
  void set_exporter(std::function<ParameterSet(std::span<const double>)> exporter) { exporter_ = std::move(exporter); }

 private:
  struct PairRow {
    std::size_t h_row;
    std::size_t u_row;  // within the factor block of u
    std::size_t v_row;
  };
  struct PairComponent {
    std::size_t u_var;  // index into factor_features_
    std::size_t v_var;
    std::vector<PairRow> rows;
  };

  SparseSigma sigma_;
  int rank_;
  double lambda_;
  std::vector<Feature> factor_features_;
  BlockLayout h_layout_;
  BlockLayout layout_;
  SigmaKernel kernel_;
  std::vector<std::size_t> first_order_of_h_;  // h block -> layout block, or npos for pairs
  std::vector<PairComponent> pair_components_;
  std::vector<std::vector<std::size_t>> factor_blocks_;  // [var][l]
  std::shared_ptr<const Penalty> penalty_;
  std::function<ParameterSet(std::span<const double>)> exporter_;
};

std::unique_ptr<Objective> make_objective(const ModelSpec& model, SparseSigma sigma);

// Quantities for one linear line search (one Σd product).
struct LinearStep {
  std::vector<double> d;
  std::vector<double> sigma_d;
  std::vector<double> penalty_d;
  double theta_sigma_d = 0.0;
  double d_sigma_d = 0.0;
  double c_d = 0.0;
  double theta_penalty_d = 0.0;
  double d_penalty_d = 0.0;
  double d_norm2 = 0.0;
  double lambda = 0.0;
};

LinearStep prepare_linear_step(const QuadraticObjective& objective, std::span<const double> theta,
                               std::span<const double> d);
// True when J(θ − αd) ≥ J(θ) − (α/2)‖d‖², i.e. the step must be shortened.
bool armijo_inequality(const LinearStep& step, double alpha);
// J(θ − αd) − J(θ)
double objective_change(const LinearStep& step, double alpha);
// ∇J(θ − αd) = d − α(Σd + λPd)
std::vector<double> next_gradient(const LinearStep& step, double alpha);

}  // namespace factlearn
