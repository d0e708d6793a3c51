#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "factlearn/dense.hpp"
#include "factlearn/engine.hpp"
#include "factlearn/model.hpp"
#include "factlearn/registry.hpp"
#include "factlearn/relational.hpp"
#include "factlearn/sigma.hpp"

namespace factlearn {

// R_c for an FD f → c, restricted to a domain of f-categories (the columns).
// A categorical target maps each column to one row (target category); a
// continuous target maps each column to a real value (a single row).
class FdMatrix {
 public:
  std::string determinant;
  std::string target;
  AttributeKind target_kind = AttributeKind::Categorical;
  std::vector<CategoryId> domain;      // columns, ascending id
  std::vector<CategoryId> categories;  // rows of a categorical target, ascending id
  std::vector<std::size_t> image;      // column -> row (categorical)
  std::vector<double> values;          // column -> value (continuous)

  static FdMatrix identity(std::string f, std::vector<CategoryId> domain);

  std::size_t rows() const { return target_kind == AttributeKind::Categorical ? categories.size() : 1; }
  std::size_t cols() const { return domain.size(); }
  double entry(std::size_t row, std::size_t col) const;
  DenseMatrix dense() const;
  // R x for x over columns.
  std::vector<double> apply(std::span<const double> x) const;
  // Rᵀ y for y over rows.
  std::vector<double> apply_transpose(std::span<const double> y) const;
};

// Scans the relations housing f and c. With no explicit domain the columns are
// every f-category seen there.
FdMatrix build_r_matrix(const Database& db, const std::string& f, const std::string& c,
                        std::optional<std::vector<CategoryId>> domain = std::nullopt);

// A monomial U over a group's variables as a function of the determinant:
// column j of the f-domain maps to key keys[key_of[j]] with weight weight[j].
struct GroupImage {
  Monomial monomial;
  std::vector<std::string> key_variables;
  std::vector<Key> keys;
  std::vector<std::size_t> key_of;
  std::vector<double> weight;
};

GroupImage group_image(const Monomial& u, const std::string& f, const std::vector<CategoryId>& domain,
                       const std::map<std::string, FdMatrix>& r, const VariableOrder& order);

// Inverse of B = Σ_U M_Uᵀ M_U maintained by Sherman–Morrison updates from
// B = I (the U = {f} term), one rank-1 update per image key of every other U.
class BInverse {
 public:
  BInverse() = default;
  static BInverse from_images(std::size_t n, const std::vector<GroupImage>& images);

  const DenseMatrix& inverse() const { return inverse_; }
  const DenseMatrix& matrix() const { return b_; }
  std::size_t size() const { return inverse_.rows(); }
  std::size_t updates() const { return updates_; }
  std::vector<double> apply(std::span<const double> x) const { return inverse_.multiply(x); }

 private:
  DenseMatrix inverse_;
  DenseMatrix b_;
  std::size_t updates_ = 0;
};

struct FdGroup {
  std::string determinant;
  std::vector<std::string> determined;  // restricted to model features
};

struct ReducedModel {
  ModelSpec original;
  ModelSpec reduced;  // features without determined variables
  std::vector<FdGroup> groups;
  std::vector<Monomial> original_components;
  std::vector<Monomial> kept_components;
  std::vector<Monomial> dropped_components;
};

// Groups whose determinant is not a feature, or with no determined feature, are inactive.
ReducedModel reduce(const ModelSpec& model, const FdCatalog& catalog);

// Per active group: the determinant's domain, R matrices of its determined
// variables, and B inverses keyed by degree budget.
struct GroupArtifacts {
  FdGroup group;
  std::vector<CategoryId> domain;
  std::map<std::string, FdMatrix> r;
  std::map<int, BInverse> inverses;
  std::map<int, std::vector<GroupImage>> images;
};

// Reduced LR / PR²: Σ̄ over the kept components, γ blocks that contain a
// determinant are dense over its domain, and the penalty is
// Ω(γ) = Σ_b ⟨γ_b, (I_W ⊗ B_1⁻¹ ⊗ B_2⁻¹) γ_b⟩.
class ReducedLinearModel : public LinearModel {
 public:
  ReducedLinearModel(SparseSigma sigma, double lambda, std::vector<GroupArtifacts> groups,
                     const ReducedModel& reduction, const VariableOrder& order);

  void apply_penalty(std::span<const double> x, std::span<double> out) const override;
  ParameterSet export_parameters(std::span<const double> x) const override { return recover(x); }

  double omega(std::span<const double> gamma) const;
  std::vector<double> omega_gradient(std::span<const double> gamma) const;
  ParameterSet recover(std::span<const double> gamma) const;
  const std::vector<GroupArtifacts>& groups() const { return groups_; }

  struct Part {
    std::size_t group;
    int budget;
  };
  struct ReducedBlock {
    std::vector<std::size_t> dims;  // [|W keys|, N_1, (N_2)]; empty when no determinant
    std::vector<Part> parts;
    std::vector<Key> w_keys;
    std::vector<std::string> w_key_variables;
    Monomial w;
  };

 private:
  struct Prepared {
    SparseSigma sigma;
    BlockLayout layout;
    std::vector<ReducedBlock> blocks;
    std::vector<GroupArtifacts> groups;
  };
  static Prepared prepare(SparseSigma sigma, std::vector<GroupArtifacts> groups, int degree,
                          const VariableOrder& order);
  ReducedLinearModel(Prepared prepared, double lambda, const ReducedModel& reduction, const VariableOrder& order);

  std::vector<GroupArtifacts> groups_;
  std::vector<ReducedBlock> reduced_;
  std::vector<Monomial> original_components_;
  VariableOrder order_;
};

// FD penalty of a factorization machine over γ (first-order blocks for V − S,
// factor blocks for every feature). S-factor blocks only enter through Ω.
class FdFactorizationPenalty : public Penalty {
 public:
  FdFactorizationPenalty(std::vector<GroupArtifacts> groups, int rank) : groups_(std::move(groups)), rank_(rank) {}
  void bind(const FactorizationModel& model);

  double value(std::span<const double> x) const override;
  void gradient(std::span<const double> x, std::span<double> out) const override;
  ParameterSet recover(std::span<const double> x, const std::vector<Feature>& features,
                       const VariableOrder& order) const;
  const std::vector<GroupArtifacts>& groups() const { return groups_; }

 private:
  struct GroupView {
    std::size_t first_order_f;               // offset of γ_f
    std::vector<std::size_t> factor_f;       // offsets of γ_f^(l)
    std::vector<std::vector<std::size_t>> factor_c;  // [c][l] offsets of γ_c^(l)
    std::vector<const FdMatrix*> r;          // per c
  };
  struct GroupState {
    std::vector<std::vector<std::vector<double>>> u;  // [l][c] R_cᵀ γ_c^(l)
    std::vector<std::vector<double>> delta;           // [l]
    std::vector<double> beta;
    std::vector<double> z;  // B⁻¹(γ_f − β)
  };
  GroupState state(std::size_t g, std::span<const double> x) const;

  std::vector<GroupArtifacts> groups_;
  int rank_;
  std::vector<GroupView> views_;
  std::vector<bool> special_;  // entries handled by a group term
  const FactorizationModel* model_ = nullptr;
};

struct FdProblem {
  ReducedModel reduction;
  AggregateResult aggregates;
  std::unique_ptr<Objective> objective;
};

FdProblem build_fd_problem(const Database& sorted_db, const VariableOrder& order, const ModelSpec& model,
                           const FdCatalog& catalog, const EngineOptions& options = {});

// Applies dense matrices along selected modes of a row-major tensor.
void apply_modes(std::vector<double>& x, const std::vector<std::size_t>& dims,
                 const std::vector<std::pair<std::size_t, const DenseMatrix*>>& modes);

}  // namespace factlearn
