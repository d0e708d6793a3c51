#include <gtest/gtest.h>

#include <cmath>

#include "factlearn/model.hpp"
#include "factlearn/oracle.hpp"
#include "support.hpp"

using namespace factlearn;
using namespace testsupport;

namespace {

Workspace bias_only() {
  return Workspace::from(make_db({{"D", {cont("y")}, {{"1"}, {"1"}}}}), node("y"));
}

std::vector<double> random_vector(Generator& gen, std::size_t n, double scale = 1.0) {
  std::vector<double> x(n);
  for (double& v : x) v = gen.real(-scale, scale);
  return x;
}

double row_loss(const Instance& inst, const ModelSpec& model, const Objective& obj, std::span<const double> x) {
  auto table = oracle::materialize_join(inst.workspace().db);
  auto params = obj.export_parameters(x);
  auto lookup = lookup_of(params);
  auto feats = attributes_of(model.features);
  auto terms = oracle::model_terms(oracle_model(model.kind), feats);
  double loss = oracle::mean_square_loss(table, *model.label, [&](std::size_t r) {
    return model.kind == ModelKind::Factorization ? oracle::fama_predict(table, r, feats, model.rank, lookup)
                                                  : oracle::linear_predict(table, r, terms, lookup);
  });
  return loss + 0.5 * model.lambda * dot(x, x);
}

}  // namespace

TEST(PointEvaluate, BiasOnly) {
  ModelSpec m;
  m.label = "y";
  LinearModel lm(sigma_for(bias_only(), m), 0.0);
  ASSERT_EQ(lm.dimension(), 1u);
  EXPECT_EQ(lm.value(std::vector<double>{1.0}), 0.0);
  EXPECT_EQ(lm.value(std::vector<double>{0.0}), 0.5);
  EXPECT_EQ(lm.gradient(std::vector<double>{1.0})[0], 0.0);
  EXPECT_EQ(lm.gradient(std::vector<double>{0.0})[0], -1.0);
}

TEST(GEvaluate, LinearIsIdentity) {
  Generator gen(5);
  auto inst = gen.random_schema();
  auto model = inst.model(ModelKind::Linear);
  LinearModel lm(sigma_for(inst.workspace(), model), 0.1);
  auto x = random_vector(gen, lm.dimension());
  auto p = lm.export_parameters(x);
  EXPECT_EQ(p.values, x);
}

TEST(GEvaluate, FactorizationContinuousPair) {
  auto db = make_db({{"D", {cont("a"), cont("b"), cont("y")}, {{"1", "2", "3"}}}});
  auto ws = Workspace::from(db, node("a", {node("b", {node("y")})}));
  ModelSpec m;
  m.kind = ModelKind::Factorization;
  m.rank = 1;
  m.features = {{"a", AttributeKind::Continuous}, {"b", AttributeKind::Continuous}};
  m.label = "y";
  FactorizationModel fm(sigma_for(ws, m), 1, 0.0, m.features);
  std::vector<double> x(fm.dimension(), 0.0);
  x[fm.layout().block(fm.factor_block("a", 1)).offset] = 2.0;
  x[fm.layout().block(fm.factor_block("b", 1)).offset] = 3.0;
  auto g = fm.g_evaluate(x);
  EXPECT_EQ(g[fm.h_layout().block(*fm.h_layout().find_block("a*b")).offset], 6.0);
}

TEST(GEvaluate, FactorizationCategoricalPairMatchesOuterProducts) {
  auto db = make_db({{"D", {cat("u"), cat("v"), cont("y")},
                      {{"u0", "v0", "1"}, {"u0", "v1", "2"}, {"u1", "v0", "3"}, {"u1", "v1", "4"}}}});
  auto ws = Workspace::from(db, node("u", {node("v", {node("y")})}));
  ModelSpec m;
  m.kind = ModelKind::Factorization;
  m.rank = 2;
  m.features = {{"u", AttributeKind::Categorical}, {"v", AttributeKind::Categorical}};
  m.label = "y";
  FactorizationModel fm(sigma_for(ws, m), 2, 0.0, m.features);
  Generator gen(9);
  auto x = random_vector(gen, fm.dimension());
  auto g = fm.g_evaluate(x);
  const auto& hb = fm.h_layout().block(*fm.h_layout().find_block("u*v"));
  ASSERT_EQ(hb.size(), 4u);
  for (CategoryId a = 0; a < 2; ++a)
    for (CategoryId b = 0; b < 2; ++b) {
      double expect = 0.0;
      for (int l = 1; l <= 2; ++l) {
        const auto& ub = fm.layout().block(fm.factor_block("u", l));
        const auto& vb = fm.layout().block(fm.factor_block("v", l));
        expect += x[ub.offset + *ub.find({a})] * x[vb.offset + *vb.find({b})];
      }
      EXPECT_DOUBLE_EQ(g[hb.offset + *hb.find({a, b})], expect);
    }
}

TEST(PointEvaluate, MatchesRowLoop) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    Generator gen(seed);
    auto inst = gen.random_schema();
    for (auto kind : {ModelKind::Linear, ModelKind::Polynomial2, ModelKind::Factorization}) {
      auto model = inst.model(kind, 0.3, 2);
      auto obj = make_objective(model, sigma_for(inst.workspace(), model));
      auto x = random_vector(gen, obj->dimension(), 0.5);
      double expect = row_loss(inst, model, *obj, x);
      EXPECT_NEAR(obj->value(x), expect, 1e-10 * std::max(1.0, std::abs(expect)))
          << "seed " << seed << " kind " << to_string(kind);
    }
  }
}

TEST(Gradient, FactorizationMatchesFiniteDifferences) {
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    Generator gen(seed);
    auto inst = gen.random_schema();
    auto model = inst.model(ModelKind::Factorization, 0.2, 2);
    auto obj = make_objective(model, sigma_for(inst.workspace(), model));
    auto x = random_vector(gen, obj->dimension(), 0.5);
    auto g = obj->gradient(x);
    const double h = 1e-5;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fd = (obj->value(xp) - obj->value(xm)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "seed " << seed << " coordinate " << i;
    }
  }
}

TEST(Gradient, LinearAtRidgeSolutionIsZero) {
  Generator gen(50);
  auto inst = gen.random_schema();
  auto model = inst.model(ModelKind::Linear, 0.5);
  LinearModel lm(sigma_for(inst.workspace(), model), 0.5);
  auto dense = lm.kernel().dense();
  auto theta = oracle::ridge_solve(dense, lm.c(), 0.5);
  EXPECT_LE(norm_inf(lm.gradient(theta)), 1e-10);
}

TEST(FastPaths, ZeroDirection) {
  Generator gen(51);
  auto inst = gen.random_schema();
  auto model = inst.model(ModelKind::Linear);
  LinearModel lm(sigma_for(inst.workspace(), model), 0.1);
  auto theta = random_vector(gen, lm.dimension());
  std::vector<double> d(lm.dimension(), 0.0);
  auto step = prepare_linear_step(lm, theta, d);
  EXPECT_TRUE(armijo_inequality(step, 0.7));
  EXPECT_EQ(norm_inf(next_gradient(step, 0.7)), 0.0);
}

TEST(FastPaths, AgreeWithRecomputation) {
  Generator gen(52);
  auto inst = gen.random_schema();
  for (auto kind : {ModelKind::Linear, ModelKind::Polynomial2}) {
    auto base = inst.model(kind);
    auto sigma = sigma_for(inst.workspace(), base);
    for (int draw = 0; draw < 100; ++draw) {
      double lambda = gen.real(0.0, 2.0);
      LinearModel lm(sigma, lambda);
      auto theta = random_vector(gen, lm.dimension());
      auto d = lm.gradient(theta);
      double alpha = std::exp(gen.real(-6.0, 2.0));
      auto step = prepare_linear_step(lm, theta, d);
      std::vector<double> next(theta.size());
      for (std::size_t i = 0; i < theta.size(); ++i) next[i] = theta[i] - alpha * d[i];
      bool direct = lm.value(next) >= lm.value(theta) - 0.5 * alpha * dot(d, d);
      EXPECT_EQ(armijo_inequality(step, alpha), direct);
      auto g_fast = next_gradient(step, alpha);
      auto g_direct = lm.gradient(next);
      for (std::size_t i = 0; i < g_fast.size(); ++i) EXPECT_NEAR(g_fast[i], g_direct[i], 1e-12);
      EXPECT_NEAR(lm.value(theta) + objective_change(step, alpha), lm.value(next), 1e-10);
    }
  }
}
