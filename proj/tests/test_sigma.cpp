#include <gtest/gtest.h>

#include <cmath>

#include "factlearn/oracle.hpp"
#include "factlearn/sigma.hpp"
#include "support.hpp"

using namespace factlearn;
using namespace testsupport;

namespace {

struct Built {
  Workspace ws;
  ModelSpec model;
  AggregateResult aggregates;
  SparseSigma sigma;
};

Built build(const Workspace& ws, const ModelSpec& model) {
  auto aggs = compute_aggregates(ws.db, ws.order, build_registers(ws.order, enumerate_monomials(model).monomials));
  auto sigma = assemble(bind_components(component_monomials(model), ws.order), aggs, model.label, ws.order);
  return {ws, model, std::move(aggs), std::move(sigma)};
}

std::size_t component(const SparseSigma& s, const std::string& name) {
  for (const auto& c : s.components())
    if (c.monomial.to_string() == name) return c.index;
  throw std::runtime_error("no component " + name);
}

Workspace store_city() {
  auto db = make_db({{"Sales", {cat("store"), cat("city"), cont("y")}, {{"s1", "c1", "1"}, {"s2", "c2", "3"}}}});
  return Workspace::from(db, node("store", {node("city", {node("y")})}));
}

ModelSpec categorical_pr2() {
  ModelSpec m;
  m.kind = ModelKind::Polynomial2;
  m.features = {{"store", AttributeKind::Categorical}, {"city", AttributeKind::Categorical}};
  m.label = "y";
  return m;
}

}  // namespace

TEST(Assemble, StoreCityGroupBy) {
  auto b = build(store_city(), categorical_pr2());
  std::size_t sc = component(b.sigma, "city*store"), c = component(b.sigma, "city");
  const auto& m = b.sigma.sigma(sc, c);
  EXPECT_EQ(m.monomial.to_string(), "city*store");
  EXPECT_EQ(m.key_variables, (std::vector<std::string>{"store", "city"}));
  ASSERT_EQ(m.map.size(), 2u);
  for (const auto& [k, v] : m.map) EXPECT_EQ(v, 0.5);
  // Every pair whose product is store*city shares one map.
  std::size_t s = component(b.sigma, "store");
  EXPECT_EQ(&b.sigma.sigma(s, c), &m);
  EXPECT_EQ(&b.sigma.sigma(c, sc), &m);
  EXPECT_EQ(&b.sigma.sigma(sc, sc), &m);
}

TEST(Assemble, ContinuousPairIsScalar) {
  auto db = make_db({{"D", {cont("price"), cont("size")}, {{"2", "3"}, {"4", "5"}}}});
  auto ws = Workspace::from(db, node("price", {node("size")}));
  ModelSpec m;
  m.features = {{"price", AttributeKind::Continuous}, {"size", AttributeKind::Continuous}};
  auto b = build(ws, m);
  const auto& sp = b.sigma.sigma(component(b.sigma, "price"), component(b.sigma, "size"));
  EXPECT_EQ(sp.map.arity(), 0u);
  EXPECT_DOUBLE_EQ(sp.map.scalar(), (6.0 + 20.0) / 2.0);
  EXPECT_EQ(b.sigma.sigma(0, 0).map.scalar(), 1.0);
}

TEST(Assemble, SingleRowSquares) {
  auto db = make_db({{"D", {cont("x")}, {{"1.7"}}}});
  auto ws = Workspace::from(db, node("x"));
  ModelSpec m;
  m.features = {{"x", AttributeKind::Continuous}};
  auto b = build(ws, m);
  std::size_t x = component(b.sigma, "x");
  EXPECT_DOUBLE_EQ(b.sigma.sigma(x, x).map.scalar(), 1.7 * 1.7);
}

TEST(Kernel, BiasOnly) {
  auto db = make_db({{"D", {cont("y")}, {{"1"}, {"1"}}}});
  auto ws = Workspace::from(db, node("y"));
  ModelSpec m;
  m.label = "y";
  auto b = build(ws, m);
  auto layout = observed_layout(b.sigma);
  SigmaKernel k(b.sigma, layout);
  std::vector<double> g{3.0}, out(1);
  k.multiply(g, out);
  EXPECT_EQ(out[0], 3.0);
  EXPECT_EQ(k.quadratic_form(g), 9.0);
  EXPECT_EQ(k.quadratic_form(std::vector<double>{0.0}), 0.0);
  EXPECT_EQ(k.correlation()[0], 1.0);
  EXPECT_EQ(k.label_moment(), 1.0);
}

TEST(Kernel, SingleKeyJoin) {
  auto b = build(store_city(), categorical_pr2());
  auto layout = observed_layout(b.sigma);
  SigmaKernel k(b.sigma, layout);
  std::vector<double> theta(layout.dimension(), 0.0), out(layout.dimension());
  const auto& city = layout.block(*layout.find_block("city"));
  CategoryId s1 = *b.ws.db.category("store", "s1"), c1 = *b.ws.db.category("city", "c1");
  theta[city.offset + *city.find({c1})] = 2.0;
  k.multiply(theta, out);
  const auto& sc = layout.block(*layout.find_block("city*store"));
  EXPECT_EQ(out[sc.offset + *sc.find({s1, c1})], 1.0);
}

TEST(Kernel, MatchesDenseOracle) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    Generator gen(seed);
    auto inst = gen.random_schema();
    for (auto kind : {ModelKind::Linear, ModelKind::Polynomial2}) {
      auto b = build(inst.workspace(), inst.model(kind));
      auto layout = observed_layout(b.sigma);
      SigmaKernel k(b.sigma, layout);
      auto table = oracle::materialize_join(b.ws.db);
      auto dense = oracle::dense_sigma(table, oracle::model_terms(oracle_model(kind), attributes_of(inst.features)),
                                       inst.label);
      auto idx = oracle_index(layout, dense.encoding);
      ASSERT_EQ(layout.dimension(), dense.encoding.dimension());
      std::vector<double> theta(layout.dimension()), dtheta(layout.dimension());
      for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] = gen.real(-1, 1);
        ASSERT_NE(idx[i], static_cast<std::size_t>(-1));
        dtheta[idx[i]] = theta[i];
      }
      std::vector<double> out(theta.size());
      k.multiply(theta, out);
      auto expect = dense.sigma.multiply(dtheta);
      for (std::size_t i = 0; i < theta.size(); ++i)
        EXPECT_NEAR(out[i], expect[idx[i]], 1e-10 * std::max(1.0, std::abs(expect[idx[i]])));
      double q = dot(dtheta, expect);
      EXPECT_NEAR(k.quadratic_form(theta), q, 1e-10 * std::max(1.0, std::abs(q)));
    }
  }
}

TEST(Assemble, StoredEntriesMatchDistinctNonZeros) {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    Generator gen(seed);
    auto inst = gen.random_schema();
    auto b = build(inst.workspace(), inst.model(ModelKind::Polynomial2));
    auto table = oracle::materialize_join(b.ws.db);
    auto dense = oracle::dense_sigma(
        table, oracle::model_terms(oracle::Model::Polynomial2, attributes_of(inst.features)), inst.label);
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < dense.sigma.rows(); ++i)
      for (std::size_t j = i; j < dense.sigma.cols(); ++j) nonzero += dense.sigma(i, j) != 0.0;
    EXPECT_EQ(b.sigma.stored_entries(), nonzero) << "seed " << seed;
  }
}
