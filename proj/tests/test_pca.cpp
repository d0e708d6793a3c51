#include <gtest/gtest.h>

#include <cmath>

#include "factlearn/errors.hpp"
#include "factlearn/pca.hpp"
#include "support.hpp"

using namespace factlearn;
using namespace testsupport;

namespace {

CovarianceTensor covariance_of(const Workspace& ws, const std::vector<Feature>& features) {
  auto aggs = compute_aggregates(ws.db, ws.order, build_registers(ws.order, covariance_monomials(features).monomials));
  return CovarianceTensor(aggs, features, ws.order, ws.db);
}

// Layout coordinate of every oracle coordinate.
std::vector<std::size_t> layout_index(const DummyLayout& layout, const oracle::Covariance& cov) {
  std::vector<std::size_t> out;
  for (const auto& c : cov.coordinates) {
    if (c.category) {
      auto k = layout.coordinate(c.variable, *c.category);
      out.push_back(k ? *k : static_cast<std::size_t>(-1));
    } else {
      out.push_back(layout.find(c.variable)->offset);
    }
  }
  return out;
}

DenseMatrix diag(std::vector<double> d) {
  DenseMatrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

// XᵀX/n for a random n×d X.
DenseMatrix random_psd(Generator& gen, std::size_t d, std::size_t n) {
  DenseMatrix x(n, d);
  for (auto& v : x.data()) v = gen.real(-1, 1);
  DenseMatrix a = x.transpose() * x;
  for (auto& v : a.data()) v /= static_cast<double>(n);
  return a;
}

double sign_free_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    plus = std::max(plus, std::abs(a[i] - b[i]));
    minus = std::max(minus, std::abs(a[i] + b[i]));
  }
  return std::min(plus, minus);
}

bool well_separated(const std::vector<double>& values, std::size_t j, double gap) {
  if (j > 0 && values[j - 1] - values[j] < gap) return false;
  if (j + 1 < values.size() && values[j] - values[j + 1] < gap) return false;
  return true;
}

double residual(const DenseMatrix& a, const std::vector<double>& v, double lambda) {
  auto av = a.multiply(v);
  for (std::size_t i = 0; i < v.size(); ++i) av[i] -= lambda * v[i];
  return norm_inf(av);
}

// Sales(city, x) and DimCity(city, country); a, b, c -> u, v, v.
Instance city_country() {
  Instance inst;
  inst.db = make_db({{"Sales",
                      {cat("city"), cont("x")},
                      {{"a", "1"}, {"a", "2"}, {"a", "0.5"}, {"b", "3"}, {"b", "-1"}, {"c", "2"}, {"c", "0"},
                       {"c", "1.5"}, {"c", "-2"}}},
                     {"DimCity", {cat("city"), cat("country")}, {{"a", "u"}, {"b", "v"}, {"c", "v"}}}});
  inst.order = node("city", {node("x"), node("country")});
  inst.features = {{"x", AttributeKind::Continuous},
                   {"city", AttributeKind::Categorical},
                   {"country", AttributeKind::Categorical}};
  inst.fds = {{"city", {"country"}}};
  return inst;
}

}  // namespace

TEST(Eigen, Diagonal) {
  DenseOperator op(diag({2, 1}));
  auto res = top_k_eigen(op, 1);
  ASSERT_EQ(res.values.size(), 1u);
  EXPECT_NEAR(res.values[0], 2.0, 1e-10);
  EXPECT_NEAR(res.vectors[0][0], 1.0, 1e-8);
  EXPECT_NEAR(res.vectors[0][1], 0.0, 1e-8);
}

TEST(Eigen, DeflationRemovesTheLeadingPair) {
  DenseOperator op(diag({2, 1}));
  DeflatedOperator d(op);
  d.deflate(2.0, {1.0, 0.0});
  EXPECT_LT(d.dense().max_abs_diff(diag({0, 1})), 1e-15);
}

TEST(Eigen, MatchesJacobiOnRandomMatrices) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Generator gen(seed);
    auto a = random_psd(gen, 6, 10);
    auto res = top_k_eigen(DenseOperator(a), 3);
    auto ref = oracle::dense_eigen(a);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(res.values[j], ref.values[j], 1e-6) << "seed " << seed;
      if (well_separated(ref.values, j, 1e-3)) {
        EXPECT_LT(sign_free_diff(res.vectors[j], ref.vectors[j]), 1e-5) << "seed " << seed << " j " << j;
      }
      EXPECT_NEAR(norm2(res.vectors[j]), 1.0, 1e-8);
      EXPECT_NEAR(dot(res.vectors[j], a.multiply(res.vectors[j])), res.values[j], 1e-6);
      for (std::size_t i = 0; i < j; ++i) EXPECT_LE(std::abs(dot(res.vectors[i], res.vectors[j])), 1e-5);
      for (double v : res.vectors[j])
        if (std::abs(v) > 1e-10) {
          EXPECT_GT(v, 0.0);
          break;
        }
    }
    auto power = oracle::power_iteration(a, 3);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(power.values[j], ref.values[j], 1e-6);
  }
}

TEST(Eigen, FullSpectrumConservesTrace) {
  Generator gen(21);
  auto a = random_psd(gen, 5, 12);
  auto res = top_k_eigen(DenseOperator(a), 5);
  double trace = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) trace += a(i, i);
  for (double v : res.values) sum += v;
  EXPECT_NEAR(sum, trace, 1e-8);
}

TEST(Eigen, RepeatedEigenvalueIsFlagged) {
  auto res = top_k_eigen(DenseOperator(diag({3, 1, 1})), 3);
  EXPECT_FALSE(res.degenerate[0]);
  EXPECT_TRUE(res.degenerate[1]);
  EXPECT_TRUE(res.degenerate[2]);
}

TEST(Eigen, KBeyondDimensionIsRejected) {
  EXPECT_THROW(top_k_eigen(DenseOperator(diag({1, 2})), 3), InputError);
}

TEST(Covariance, SingleContinuousColumn) {
  auto ws = Workspace::from(make_db({{"D", {cont("x")}, {{"1"}, {"-1"}}}}), node("x"));
  auto cov = covariance_of(ws, {{"x", AttributeKind::Continuous}});
  EXPECT_EQ(cov.mean(), std::vector<double>{0.0});
  EXPECT_LT(cov.dense().max_abs_diff(diag({1})), 1e-15);
}

TEST(Covariance, ConstantColumnHasZeroBlock) {
  auto ws = Workspace::from(make_db({{"D", {cont("x"), cont("z")}, {{"1", "4"}, {"3", "4"}, {"2", "4"}}}}),
                            node("x", {node("z")}));
  auto cov = covariance_of(ws, {{"x", AttributeKind::Continuous}, {"z", AttributeKind::Continuous}});
  auto m = cov.dense();
  std::size_t z = cov.layout().find("z")->offset;
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(m(z, i), 0.0, 1e-15);
    EXPECT_NEAR(m(i, z), 0.0, 1e-15);
  }
}

TEST(Covariance, DropsTheLowestCountCategory) {
  // k: b appears once. u: c and d tie at two and the smaller label c goes. t has one category.
  auto ws = Workspace::from(make_db({{"D",
                                      {cat("k"), cat("t"), cat("u")},
                                      {{"a", "t1", "c"}, {"a", "t1", "d"}, {"a", "t1", "c"}, {"b", "t1", "d"},
                                       {"a", "t1", "e"}, {"a", "t1", "e"}, {"a", "t1", "e"}}}}),
                            node("k", {node("t", {node("u")})}));
  auto cov = covariance_of(ws, {{"k", AttributeKind::Categorical},
                                {"t", AttributeKind::Categorical},
                                {"u", AttributeKind::Categorical}});
  const auto& layout = cov.layout();
  EXPECT_EQ(ws.db.label("k", *layout.find("k")->dropped), "b");
  EXPECT_EQ(ws.db.label("u", *layout.find("u")->dropped), "c");
  EXPECT_EQ(layout.find("t"), nullptr);
  EXPECT_EQ(layout.removed(), std::vector<std::string>{"t"});
  EXPECT_EQ(layout.dimension(), 3u);
}

TEST(Covariance, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    Generator gen(500 + seed);
    auto inst = gen.random_schema(20);
    auto features = inst.features;
    features.push_back({"y", AttributeKind::Continuous});
    auto ws = inst.workspace();
    auto cov = covariance_of(ws, features);
    auto table = oracle::materialize_join(ws.db);
    auto ref = oracle::dense_covariance(table, attributes_of(features), ws.db);
    ASSERT_EQ(cov.dimension(), ref.coordinates.size()) << "seed " << seed;
    auto index = layout_index(cov.layout(), ref);
    auto m = cov.dense();
    for (std::size_t i = 0; i < index.size(); ++i) {
      ASSERT_NE(index[i], static_cast<std::size_t>(-1));
      EXPECT_NEAR(cov.mean()[index[i]], ref.mean[i], 1e-12);
      for (std::size_t j = 0; j < index.size(); ++j)
        EXPECT_NEAR(m(index[i], index[j]), ref.matrix(i, j), 1e-9) << "seed " << seed;
    }
  }
}

TEST(Project, ContinuousUnitVector) {
  auto ws = Workspace::from(make_db({{"D", {cont("x")}, {{"1"}, {"-1"}}}}), node("x"));
  auto cov = covariance_of(ws, {{"x", AttributeKind::Continuous}});
  auto eigen = top_k_eigen(cov, 1);
  auto p = project({"x"}, {{2.5}, {-4.0}}, cov.layout(), eigen);
  EXPECT_NEAR(p[0][0], 2.5, 1e-12);
  EXPECT_NEAR(p[1][0], -4.0, 1e-12);
}

TEST(Project, DroppedAndUnseenCategoriesContributeNothing) {
  auto db = make_db({{"D", {cat("k")}, {{"a"}, {"a"}, {"b"}}}});
  auto ws = Workspace::from(db, node("k"));
  auto cov = covariance_of(ws, {{"k", AttributeKind::Categorical}});
  auto eigen = top_k_eigen(cov, 1);
  auto a = static_cast<double>(*ws.db.category("k", "a"));
  auto b = static_cast<double>(*ws.db.category("k", "b"));
  auto p = project({"k"}, {{a}, {b}, {99.0}}, cov.layout(), eigen);
  EXPECT_NEAR(std::abs(p[0][0]), 1.0, 1e-12);
  EXPECT_EQ(p[1][0], 0.0);
  EXPECT_EQ(p[2][0], 0.0);
}

TEST(Project, MatchesDenseOneHotRows) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Generator gen(600 + seed);
    auto inst = gen.random_schema(15);
    auto ws = inst.workspace();
    auto cov = covariance_of(ws, inst.features);
    if (cov.dimension() == 0) continue;
    std::size_t k = std::min<std::size_t>(2, cov.dimension());
    auto eigen = top_k_eigen(cov, k);
    auto table = oracle::materialize_join(ws.db);
    auto ref = oracle::dense_covariance(table, attributes_of(inst.features), ws.db);
    auto index = layout_index(cov.layout(), ref);
    auto p = project(table.columns, table.rows, cov.layout(), eigen);
    for (std::size_t r = 0; r < table.size(); ++r)
      for (std::size_t l = 0; l < eigen.values.size(); ++l) {
        double expect = 0.0;
        for (std::size_t i = 0; i < index.size(); ++i) expect += ref.rows[r][i] * eigen.vectors[l][index[i]];
        EXPECT_NEAR(p[r][l], expect, 1e-12);
      }
  }
}

TEST(FdPca, CityCountryToy) {
  auto inst = city_country();
  auto ws = inst.workspace();
  auto setup = fd_pca_setup(ws.db, ws.order, inst.features, FdCatalog(inst.fds));
  // x, cities b and c, country v
  ASSERT_EQ(setup.ambient.dimension(), 4u);
  EXPECT_EQ(setup.reduced.dimension(), 3u);
  EXPECT_EQ(setup.dropped_variables, 1u);

  auto table = oracle::materialize_join(ws.db);
  auto ref = oracle::dense_covariance(table, attributes_of(inst.features), ws.db);
  auto index = layout_index(setup.ambient, ref);
  // UᵀUΣ̄ is not symmetric; U Σ̄ Uᵀ has the same nonzero spectrum and is the ambient covariance.
  DenseMatrix stacked = setup.u * setup.reduced.dense() * setup.u.transpose();
  for (std::size_t i = 0; i < index.size(); ++i)
    for (std::size_t j = 0; j < index.size(); ++j) EXPECT_NEAR(stacked(index[i], index[j]), ref.matrix(i, j), 1e-12);
  auto reduced_eig = oracle::dense_eigen(stacked);
  auto ambient_eig = oracle::dense_eigen(ref.matrix);

  auto res = fd_reduced_eigen(setup.reduced, setup.u, 3);
  ASSERT_EQ(res.values.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(res.values[j], ambient_eig.values[j], 1e-8);
    EXPECT_NEAR(reduced_eig.values[j], ambient_eig.values[j], 1e-8);
    std::vector<double> v(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) v[i] = res.vectors[j][index[i]];
    EXPECT_LE(residual(ref.matrix, v, res.values[j]), 1e-6);
  }
}

TEST(FdPca, RandomInstancesMatchAmbientSpectrum) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Generator gen(700 + seed);
    auto inst = gen.fd_schema(seed % 2 ? 2 : 1, seed % 3 == 0, 30);
    auto ws = inst.workspace();
    auto setup = fd_pca_setup(ws.db, ws.order, inst.features, FdCatalog(inst.fds));
    auto table = oracle::materialize_join(ws.db);
    auto ref = oracle::dense_covariance(table, attributes_of(inst.features), ws.db);
    ASSERT_EQ(setup.ambient.dimension(), ref.coordinates.size());
    auto index = layout_index(setup.ambient, ref);
    auto ambient_eig = oracle::dense_eigen(ref.matrix);
    std::size_t k = std::min<std::size_t>(3, setup.reduced.dimension());
    auto res = fd_reduced_eigen(setup.reduced, setup.u, k);
    for (std::size_t j = 0; j < res.values.size(); ++j) {
      EXPECT_NEAR(res.values[j], ambient_eig.values[j], 1e-8) << "seed " << seed;
      std::vector<double> v(index.size());
      for (std::size_t i = 0; i < index.size(); ++i) v[i] = res.vectors[j][index[i]];
      EXPECT_NEAR(norm2(v), 1.0, 1e-8);
      EXPECT_LE(residual(ref.matrix, v, res.values[j]), 1e-6) << "seed " << seed;
    }

    auto full = compute_aggregates(ws.db, ws.order,
                                   build_registers(ws.order, covariance_monomials(inst.features).monomials));
    std::set<Monomial> all(full.monomials.begin(), full.monomials.end());
    for (const auto& m : setup.aggregates.monomials) EXPECT_TRUE(all.count(m)) << m.to_string();
    EXPECT_LT(setup.aggregates.monomials.size(), full.monomials.size());
  }
}

TEST(FdPca, WithoutDependenciesMatchesDirectSolve) {
  Generator gen(800);
  auto inst = gen.fd_schema(1, true, 30);
  auto ws = inst.workspace();
  auto setup = fd_pca_setup(ws.db, ws.order, inst.features, FdCatalog{});
  EXPECT_LT(setup.u.max_abs_diff(DenseMatrix::identity(setup.ambient.dimension())), 1e-15);
  auto direct = top_k_eigen(covariance_of(ws, inst.features), 3);
  auto reduced = fd_reduced_eigen(setup.reduced, setup.u, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(reduced.values[j], direct.values[j], 1e-8);
    if (!direct.degenerate[j]) {
      EXPECT_LT(sign_free_diff(reduced.vectors[j], direct.vectors[j]), 1e-5);
    }
  }
}
