#include <gtest/gtest.h>

#include <cmath>

#include "factlearn/errors.hpp"
#include "factlearn/oracle.hpp"
#include "factlearn/solver.hpp"
#include "support.hpp"

using namespace factlearn;
using namespace testsupport;

namespace {

// ½‖x − 1‖² with a configurable gradient defect.
class Bowl : public Objective {
 public:
  Bowl(double gradient_sign, bool poison) : sign_(gradient_sign), poison_(poison) {}
  std::size_t dimension() const override { return 2; }
  double value(std::span<const double> x) const override {
    if (poison_) return std::nan("");
    return 0.5 * ((x[0] - 1) * (x[0] - 1) + (x[1] - 1) * (x[1] - 1));
  }
  void gradient(std::span<const double> x, std::span<double> out) const override {
    out[0] = sign_ * (x[0] - 1);
    out[1] = sign_ * (x[1] - 1);
  }
  ParameterSet export_parameters(std::span<const double>) const override { return {}; }

 private:
  double sign_;
  bool poison_;
};

}  // namespace

TEST(Train, CollinearDataFitsExactly) {
  auto db = make_db({{"D", {cont("x"), cont("y")}, {{"1", "2"}, {"2", "4"}}}});
  auto ws = Workspace::from(db, node("x", {node("y")}));
  ModelSpec m;
  m.features = {{"x", AttributeKind::Continuous}};
  m.label = "y";
  LinearModel lm(sigma_for(ws, m), 0.0);
  auto res = train(lm, SolverConfig{});
  auto p = lm.export_parameters(res.theta);
  EXPECT_NEAR(p.value("x", {}), 2.0, 1e-6);
  EXPECT_NEAR(p.value("1", {}), 0.0, 1e-6);
  EXPECT_NEAR(res.objective, 0.0, 1e-10);
  EXPECT_TRUE(res.converged);
}

TEST(Train, LinearMatchesRidgeSolve) {
  for (std::uint64_t seed = 60; seed < 65; ++seed) {
    Generator gen(seed);
    auto inst = gen.random_schema();
    LinearModel lm(sigma_for(inst.workspace(), inst.model(ModelKind::Linear)), 0.1);
    auto res = train(lm, SolverConfig{});
    auto expect = oracle::ridge_solve(lm.kernel().dense(), lm.c(), 0.1);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(res.theta[i], expect[i], 1e-6) << "seed " << seed;
    // One Σ product per attempted step (a rejected final step included), plus J and the
    // gradient at the start and J at the end.
    EXPECT_LE(res.counters.sigma_matvecs, static_cast<std::uint64_t>(res.iterations) + 4);
    // Non-strict: the last accepted decreases can fall below the resolution of J.
    for (std::size_t t = 1; t < res.trace.size(); ++t) EXPECT_LE(res.trace[t].objective, res.trace[t - 1].objective);
  }
}

TEST(Train, FactorizationDescendsToStationaryPoint) {
  Generator gen(70);
  auto inst = gen.random_schema();
  auto model = inst.model(ModelKind::Factorization, 0.1, 2);
  FactorizationModel fm(sigma_for(inst.workspace(), model), 2, 0.1, model.features);
  SolverConfig cfg;
  cfg.tolerance = 1e-7;
  cfg.seed = 3;
  auto res = train(fm, cfg);
  EXPECT_TRUE(res.converged) << res.stop_reason;
  for (std::size_t t = 1; t < res.trace.size(); ++t) EXPECT_LE(res.trace[t].objective, res.trace[t - 1].objective);
  if (res.stop_reason == "gradient") {
    EXPECT_LE(norm_inf(fm.gradient(res.theta)), cfg.tolerance);
  }
  auto again = train(fm, cfg);
  EXPECT_EQ(again.theta, res.theta);
}

TEST(Train, WrongGradientExhaustsBacktracking) {
  Bowl bowl(-1.0, false);
  SolverConfig cfg;
  cfg.max_backtracks = 5;
  EXPECT_THROW(train(bowl, std::vector<double>{0.0, 0.0}, cfg), NumericError);
}

TEST(Train, NonFiniteObjectiveAborts) {
  Bowl bowl(1.0, true);
  EXPECT_THROW(train(bowl, std::vector<double>{0.0, 0.0}, SolverConfig{}), NumericError);
}

TEST(Train, RejectsBadConfig) {
  Bowl bowl(1.0, false);
  SolverConfig cfg;
  cfg.tolerance = 0;
  EXPECT_THROW(train(bowl, std::vector<double>{0.0, 0.0}, cfg), SchemaError);
}

TEST(Train, TraceRecordsEveryAcceptedStep) {
  Bowl bowl(1.0, false);
  auto res = train(bowl, std::vector<double>{3.0, -2.0}, SolverConfig{});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.trace.size(), static_cast<std::size_t>(res.iterations) + 1);
  EXPECT_NEAR(res.theta[0], 1.0, 1e-6);
}
