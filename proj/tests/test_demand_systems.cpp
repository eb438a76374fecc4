#include <gtest/gtest.h>

#include <cmath>

#include "demandlens/demand_systems.hpp"
#include "demandlens/domain.hpp"
#include "oracles.hpp"

namespace dl = demandlens;

namespace {

const dl::Matrix kExample1{{2.0, 1.0}, {1.0, 2.0}};
const dl::Matrix kExample2{{20.0, -10.0}, {-1.0, 2.0}};

}  // namespace

TEST(Linear, ForwardValues) {
  EXPECT_EQ(dl::make_linear(kExample1).eval({2.0, -1.0}), (dl::Vector{3.0, 0.0}));
  EXPECT_EQ(dl::make_linear(dl::Matrix::identity(3)).eval({1.5, -2.0, 0.25}), (dl::Vector{1.5, -2.0, 0.25}));
  EXPECT_EQ(dl::make_linear(kExample1, {1.0, 1.0}).eval({0.0, 0.0}), (dl::Vector{1.0, 1.0}));
  EXPECT_EQ(*dl::make_linear(kExample1).analytic_jacobian({7.0, 3.0}), kExample1);
}

TEST(Linear, NonSquareRejected) {
  EXPECT_THROW(dl::make_linear(dl::Matrix(2, 3)), dl::DimensionError);
  EXPECT_THROW(dl::make_cubic_linear(dl::Matrix(3, 2)), dl::DimensionError);
}

TEST(CubicLinear, ForwardValues) {
  const auto q = dl::make_cubic_linear(kExample2);
  EXPECT_EQ(q.eval({0.0, 0.0}), (dl::Vector{0.0, 0.0}));
  // 20*1 - 10*8 = -60, -1*1 + 2*8 = 15
  EXPECT_EQ(q.eval({1.0, 2.0}), (dl::Vector{-60.0, 15.0}));
  const dl::Vector d = dl::subtract(q.eval({1.0, 2.0}), q.eval({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(dl::dot(d, dl::Vector{1.0, 2.0}), -30.0);
  EXPECT_EQ(*q.analytic_jacobian({1.0, 2.0}), (dl::Matrix{{60.0, -120.0}, {-3.0, 24.0}}));
}

TEST(Logit, SymmetricPoints) {
  const auto q2 = dl::make_logit(2).eval({0.0, 0.0});
  EXPECT_NEAR(q2[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(q2[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(dl::make_logit(1).eval({0.0})[0], 0.5, 1e-15);
}

TEST(Logit, StableForLargeUtilities) {
  const auto q = dl::make_logit(2).eval({1000.0, 0.0});
  EXPECT_TRUE(std::isfinite(q[0]) && std::isfinite(q[1]));
  EXPECT_NEAR(q[0], 1.0, 1e-12);
  EXPECT_NEAR(q[1], 0.0, 1e-12);
  const auto low = dl::make_logit(2).eval({-1000.0, -1000.0});
  EXPECT_EQ(low[0], 0.0);
}

TEST(Logit, MatchesDirectFormula) {
  oracle::Gen gen(5);
  const auto logit = dl::make_logit(3);
  for (int i = 0; i < 100; ++i) {
    const auto u = gen.vec(3, -8.0, 8.0);
    const auto expected = oracle::logit_direct(u);
    const auto q = logit.eval(u);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(q[k], expected[k], 1e-14);
  }
}

TEST(Indicator2d, Values) {
  const auto q = dl::make_indicator2d();
  EXPECT_EQ(q.eval({-1.0, 1.0}), (dl::Vector{0.0, 0.0}));
  EXPECT_EQ(q.eval({1.0, -1.0}), (dl::Vector{0.0, 0.0}));
  EXPECT_EQ(q.eval({0.0, 0.0}), (dl::Vector{1.0, 1.0}));
  EXPECT_EQ(q.eval({3.0, -1.0}), (dl::Vector{1.0, 1.0}));
  EXPECT_FALSE(q.continuous());
  EXPECT_FALSE(q.has_jacobian());
}

TEST(Quasilinear, IdentityObjective) {
  const auto q = dl::make_quasilinear(dl::quadratic_objective(dl::Matrix::identity(2)));
  oracle::Gen gen(1);
  for (int i = 0; i < 20; ++i) {
    const auto u = gen.vec(2, -5.0, 5.0);
    const auto y = q.eval(u);
    EXPECT_NEAR(y[0], u[0], 1e-9);
    EXPECT_NEAR(y[1], u[1], 1e-9);
  }
}

TEST(Quasilinear, DiagonalQuadraticMatchesClosedForm) {
  const auto q = dl::make_quasilinear(dl::quadratic_objective(dl::Matrix{{2.0, 0.0}, {0.0, 4.0}}));
  oracle::Gen gen(2);
  for (int i = 0; i < 100; ++i) {
    const auto u = gen.vec(2, -5.0, 5.0);
    const auto y = q.eval(u);
    EXPECT_NEAR(y[0], u[0] / 2.0, 1e-6);
    EXPECT_NEAR(y[1], u[1] / 4.0, 1e-6);
  }
}

TEST(Quasilinear, QuarticSolvesCubicFirstOrderCondition) {
  dl::QuasilinearSpec spec;
  spec.dim = 1;
  spec.objective = [](const dl::Vector& y) { return -0.25 * std::pow(y[0], 4); };
  spec.gradient = [](const dl::Vector& y) { return dl::Vector{-y[0] * y[0] * y[0]}; };
  const auto q = dl::make_quasilinear(spec);
  EXPECT_NEAR(q.eval({1.0})[0], 1.0, 1e-9);
  EXPECT_NEAR(q.eval({8.0})[0], 2.0, 1e-9);
  EXPECT_NEAR(q.eval({-0.125})[0], -0.5, 1e-9);
}

TEST(Quasilinear, CompassSearchWithoutGradient) {
  auto spec = dl::quadratic_objective(dl::Matrix{{2.0, 0.0}, {0.0, 4.0}});
  spec.gradient.reset();
  spec.tolerance = 1e-10;
  const auto y = dl::make_quasilinear(spec).eval({1.0, 2.0});
  EXPECT_NEAR(y[0], 0.5, 1e-6);
  EXPECT_NEAR(y[1], 0.5, 1e-6);
}

TEST(Quasilinear, IterationCapRaisesConvergenceError) {
  auto spec = dl::quadratic_objective(dl::Matrix{{2.0, 0.0}, {0.0, 4.0}});
  spec.max_iterations = 1;
  EXPECT_THROW(dl::make_quasilinear(spec).eval({1.0, 2.0}), dl::ConvergenceError);
}

TEST(Quasilinear, ObjectivesAreConcaveOnSpotChecks) {
  EXPECT_GE(dl::concavity_gap(dl::quadratic_objective(dl::Matrix{{2.0, 0.0}, {0.0, 4.0}}), 500, 3, 10.0), -1e-9);
  dl::QuasilinearSpec convex;
  convex.dim = 1;
  convex.objective = [](const dl::Vector& y) { return y[0] * y[0]; };
  EXPECT_LT(dl::concavity_gap(convex, 500, 3, 10.0), -1e-9);
}

TEST(Quasilinear, LawOfDemandUpToSolverTolerance) {
  const auto q = dl::make_quasilinear(dl::quadratic_objective(dl::Matrix{{3.0, 1.0}, {1.0, 2.0}}));
  oracle::Gen gen(8);
  for (int i = 0; i < 300; ++i) {
    const auto a = gen.vec(2, -4.0, 4.0), b = gen.vec(2, -4.0, 4.0);
    EXPECT_GE(dl::dot(dl::subtract(q.eval(a), q.eval(b)), dl::subtract(a, b)), -1e-6);
  }
}

TEST(Transform, CubeRootUndoesCubes) {
  const auto tq = dl::transform(dl::make_cubic_linear(kExample2), {dl::CoordinateMap::cube_root()});
  oracle::Gen gen(4);
  for (int i = 0; i < 50; ++i) {
    const auto u = gen.vec(2, -3.0, 3.0);
    const auto expected = kExample2 * u;
    const auto got = tq.eval(u);
    EXPECT_NEAR(got[0], expected[0], 1e-12);
    EXPECT_NEAR(got[1], expected[1], 1e-12);
  }
  EXPECT_FALSE(tq.has_jacobian());  // the cube root is not differentiable at 0
}

TEST(Transform, IdentityAndScale) {
  const auto id = dl::transform(dl::make_linear(dl::Matrix::identity(2)), {dl::CoordinateMap::identity()});
  EXPECT_EQ(id.eval({0.3, -0.7}), (dl::Vector{0.3, -0.7}));
  const auto scaled = dl::transform(dl::make_logit(2), {dl::CoordinateMap::scale(2.0)});
  EXPECT_NEAR(scaled.eval({0.0, 0.0})[0], 1.0 / 3.0, 1e-15);
  ASSERT_TRUE(scaled.has_jacobian());
  // chain rule: J(u) = J_logit(2u) * 2
  const auto j = *scaled.analytic_jacobian({0.0, 0.0});
  EXPECT_NEAR(j(0, 0), 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(j(0, 1), -2.0 / 9.0, 1e-15);
}

TEST(Transform, RejectsDecreasingMaps) {
  EXPECT_THROW(dl::CoordinateMap::scale(-1.0), dl::PreconditionError);
  EXPECT_THROW(dl::CoordinateMap::affine(0.0, 1.0), dl::PreconditionError);
}

TEST(Arum, IndividualChoices) {
  const dl::ArumDraw zero{{0.0, 0.0}, dl::ShockDistribution::gumbel};
  EXPECT_EQ(dl::arum_individual({5.0, 0.0}, zero), (dl::Vector{1.0, 0.0}));
  EXPECT_EQ(dl::arum_individual({-5.0, -5.0}, zero), (dl::Vector{0.0, 0.0}));
  EXPECT_EQ(dl::arum_individual({1.0, 1.0}, zero), (dl::Vector{1.0, 0.0}));
  EXPECT_EQ(dl::arum_individual({0.0, 0.0}, zero), (dl::Vector{0.0, 0.0}));  // inside must beat 0 strictly
}

TEST(Arum, SimulationIsDeterministic) {
  const dl::Vector u{0.3, -0.2};
  EXPECT_EQ(dl::arum_simulate(u, 5000, 17), dl::arum_simulate(u, 5000, 17));
  EXPECT_NE(dl::arum_simulate(u, 5000, 17), dl::arum_simulate(u, 5000, 18));
}

TEST(Arum, SingleDrawIsIndividualChoice) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const dl::Vector u{0.1 * seed - 1.0, 0.5};
    EXPECT_EQ(dl::arum_simulate(u, 1, seed), dl::arum_individual(u, dl::arum_draw({}, 2, seed, 0)));
  }
}

TEST(Arum, GumbelMatchesLogit) {
  const auto q = dl::arum_simulate({0.0, 0.0}, 200000, 12345);
  EXPECT_NEAR(q[0], 1.0 / 3.0, 0.005);
  EXPECT_NEAR(q[1], 1.0 / 3.0, 0.005);
}

TEST(Arum, ShockTableAndNormal) {
  dl::ShockModel table{dl::ShockDistribution::table, {{1.0, -1.0}, {-1.0, 1.0}}};
  const auto q = dl::arum_simulate({0.5, 0.5}, 1000, 3, table);
  EXPECT_NEAR(q[0] + q[1], 1.0, 1e-15);
  EXPECT_GT(q[0], 0.3);
  EXPECT_GT(q[1], 0.3);
  const auto n = dl::arum_simulate({0.0}, 100000, 9, {dl::ShockDistribution::normal, {}});
  EXPECT_NEAR(n[0], 0.5, 0.01);  // P(N(0,1) > 0)
}

TEST(Arum, IndividualLawOfDemandHoldsExactly) {
  oracle::Gen gen(99);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto u = gen.vec(3, -3.0, 3.0), ut = gen.vec(3, -3.0, 3.0);
    const auto draw = dl::arum_draw({}, 3, 77, static_cast<std::uint64_t>(i));
    const auto d = dl::subtract(dl::arum_individual(u, draw), dl::arum_individual(ut, draw));
    if (dl::dot(d, dl::subtract(u, ut)) < 0.0) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Arum, AggregateLawOfDemandUnderCommonRandomNumbers) {
  oracle::Gen gen(100);
  for (int i = 0; i < 200; ++i) {
    const auto u = gen.vec(2, -2.0, 2.0), ut = gen.vec(2, -2.0, 2.0);
    const auto qa = dl::arum_simulate(u, 500, 5), qb = dl::arum_simulate(ut, 500, 5);
    EXPECT_GE(dl::dot(dl::subtract(qa, qb), dl::subtract(u, ut)), 0.0);
  }
}

TEST(Arum, EmpiricalSystemFlaggedDiscontinuous) {
  const auto s = dl::make_arum_mc(2, 100, 1);
  EXPECT_FALSE(s.continuous());
  EXPECT_EQ(s.eval({0.2, 0.1}), dl::arum_simulate({0.2, 0.1}, 100, 1));
}

TEST(DemandSystem, DimensionChecked) {
  EXPECT_THROW(dl::make_logit(2).eval({1.0}), dl::DimensionError);
  EXPECT_THROW(dl::make_logit(0), dl::DimensionError);
}
