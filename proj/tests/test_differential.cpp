#include <gtest/gtest.h>

#include <cmath>

#include "demandlens/differential.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace dl = demandlens;
using fixtures::kExample1;
using fixtures::kExample2;

TEST(Jacobian, LinearIsExact) {
  const auto j = dl::jacobian(dl::make_linear(kExample1), {4.0, -3.0});
  EXPECT_EQ(j.entries, kExample1);
  EXPECT_EQ(j.method, dl::JacobianMethod::analytic);
  EXPECT_EQ(j.step, 0.0);
}

TEST(Jacobian, CubeByFiniteDifferences) {
  const auto j = dl::jacobian(fixtures::cube_1d(), {2.0});
  EXPECT_EQ(j.method, dl::JacobianMethod::central_fd);
  EXPECT_NEAR(j.entries(0, 0), 12.0, 1e-6);
  EXPECT_NEAR(j.entries(0, 0), oracle::derivative([](double x) { return x * x * x; }, 2.0), 1e-6);
}

TEST(Jacobian, LogitAtOrigin) {
  const dl::Matrix expected{{2.0 / 9.0, -1.0 / 9.0}, {-1.0 / 9.0, 2.0 / 9.0}};
  dl::JacobianOptions fd;
  fd.use_analytic = false;
  for (const auto& opts : {dl::JacobianOptions{}, fd}) {
    const auto j = dl::jacobian(dl::make_logit(2), {0.0, 0.0}, opts);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(j.entries(r, c), expected(r, c), 1e-6);
  }
}

TEST(Jacobian, StepShrinksNearBoundary) {
  const auto box = dl::Domain::cube(1, 0.0, 1.0);
  const auto j = dl::jacobian(fixtures::cube_1d(), {1e-7}, box);
  EXPECT_LT(j.step, 1e-7);
  EXPECT_NEAR(j.entries(0, 0), 0.0, 1e-9);
}

TEST(Jacobian, ProbeFloorRaisesDomainError) {
  const auto box = dl::Domain::cube(1, 0.0, 1.0);
  EXPECT_THROW(dl::jacobian(fixtures::cube_1d(), {1e-300}, box), dl::DomainError);
}

TEST(Jacobian, AnalyticAgreesWithFiniteDifferences) {
  dl::JacobianOptions fd;
  fd.use_analytic = false;
  const std::vector<dl::DemandSystem> systems{dl::make_logit(3), dl::make_cubic_linear(kExample2),
                                              dl::transform(dl::make_logit(2), {dl::CoordinateMap::scale(2.0)}),
                                              dl::transform(dl::make_linear(kExample1), {dl::CoordinateMap::cube()})};
  oracle::Gen gen(31);
  for (const auto& s : systems) {
    for (int i = 0; i < 100; ++i) {
      const auto u = gen.vec(s.dim(), -2.0, 2.0);
      const auto a = dl::jacobian(s, u).entries;
      const auto f = dl::jacobian(s, u, fd).entries;
      const double scale = std::max(1.0, dl::max_abs_entry(a));
      EXPECT_LT(dl::max_abs_entry(a - f) / scale, 1e-5) << s.label();
    }
  }
}

TEST(DirectionalDerivative, Examples) {
  EXPECT_NEAR(dl::directional_derivative(fixtures::cube_1d(), {0.0}, {1.0})[0], 0.0, 1e-8);
  const auto lin = dl::directional_derivative(dl::make_linear(kExample1), {3.0, -1.0}, {1.0, 0.0});
  EXPECT_NEAR(lin[0], 2.0, 1e-9);
  EXPECT_NEAR(lin[1], 1.0, 1e-9);
  EXPECT_NEAR(dl::directional_derivative(fixtures::cube_1d(), {1.0}, {-1.0})[0], -3.0, 1e-6);
}

TEST(DirectionalDerivative, MatchesJacobianTimesDirection) {
  oracle::Gen gen(12);
  const auto logit = dl::make_logit(3);
  const auto cubic = dl::make_cubic_linear(kExample2);
  for (int i = 0; i < 100; ++i) {
    for (const auto* s : {&logit, &cubic}) {
      const auto u = gen.vec(s->dim(), -1.5, 1.5);
      const auto v = gen.vec(s->dim(), -1.0, 1.0);
      const auto jv = dl::jacobian(*s, u).entries * v;
      const auto d = dl::directional_derivative(*s, u, v);
      const double scale = std::max(1.0, dl::norm_inf(jv));
      EXPECT_LT(dl::max_abs_diff(d, jv) / scale, 1e-5);
    }
  }
}

TEST(DirectionalDerivative, OutsideDomainThrows) {
  EXPECT_THROW(dl::directional_derivative(fixtures::cube_1d(), {2.0}, {1.0}, dl::Domain::cube(1, 0.0, 1.0)),
               dl::DomainError);
}

TEST(Symmetrize, Examples) {
  EXPECT_EQ(dl::symmetrize(kExample2), (dl::Matrix{{20.0, -5.5}, {-5.5, 2.0}}));
  EXPECT_EQ(dl::symmetrize(kExample1), kExample1);
  EXPECT_EQ(dl::symmetrize(dl::Matrix{{0.0, 1.0}, {-1.0, 0.0}}), dl::Matrix(2, 2));
}

TEST(MinEigenvalue, Examples) {
  EXPECT_NEAR(dl::min_eigenvalue_sym(kExample1), 1.0, 1e-12);
  EXPECT_NEAR(dl::min_eigenvalue_sym(dl::Matrix{{20.0, -5.5}, {-5.5, 2.0}}), 11.0 - std::sqrt(111.25), 1e-12);
  EXPECT_NEAR(dl::min_eigenvalue_sym(dl::Matrix{{20.0, -5.5}, {-5.5, 2.0}}),
              oracle::sym2x2_eigenvalues(20.0, -5.5, 2.0)[0], 1e-12);
  EXPECT_NEAR(dl::min_eigenvalue_sym(dl::Matrix::identity(4)), 1.0, 1e-15);
  EXPECT_EQ(dl::min_eigenvalue_sym(dl::Matrix{{-3.5}}), -3.5);
}

TEST(QuasiDefinite, Examples) {
  auto v = dl::is_weakly_quasi_definite(kExample1);
  EXPECT_EQ(v.classification, dl::Definiteness::positive_definite);
  EXPECT_NEAR(v.min_symmetric_eigenvalue, 1.0, 1e-12);

  const dl::Matrix j{{60.0, -120.0}, {-3.0, 24.0}};
  EXPECT_LT(oracle::det2(60.0, -61.5, -61.5, 24.0), 0.0);
  v = dl::is_weakly_quasi_definite(j);
  EXPECT_EQ(v.classification, dl::Definiteness::indefinite);
  EXPECT_NEAR(v.min_symmetric_eigenvalue, oracle::sym2x2_eigenvalues(60.0, -61.5, 24.0)[0], 1e-10);

  EXPECT_EQ(dl::is_weakly_quasi_definite(dl::Matrix(2, 2)).classification,
            dl::Definiteness::positive_semidefinite_within_tol);
}

TEST(QuasiDefinite, MatchesAngleEnumeration) {
  oracle::Gen gen(44);
  for (int i = 0; i < 200; ++i) {
    const auto e = gen.vec(4, -3.0, 3.0);
    const dl::Matrix b{{e[0], e[1]}, {e[2], e[3]}};
    const double brute = oracle::min_quadratic_form_2d(e[0], e[1], e[2], e[3]);
    const double exact = dl::is_weakly_quasi_definite(b).min_symmetric_eigenvalue;
    EXPECT_NEAR(exact, brute, 1e-6);
  }
}

TEST(NullDirections, Examples) {
  EXPECT_TRUE(dl::null_directions(kExample1, 1e-8).empty());
  const auto d = dl::null_directions(dl::Matrix{{1.0, 0.0}, {1.0, 0.0}}, 1e-8);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d[0][0], 0.0, 1e-12);
  EXPECT_NEAR(d[0][1], 1.0, 1e-12);
  const auto z = dl::null_directions(dl::Matrix(2, 2), 1e-8);
  ASSERT_EQ(z.size(), 2u);
  EXPECT_NEAR(std::abs(oracle::det2(z[0][0], z[1][0], z[0][1], z[1][1])), 1.0, 1e-12);
}

TEST(NullDirections, SignConvention) {
  const auto d = dl::null_directions(dl::Matrix{{1.0, 1.0}, {1.0, 1.0}}, 1e-8);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_GT(d[0][0], 0.0);
  EXPECT_NEAR(d[0][0], -d[0][1], 1e-12);
  EXPECT_NEAR(dl::norm2(d[0]), 1.0, 1e-12);
}

TEST(PMatrix, Examples) {
  auto v = dl::is_p_matrix(kExample1);
  EXPECT_EQ(v.classification, dl::PMatrixClass::P);
  EXPECT_DOUBLE_EQ(v.min_principal_minor, 2.0);
  EXPECT_EQ(dl::is_p_matrix(dl::Matrix{{0.0, 0.0}, {0.0, 1.0}}).classification, dl::PMatrixClass::P0_only);
  EXPECT_EQ(dl::is_p_matrix(dl::Matrix{{-1.0, 0.0}, {0.0, 1.0}}).classification, dl::PMatrixClass::neither);
}

TEST(PMatrix, SizeCap) {
  EXPECT_THROW(dl::is_p_matrix(dl::Matrix::identity(21)), dl::DimensionError);
  EXPECT_EQ(dl::is_p_matrix(dl::Matrix::identity(12)).classification, dl::PMatrixClass::P);
}

TEST(PMatrix, ThreeByThreeAgainstCofactors) {
  oracle::Gen gen(6);
  for (int rep = 0; rep < 100; ++rep) {
    std::array<std::array<double, 3>, 3> m{};
    dl::Matrix a(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) a(i, j) = m[i][j] = gen.uniform(-1.0, 3.0);
    double lowest = std::min({m[0][0], m[1][1], m[2][2]});
    lowest = std::min({lowest, oracle::det2(m[0][0], m[0][1], m[1][0], m[1][1]),
                       oracle::det2(m[0][0], m[0][2], m[2][0], m[2][2]),
                       oracle::det2(m[1][1], m[1][2], m[2][1], m[2][2]), oracle::det3(m)});
    EXPECT_NEAR(dl::is_p_matrix(a).min_principal_minor, lowest, 1e-10);
    EXPECT_EQ(dl::is_p_matrix(a).classification == dl::PMatrixClass::P, lowest > 0.0);
  }
}
