#pragma once

// Numerical derivatives of demand systems and the small-matrix tests built on
// them: symmetrization, definiteness, null directions, principal minors.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "demandlens/demand_systems.hpp"
#include "demandlens/domain.hpp"
#include "demandlens/errors.hpp"
#include "demandlens/linalg.hpp"

namespace demandlens {

enum class JacobianMethod { analytic, forward_fd, central_fd };

inline const char* to_string(JacobianMethod m) {
  switch (m) {
    case JacobianMethod::analytic: return "analytic";
    case JacobianMethod::forward_fd: return "forward_fd";
    case JacobianMethod::central_fd: return "central_fd";
  }
  return "unknown";
}

struct JacobianMatrix {
  Matrix entries;
  Vector at_point;
  JacobianMethod method = JacobianMethod::analytic;
  double step = 0.0;  // largest FD step used; 0 for analytic
};

struct JacobianOptions {
  double step = 0.0;          // 0 selects cbrt(eps) * max(1, |u_k|) per coordinate
  bool use_analytic = true;   // false forces central differences
};

namespace detail {

inline const double kCbrtEps = std::cbrt(std::numeric_limits<double>::epsilon());

// Smallest relative step before a probe is declared to have left the domain.
inline constexpr double kStepFloor = 1e-12;

}  // namespace detail

/// Jacobian of Q at u: the analytic one when the system has it, otherwise
/// central differences column by column. Steps shrink by halves until both
/// probes u +- h e_k are inside the domain.
inline JacobianMatrix jacobian(const DemandSystem& system, const Vector& u, const Domain& domain,
                               JacobianOptions opts = {}) {
  if (u.size() != system.dim() || domain.dim() != system.dim())
    throw DimensionError("jacobian: point, system and domain dimensions differ");
  if (!contains(domain, u)) throw DomainError("jacobian: evaluation point is outside the domain");

  if (opts.use_analytic && system.has_jacobian()) {
    Matrix j = *system.analytic_jacobian(u);
    if (j.rows() != system.dim() || j.cols() != system.dim())
      throw DimensionError("jacobian: analytic Jacobian has wrong shape");
    if (!j.all_finite()) throw PreconditionError("jacobian: analytic Jacobian has non-finite entries");
    return {std::move(j), u, JacobianMethod::analytic, 0.0};
  }

  const std::size_t k = system.dim();
  Matrix j(k, k);
  double max_step = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double scale = std::max(1.0, std::abs(u[c]));
    double h = (opts.step > 0.0 ? opts.step : detail::kCbrtEps) * scale;
    Vector plus = u, minus = u;
    for (;;) {
      plus[c] = u[c] + h;
      minus[c] = u[c] - h;
      if (contains(domain, plus) && contains(domain, minus)) break;
      h *= 0.5;
      if (h < detail::kStepFloor * scale)
        throw DomainError("jacobian: finite-difference probe left the domain at coordinate " + std::to_string(c));
    }
    const Vector qp = system.eval(plus);
    const Vector qm = system.eval(minus);
    const double width = plus[c] - minus[c];
    for (std::size_t r = 0; r < k; ++r) j(r, c) = (qp[r] - qm[r]) / width;
    max_step = std::max(max_step, h);
  }
  if (!j.all_finite()) throw PreconditionError("jacobian: finite-difference Jacobian has non-finite entries");
  return {std::move(j), u, JacobianMethod::central_fd, max_step};
}

inline JacobianMatrix jacobian(const DemandSystem& system, const Vector& u, JacobianOptions opts = {}) {
  return jacobian(system, u, Domain::whole_space(system.dim()), opts);
}

/// One-sided directional derivative Q'(u, v), Richardson-extrapolated from the
/// forward differences at steps h and h/2. `h == 0` picks
/// cbrt(eps) * max(1, ||u||_inf); the step is halved while u + h v is outside
/// the domain.
inline Vector directional_derivative(const DemandSystem& system, const Vector& u, const Vector& v,
                                     const Domain& domain, double h = 0.0) {
  if (v.size() != system.dim()) throw DimensionError("directional_derivative: direction has wrong dimension");
  if (!contains(domain, u)) throw DomainError("directional_derivative: base point is outside the domain");
  const double scale = std::max(1.0, norm_inf(u)) / std::max(norm_inf(v), std::numeric_limits<double>::min());
  if (h <= 0.0) h = detail::kCbrtEps * scale;
  while (!contains(domain, axpy(u, h, v))) {
    h *= 0.5;
    if (h < detail::kStepFloor * scale) throw DomainError("directional_derivative: probe point left the domain");
  }
  const Vector q0 = system.eval(u);
  const Vector q_full = system.eval(axpy(u, h, v));
  const Vector q_half = system.eval(axpy(u, 0.5 * h, v));
  Vector d(q0.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double coarse = (q_full[i] - q0[i]) / h;
    const double fine = (q_half[i] - q0[i]) / (0.5 * h);
    d[i] = 2.0 * fine - coarse;
  }
  return d;
}

inline Vector directional_derivative(const DemandSystem& system, const Vector& u, const Vector& v, double h = 0.0) {
  return directional_derivative(system, u, v, Domain::whole_space(system.dim()), h);
}

// (B + B') / 2
inline Matrix symmetrize(const Matrix& b) {
  if (!b.square()) throw DimensionError("symmetrize: matrix is not square");
  Matrix s(b.rows(), b.cols());
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) s(i, j) = 0.5 * (b(i, j) + b(j, i));
  return s;
}

inline double min_eigenvalue_sym(const Matrix& s) {
  if (!s.square() || s.rows() == 0) throw DimensionError("min_eigenvalue_sym: matrix must be square and non-empty");
  if (s.rows() == 1) return s(0, 0);
  return eigen_symmetric(s).values.front();
}

enum class Definiteness { positive_definite, positive_semidefinite_within_tol, indefinite };

inline const char* to_string(Definiteness d) {
  switch (d) {
    case Definiteness::positive_definite: return "positive_definite";
    case Definiteness::positive_semidefinite_within_tol: return "positive_semidefinite_within_tol";
    case Definiteness::indefinite: return "indefinite";
  }
  return "unknown";
}

struct DefinitenessVerdict {
  double min_symmetric_eigenvalue = 0.0;
  Definiteness classification = Definiteness::indefinite;
  double tolerance = 0.0;  // effective (scaled) tolerance
};

inline constexpr double kDefaultPsdTolerance = 1e-8;

/// Classifies the symmetric part of B by its smallest eigenvalue. The tolerance
/// is scaled by max(1, ||(B + B')/2||_inf).
inline DefinitenessVerdict is_weakly_quasi_definite(const Matrix& b, double tol = kDefaultPsdTolerance) {
  const Matrix s = symmetrize(b);
  const double lambda = min_eigenvalue_sym(s);
  const double eff = tol * std::max(1.0, norm_inf(s));
  Definiteness c = Definiteness::indefinite;
  if (lambda >= eff) {
    c = Definiteness::positive_definite;
  } else if (lambda >= -eff) {
    c = Definiteness::positive_semidefinite_within_tol;
  }
  return {lambda, c, eff};
}

/// Right-singular directions of J with singular value below tol, i.e. the
/// eigenvectors of J'J with eigenvalue below tol^2. Each is unit length with its
/// first non-negligible component positive.
inline std::vector<Vector> null_directions(const Matrix& j, double tol) {
  if (!j.square()) throw DimensionError("null_directions: matrix is not square");
  const Matrix gram = j.transposed() * j;
  const SymmetricEigen eig = eigen_symmetric(gram);
  std::vector<Vector> out;
  for (std::size_t c = 0; c < eig.values.size(); ++c) {
    if (!(eig.values[c] < tol * tol)) continue;
    Vector v = eig.vectors.column(c);
    const double n = norm2(v);
    for (double& x : v) x /= n;
    for (double x : v) {
      if (std::abs(x) > 1e-12) {
        if (x < 0.0)
          for (double& y : v) y = -y;
        break;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

enum class PMatrixClass { P, P0_only, neither };

inline const char* to_string(PMatrixClass c) {
  switch (c) {
    case PMatrixClass::P: return "P";
    case PMatrixClass::P0_only: return "P0_only";
    case PMatrixClass::neither: return "neither";
  }
  return "unknown";
}

struct PMatrixVerdict {
  PMatrixClass classification = PMatrixClass::neither;
  double min_principal_minor = 0.0;
};

inline constexpr std::size_t kMaxPMatrixDim = 20;

// Enumerates all 2^K - 1 principal minors.
inline PMatrixVerdict is_p_matrix(const Matrix& b, double tol = 0.0) {
  if (!b.square() || b.rows() == 0) throw DimensionError("is_p_matrix: matrix must be square and non-empty");
  if (b.rows() > kMaxPMatrixDim)
    throw DimensionError("is_p_matrix: dimension " + std::to_string(b.rows()) + " exceeds the limit of " +
                         std::to_string(kMaxPMatrixDim));
  const std::size_t n = b.rows();
  double min_minor = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> index;
  for (std::uint32_t mask = 1; mask < (std::uint32_t{1} << n); ++mask) {
    index.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint32_t{1} << i)) index.push_back(i);
    min_minor = std::min(min_minor, determinant(principal_submatrix(b, index)));
  }
  PMatrixClass c = PMatrixClass::neither;
  if (min_minor > tol) {
    c = PMatrixClass::P;
  } else if (min_minor >= -tol) {
    c = PMatrixClass::P0_only;
  }
  return {c, min_minor};
}

}  // namespace demandlens
