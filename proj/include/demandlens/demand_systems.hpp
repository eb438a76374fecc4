#pragma once

// Demand mappings u -> Q(u) on R^K behind one evaluation interface, plus the
// catalog of concrete systems and wrappers built on it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demandlens/errors.hpp"
#include "demandlens/linalg.hpp"
#include "demandlens/random.hpp"

namespace demandlens {

using EvalFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

/// A demand mapping Q: R^K -> R^K.
///
/// `eval` must be pure and reentrant: the same input gives a bitwise-identical
/// output on every call and from every thread. Systems that are not continuous
/// carry `continuous() == false`; diagnostics that rely on continuity refuse to
/// draw conclusions for them.
class DemandSystem {
 public:
  DemandSystem(std::size_t dim, EvalFn eval, std::optional<JacobianFn> jacobian, bool continuous, std::string label)
      : dim_(dim), eval_(std::move(eval)), jacobian_(std::move(jacobian)), continuous_(continuous),
        label_(std::move(label)) {
    if (dim_ == 0) throw DimensionError("demand system: dimension must be positive");
    if (!eval_) throw PreconditionError("demand system: missing evaluation function");
  }

  std::size_t dim() const { return dim_; }
  bool continuous() const { return continuous_; }
  bool has_jacobian() const { return jacobian_.has_value(); }
  const std::string& label() const { return label_; }

  Vector eval(const Vector& u) const {
    check_dim(u, "eval");
    Vector q = eval_(u);
    if (q.size() != dim_) throw DimensionError("demand system '" + label_ + "' returned a vector of wrong length");
    return q;
  }

  Vector operator()(const Vector& u) const { return eval(u); }

  std::optional<Matrix> analytic_jacobian(const Vector& u) const {
    if (!jacobian_) return std::nullopt;
    check_dim(u, "analytic_jacobian");
    return (*jacobian_)(u);
  }

 private:
  void check_dim(const Vector& u, const char* what) const {
    if (u.size() != dim_)
      throw DimensionError(std::string(what) + ": point has dimension " + std::to_string(u.size()) + ", system '" +
                           label_ + "' has " + std::to_string(dim_));
  }

  std::size_t dim_;
  EvalFn eval_;
  std::optional<JacobianFn> jacobian_;
  bool continuous_;
  std::string label_;
};

inline DemandSystem make_custom(std::size_t dim, EvalFn eval, std::string label,
                                std::optional<JacobianFn> jacobian = std::nullopt, bool continuous = true) {
  return DemandSystem(dim, std::move(eval), std::move(jacobian), continuous, std::move(label));
}

namespace detail {

inline void require_square_finite(const Matrix& a, const char* what) {
  if (!a.square() || a.rows() == 0) throw DimensionError(std::string(what) + ": matrix must be square and non-empty");
  if (!a.all_finite()) throw PreconditionError(std::string(what) + ": matrix entries must be finite");
}

}  // namespace detail

// Q(u) = A u + b
inline DemandSystem make_linear(Matrix a, Vector b = {}) {
  detail::require_square_finite(a, "make_linear");
  if (b.empty()) b.assign(a.rows(), 0.0);
  if (b.size() != a.rows()) throw DimensionError("make_linear: offset has wrong dimension");
  const std::size_t k = a.rows();
  auto eval = [a, b](const Vector& u) { return add(a * u, b); };
  auto jac = [a](const Vector&) { return a; };
  return DemandSystem(k, eval, JacobianFn(jac), true, "linear");
}

// Q(u) = A (u_1^3, ..., u_K^3)
inline DemandSystem make_cubic_linear(Matrix a) {
  detail::require_square_finite(a, "make_cubic_linear");
  const std::size_t k = a.rows();
  auto eval = [a](const Vector& u) {
    Vector cubes(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) cubes[i] = u[i] * u[i] * u[i];
    return a * cubes;
  };
  auto jac = [a](const Vector& u) {
    Matrix j = a;
    for (std::size_t r = 0; r < j.rows(); ++r)
      for (std::size_t c = 0; c < j.cols(); ++c) j(r, c) *= 3.0 * u[c] * u[c];
    return j;
  };
  return DemandSystem(k, eval, JacobianFn(jac), true, "cubic_linear");
}

/// Multinomial logit shares of K inside goods against an outside good with
/// utility 0: q_k = exp(u_k) / (1 + sum_j exp(u_j)). Evaluated with a max
/// shift so large |u| never overflows.
inline Vector logit_shares(const Vector& u) {
  double shift = 0.0;
  for (double x : u) shift = std::max(shift, x);
  double denom = std::exp(-shift);
  Vector q(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    q[i] = std::exp(u[i] - shift);
    denom += q[i];
  }
  for (double& x : q) x /= denom;
  return q;
}

inline DemandSystem make_logit(std::size_t k) {
  if (k == 0) throw DimensionError("make_logit: K must be at least 1");
  auto jac = [](const Vector& u) {
    const Vector q = logit_shares(u);
    Matrix j(q.size(), q.size());
    for (std::size_t r = 0; r < q.size(); ++r)
      for (std::size_t c = 0; c < q.size(); ++c) j(r, c) = (r == c ? q[r] : 0.0) - q[r] * q[c];
    return j;
  };
  return DemandSystem(k, logit_shares, JacobianFn(jac), true, "logit");
}

// Q(u) = (1{u in A}, 1{u in A}) with A = {u1 + u2 > 0} plus the origin.
inline DemandSystem make_indicator2d() {
  auto eval = [](const Vector& u) {
    const bool in_a = (u[0] + u[1] > 0.0) || (u[0] == 0.0 && u[1] == 0.0);
    const double v = in_a ? 1.0 : 0.0;
    return Vector{v, v};
  };
  return DemandSystem(2, eval, std::nullopt, false, "indicator2d");
}

// ---- quasilinear demand ----------------------------------------------------

/// Q(u) = argmax_y u.y + C(y) for a concave objective C.
///
/// `objective` may return -inf outside its effective domain. When `gradient`
/// is present the inner solver is steepest ascent with a derivative-sign line
/// search; otherwise a compass search. Both start from y = 0.
struct QuasilinearSpec {
  std::size_t dim = 0;
  std::function<double(const Vector&)> objective;
  std::optional<std::function<Vector(const Vector&)>> gradient;
  int max_iterations = 20000;
  double tolerance = 1e-12;  // stationarity residual (gradient path) or final step (compass path)
  std::string label = "quasilinear";
};

// C(y) = -1/2 y' M y
inline QuasilinearSpec quadratic_objective(const Matrix& m) {
  detail::require_square_finite(m, "quadratic_objective");
  QuasilinearSpec spec;
  spec.dim = m.rows();
  spec.objective = [m](const Vector& y) { return -0.5 * dot(y, m * y); };
  spec.gradient = [m](const Vector& y) { return scaled(m * y, -1.0); };
  spec.label = "quasilinear_quadratic";
  return spec;
}

struct QuasilinearSolve {
  Vector y;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline QuasilinearSolve ascend_with_gradient(const QuasilinearSpec& spec, const Vector& u) {
  const auto& grad_c = *spec.gradient;
  auto ascent = [&](const Vector& y) { return add(u, grad_c(y)); };
  auto feasible = [&](const Vector& y) { return std::isfinite(spec.objective(y)); };

  Vector y(spec.dim, 0.0);
  if (!feasible(y)) throw PreconditionError("quasilinear: objective must be finite at the origin");
  Vector g = ascent(y);
  double step = 1.0;
  int it = 0;
  for (; it < spec.max_iterations && norm_inf(g) > spec.tolerance; ++it) {
    // Derivative of t -> phi(y + t g) is g(y + t g) . g; it decreases in t for concave phi.
    auto ahead = [&](double t) {
      const Vector trial = axpy(y, t, g);
      if (!feasible(trial)) return -1.0;
      return dot(ascent(trial), g);
    };
    double t = step;
    if (ahead(t) >= 0.0) {
      while (t < 1e12 && ahead(2.0 * t) >= 0.0) t *= 2.0;
    } else {
      while (t > 1e-300 && ahead(t) < 0.0) t *= 0.5;
      if (!(t > 1e-300)) break;
    }
    y = axpy(y, t, g);
    g = ascent(y);
    step = t;
  }
  return {y, norm_inf(g), it};
}

inline QuasilinearSolve compass_search(const QuasilinearSpec& spec, const Vector& u) {
  auto phi = [&](const Vector& y) { return dot(u, y) + spec.objective(y); };
  Vector y(spec.dim, 0.0);
  double best = phi(y);
  if (!std::isfinite(best)) throw PreconditionError("quasilinear: objective must be finite at the origin");
  double step = 1.0;
  int it = 0;
  for (; it < spec.max_iterations && step > spec.tolerance; ++it) {
    bool improved = false;
    for (std::size_t k = 0; k < spec.dim; ++k) {
      for (double sign : {1.0, -1.0}) {
        Vector trial = y;
        trial[k] += sign * step;
        const double val = phi(trial);
        if (val > best) {
          best = val;
          y = std::move(trial);
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {y, step, it};
}

}  // namespace detail

/// Runs the inner concave maximizer at u. Throws ConvergenceError when the
/// iteration cap is hit with the residual above tolerance.
inline QuasilinearSolve solve_quasilinear(const QuasilinearSpec& spec, const Vector& u) {
  if (u.size() != spec.dim) throw DimensionError("solve_quasilinear: dimension mismatch");
  QuasilinearSolve s = spec.gradient ? detail::ascend_with_gradient(spec, u) : detail::compass_search(spec, u);
  if (s.residual > spec.tolerance)
    throw ConvergenceError("quasilinear inner solver did not converge (residual " + std::to_string(s.residual) +
                           " after " + std::to_string(s.iterations) + " iterations)");
  return s;
}

inline DemandSystem make_quasilinear(QuasilinearSpec spec) {
  if (spec.dim == 0) throw DimensionError("make_quasilinear: dimension must be positive");
  if (!spec.objective) throw PreconditionError("make_quasilinear: missing objective");
  const std::size_t k = spec.dim;
  std::string label = spec.label;
  auto eval = [spec = std::move(spec)](const Vector& u) { return solve_quasilinear(spec, u).y; };
  return DemandSystem(k, eval, std::nullopt, true, std::move(label));
}

/// Worst violation of midpoint concavity over random pairs in [-radius, radius]^K:
/// returns min over pairs of C(mid) - (C(a) + C(b)) / 2 (non-negative for concave C).
inline double concavity_gap(const QuasilinearSpec& spec, std::size_t n_pairs, std::uint64_t seed, double radius) {
  const CounterRng rng(seed);
  double worst = kInf;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Vector a(spec.dim), b(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      a[k] = radius * (2.0 * rng.uniform(streams::kPairSample, i, 2 * k) - 1.0);
      b[k] = radius * (2.0 * rng.uniform(streams::kPairSample, i, 2 * k + 1) - 1.0);
    }
    const double ca = spec.objective(a);
    const double cb = spec.objective(b);
    if (!std::isfinite(ca) || !std::isfinite(cb)) continue;
    const Vector mid = scaled(add(a, b), 0.5);
    worst = std::min(worst, spec.objective(mid) - 0.5 * (ca + cb));
  }
  return worst;
}

// ---- change of variables ---------------------------------------------------

/// Strictly increasing continuous map of one coordinate. `derivative` is empty
/// when the map is not differentiable everywhere (e.g. the cube root at 0).
struct CoordinateMap {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> derivative;

  static CoordinateMap identity() {
    return {"identity", [](double v) { return v; }, [](double) { return 1.0; }};
  }
  static CoordinateMap cube() {
    return {"cube", [](double v) { return v * v * v; }, [](double v) { return 3.0 * v * v; }};
  }
  static CoordinateMap cube_root() { return {"cube_root", [](double v) { return std::cbrt(v); }, {}}; }
  static CoordinateMap affine(double slope, double intercept) {
    if (!(slope > 0.0) || !std::isfinite(slope) || !std::isfinite(intercept))
      throw PreconditionError("affine coordinate map needs a finite positive slope");
    return {"affine", [slope, intercept](double v) { return slope * v + intercept; },
            [slope](double) { return slope; }};
  }
  static CoordinateMap scale(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw PreconditionError("scale coordinate map needs a finite positive factor");
    return {"scale", [c](double v) { return c * v; }, [c](double) { return c; }};
  }
};

/// Q~(u) = Q(f(u)) with f applied coordinate-wise. A single map is broadcast to
/// every coordinate. The Jacobian is composed by the chain rule only when the
/// inner system and every coordinate map are differentiable.
inline DemandSystem transform(const DemandSystem& inner, std::vector<CoordinateMap> maps) {
  if (maps.size() == 1 && inner.dim() > 1) maps.assign(inner.dim(), maps.front());
  if (maps.size() != inner.dim()) throw DimensionError("transform: need one coordinate map per dimension");

  auto apply = [maps](const Vector& u) {
    Vector v(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) v[k] = maps[k].value(u[k]);
    return v;
  };
  auto eval = [inner, apply](const Vector& u) { return inner.eval(apply(u)); };

  const bool differentiable =
      inner.has_jacobian() && std::all_of(maps.begin(), maps.end(), [](const auto& m) { return bool(m.derivative); });
  std::optional<JacobianFn> jac;
  if (differentiable) {
    jac = [inner, apply, maps](const Vector& u) {
      Matrix j = *inner.analytic_jacobian(apply(u));
      for (std::size_t c = 0; c < j.cols(); ++c) {
        const double d = maps[c].derivative(u[c]);
        for (std::size_t r = 0; r < j.rows(); ++r) j(r, c) *= d;
      }
      return j;
    };
  }
  std::string label = "transform(" + inner.label() + ")";
  return DemandSystem(inner.dim(), eval, std::move(jac), inner.continuous(), std::move(label));
}

// ---- additive random utility -----------------------------------------------

enum class ShockDistribution { gumbel, normal, table };

struct ShockModel {
  ShockDistribution distribution = ShockDistribution::gumbel;
  std::vector<Vector> table;  // rows of taste shocks, used by ShockDistribution::table
};

struct ArumDraw {
  Vector epsilon;
  ShockDistribution distribution = ShockDistribution::gumbel;
};

/// Draw number `index` of the shock sequence for `seed`. The draw depends only
/// on (seed, index), never on u, so different u share common random numbers.
inline ArumDraw arum_draw(const ShockModel& model, std::size_t k, std::uint64_t seed, std::uint64_t index) {
  const CounterRng rng(seed);
  ArumDraw d{Vector(k), model.distribution};
  switch (model.distribution) {
    case ShockDistribution::gumbel:
      // The outside good carries its own shock on lane k; differencing it out
      // keeps the outside utility at 0 and makes choice probabilities logit.
      {
        const double outside = rng.gumbel(streams::kArumDraw, index, k);
        for (std::size_t j = 0; j < k; ++j) d.epsilon[j] = rng.gumbel(streams::kArumDraw, index, j) - outside;
      }
      break;
    case ShockDistribution::normal:
      for (std::size_t j = 0; j < k; ++j) d.epsilon[j] = rng.normal(streams::kArumDraw, index, j);
      break;
    case ShockDistribution::table: {
      if (model.table.empty()) throw PreconditionError("arum_draw: shock table is empty");
      const auto& row = model.table[rng.bits(streams::kArumDraw, index) % model.table.size()];
      if (row.size() != k) throw DimensionError("arum_draw: shock table row has wrong dimension");
      d.epsilon = row;
      break;
    }
  }
  return d;
}

/// Indicator of the chosen inside good, or the zero vector when the outside
/// good (utility 0) is weakly best. Ties among inside goods go to the lowest
/// index; an inside good must beat the outside good strictly.
inline Vector arum_individual(const Vector& u, const ArumDraw& draw) {
  if (u.size() != draw.epsilon.size()) throw DimensionError("arum_individual: dimension mismatch");
  Vector choice(u.size(), 0.0);
  std::size_t best = 0;
  double best_value = -kInf;
  for (std::size_t j = 0; j < u.size(); ++j) {
    const double v = u[j] + draw.epsilon[j];
    if (v > best_value) {
      best_value = v;
      best = j;
    }
  }
  if (best_value > 0.0) choice[best] = 1.0;
  return choice;
}

// Per-good choice counts over draws 0..n_draws-1.
inline std::vector<std::uint64_t> arum_counts(const Vector& u, std::size_t n_draws, std::uint64_t seed,
                                              const ShockModel& model = {}) {
  if (n_draws == 0) throw PreconditionError("arum_simulate: n_draws must be at least 1");
  std::vector<std::uint64_t> counts(u.size(), 0);
  for (std::size_t i = 0; i < n_draws; ++i) {
    const Vector d = arum_individual(u, arum_draw(model, u.size(), seed, i));
    for (std::size_t j = 0; j < u.size(); ++j) counts[j] += d[j] > 0.0 ? 1 : 0;
  }
  return counts;
}

inline Vector arum_simulate(const Vector& u, std::size_t n_draws, std::uint64_t seed, const ShockModel& model = {}) {
  const auto counts = arum_counts(u, n_draws, seed, model);
  Vector q(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) q[j] = static_cast<double>(counts[j]) / static_cast<double>(n_draws);
  return q;
}

// Empirical ARUM demand with a fixed draw sequence. Piecewise constant in u,
// so it is flagged as not continuous.
inline DemandSystem make_arum_mc(std::size_t k, std::size_t n_draws, std::uint64_t seed, ShockModel model = {}) {
  if (k == 0) throw DimensionError("make_arum_mc: K must be at least 1");
  if (n_draws == 0) throw PreconditionError("make_arum_mc: n_draws must be at least 1");
  auto eval = [n_draws, seed, model = std::move(model)](const Vector& u) {
    return arum_simulate(u, n_draws, seed, model);
  };
  return DemandSystem(k, eval, std::nullopt, false, "arum_mc");
}

}  // namespace demandlens
