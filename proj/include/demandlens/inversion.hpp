#pragma once

// Solving Q(u) = y for monotone continuous demand systems, with detection of
// non-singleton (segment-containing) solution sets.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demandlens/demand_systems.hpp"
#include "demandlens/diagnostics.hpp"
#include "demandlens/differential.hpp"
#include "demandlens/domain.hpp"
#include "demandlens/errors.hpp"
#include "demandlens/linalg.hpp"

namespace demandlens {

enum class Multiplicity { unique_at_resolution, segment_found };
enum class InversionMethod { residual_iteration, gauss_newton, closed_form };

inline const char* to_string(Multiplicity m) {
  return m == Multiplicity::unique_at_resolution ? "unique_at_resolution" : "segment_found";
}

inline const char* to_string(InversionMethod m) {
  switch (m) {
    case InversionMethod::residual_iteration: return "residual_iteration";
    case InversionMethod::gauss_newton: return "gauss_newton";
    case InversionMethod::closed_form: return "closed_form";
  }
  return "unknown";
}

struct InversionResult {
  Vector solution;
  double residual_norm = 0.0;  // ||Q(solution) - y||_inf
  int iterations = 0;
  Multiplicity multiplicity = Multiplicity::unique_at_resolution;
  std::optional<ConstancySegment> segment;
  InversionMethod method = InversionMethod::residual_iteration;
  std::vector<double> residual_trace;  // ||y - Q(u)||_2 after each accepted step, starting at u0
};

struct InversionOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  bool detect_multiplicity = true;
  ConstancyOptions constancy;
};

// Carries the best iterate reached before giving up.
class InversionFailure : public ConvergenceError {
 public:
  InversionFailure(const std::string& what, Vector best, double residual)
      : ConvergenceError(what), best_iterate(std::move(best)), residual(residual) {}

  Vector best_iterate;
  double residual;
};

namespace detail {

// Least-squares step solving J delta = r, dropping directions whose squared
// singular value is below 1e-14 of the largest.
inline std::optional<Vector> pseudo_inverse_step(const Matrix& j, const Vector& r) {
  const SymmetricEigen eig = eigen_symmetric(j.transposed() * j);
  const double top = eig.values.back();
  if (!(top > 0.0)) return std::nullopt;
  const Vector g = j.transposed() * r;
  Vector delta(r.size(), 0.0);
  for (std::size_t c = 0; c < eig.values.size(); ++c) {
    if (eig.values[c] <= 1e-14 * top) continue;
    const Vector v = eig.vectors.column(c);
    delta = axpy(delta, dot(v, g) / eig.values[c], v);
  }
  return delta;
}

}  // namespace detail

/// Solves Q(u) = y from u0.
///
/// Damped residual iteration u <- u + alpha (y - Q(u)) runs first, with
/// alpha starting at 1 / ||J(u0)||_2, halved on rejection (residual increase or
/// domain exit) and grown 1.2x on acceptance. When it converges, stalls or keeps
/// running into the boundary, a
/// Gauss-Newton polish with backtracking takes over. Accepted steps never
/// increase ||y - Q(u)||_2. On success the solution is probed for a constancy
/// segment, which marks a non-singleton solution set.
inline InversionResult invert(const DemandSystem& system, const Domain& domain, const Vector& y, const Vector& u0,
                              const InversionOptions& opts = {}) {
  if (!system.continuous()) throw PreconditionError("invert: system is flagged as not continuous");
  if (y.size() != system.dim() || u0.size() != system.dim() || domain.dim() != system.dim())
    throw DimensionError("invert: target, start, system and domain dimensions differ");
  if (!contains(domain, u0)) throw DomainError("invert: start point is outside the domain");

  InversionResult res;
  Vector u = u0;
  Vector r = subtract(y, system.eval(u));
  double rn = norm2(r);
  res.residual_trace.push_back(rn);
  int it = 0;
  bool domain_blocked = false;

  double lipschitz = 0.0;
  try {
    const Matrix j = jacobian(system, u0, domain).entries;
    lipschitz = std::sqrt(std::max(0.0, eigen_symmetric(j.transposed() * j).values.back()));
  } catch (const DomainError&) {
  }
  const double alpha0 = lipschitz > 1e-12 ? 1.0 / lipschitz : 1.0;
  double alpha = alpha0;

  // Phase 1: stop on convergence, step collapse, or a window of weak progress.
  constexpr std::size_t kWindow = 25;
  // The residual direction of a non-symmetric map can point out of the domain
  // even when the solution is interior, so a handful of boundary hits hands
  // over to Gauss-Newton before the iterate creeps onto the boundary.
  constexpr int kMaxBoundaryHits = 8;
  std::deque<double> window{rn};
  int boundary_hits = 0;
  while (it < opts.max_iter && norm_inf(r) > opts.tol) {
    ++it;
    const Vector cand = axpy(u, alpha, r);
    if (!contains(domain, cand)) {
      domain_blocked = true;
      alpha *= 0.5;
      if (++boundary_hits >= kMaxBoundaryHits || alpha < 1e-14 * alpha0) break;
      continue;
    }
    const Vector rc = subtract(y, system.eval(cand));
    const double rcn = norm2(rc);
    if (rcn < rn) {
      u = cand;
      r = rc;
      rn = rcn;
      domain_blocked = false;
      res.residual_trace.push_back(rn);
      alpha *= 1.2;
      window.push_back(rn);
      if (window.size() > kWindow) {
        window.pop_front();
        if (window.back() > 0.9 * window.front()) break;
      }
    } else {
      alpha *= 0.5;
      if (alpha < 1e-14 * alpha0) break;
    }
  }

  // Phase 2: Gauss-Newton polish.
  bool polished = false;
  while (it < opts.max_iter && norm_inf(r) > opts.tol) {
    ++it;
    Matrix j;
    try {
      j = jacobian(system, u, domain).entries;
    } catch (const DomainError&) {
      domain_blocked = true;
      break;
    }
    const auto delta = detail::pseudo_inverse_step(j, r);
    if (!delta) break;
    bool accepted = false;
    double t = 1.0;
    for (int halving = 0; halving < 60 && !accepted; ++halving, t *= 0.5) {
      const Vector cand = axpy(u, t, *delta);
      if (!contains(domain, cand)) {
        domain_blocked = true;
        continue;
      }
      const Vector rc = subtract(y, system.eval(cand));
      const double rcn = norm2(rc);
      if (rcn < rn) {
        u = cand;
        r = rc;
        rn = rcn;
        accepted = true;
        domain_blocked = false;
        res.residual_trace.push_back(rn);
      }
    }
    if (!accepted) break;
    polished = true;
  }

  res.solution = u;
  res.residual_norm = norm_inf(r);
  res.iterations = it;
  res.method = polished ? InversionMethod::gauss_newton : InversionMethod::residual_iteration;
  if (res.residual_norm > opts.tol) {
    const std::string msg = "invert: residual " + detail::format_number(res.residual_norm) + " above tolerance " +
                            detail::format_number(opts.tol) + " after " + std::to_string(it) + " iterations";
    if (domain_blocked) throw DomainError(msg + " (iterates were blocked by the domain boundary)");
    throw InversionFailure(msg, u, res.residual_norm);
  }
  if (opts.detect_multiplicity) {
    try {
      res.segment = find_constancy_segment(system, domain, u, opts.constancy);
    } catch (const DomainError&) {
      res.segment.reset();
    }
    if (res.segment) res.multiplicity = Multiplicity::segment_found;
  }
  return res;
}

/// Closed-form inverse of the logit shares: u_k = ln q_k - ln(1 - sum_j q_j).
inline Vector invert_logit(const Vector& q) {
  if (q.empty()) throw DimensionError("invert_logit: empty share vector");
  double total = 0.0;
  for (double x : q) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("invert_logit: shares must be strictly positive");
    total += x;
  }
  if (!(total < 1.0)) throw DomainError("invert_logit: shares must leave positive mass on the outside good");
  const double outside = std::log1p(-total);
  Vector u(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) u[k] = std::log(q[k]) - outside;
  return u;
}

enum class QuasilinearInverseStatus { unique, unsupported };

struct QuasilinearInverse {
  QuasilinearInverseStatus status = QuasilinearInverseStatus::unique;
  Vector u;                          // -grad C(y)
  double round_trip_error = 0.0;     // ||Q(u) - y||_inf
  std::vector<Interval> preimage_bounds;  // per coordinate [-C'_-(y), -C'_+(y)]; degenerate when C is smooth
  std::vector<std::string> notes;
};

/// Inverse of a quasilinear demand at y, u = -grad C(y).
///
/// The preimage of y is the set of u with -u a supergradient of C at y, so it
/// is a singleton exactly when C is differentiable there. One-sided difference
/// quotients at two step sizes tell a kink (gap persists) from curvature (gap
/// halves with the step). A kink, or a failed round trip through the inner
/// solver, yields `unsupported`. Throws PreconditionError without a gradient.
inline QuasilinearInverse invert_quasilinear(const QuasilinearSpec& spec, const Vector& y, double tol = 1e-6) {
  if (!spec.gradient) throw PreconditionError("invert_quasilinear: the objective has no gradient");
  if (y.size() != spec.dim) throw DimensionError("invert_quasilinear: target has wrong dimension");
  const double cy = spec.objective(y);
  if (!std::isfinite(cy)) throw DomainError("invert_quasilinear: objective is not finite at the target");

  QuasilinearInverse out;
  out.u = scaled((*spec.gradient)(y), -1.0);
  const double grad_scale = std::max(1.0, norm_inf(out.u));

  bool kink = false;
  for (std::size_t k = 0; k < spec.dim; ++k) {
    auto one_sided = [&](double h) {
      Vector up = y, down = y;
      up[k] += h;
      down[k] -= h;
      const double right = (spec.objective(up) - cy) / h;
      const double left = (cy - spec.objective(down)) / h;
      return std::pair{left, right};
    };
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(y[k]));
    const auto [left, right] = one_sided(h);
    const auto [left_half, right_half] = one_sided(0.5 * h);
    const double gap = left - right;
    const double gap_half = left_half - right_half;
    const bool persistent = gap > 1e-6 * grad_scale && gap_half > 0.75 * gap;
    if (persistent) {
      kink = true;
      out.preimage_bounds.push_back({-left_half, -right_half});
      out.notes.push_back("objective is not differentiable at the target in coordinate " + std::to_string(k) +
                          "; the preimage is an interval there");
    } else {
      out.preimage_bounds.push_back({out.u[k], out.u[k]});
    }
  }

  try {
    out.round_trip_error = max_abs_diff(solve_quasilinear(spec, out.u).y, y);
  } catch (const ConvergenceError& e) {
    out.round_trip_error = kInf;
    out.notes.emplace_back(e.what());
  }
  if (out.round_trip_error > tol * std::max(1.0, norm_inf(y))) {
    out.notes.emplace_back("round trip through the inner solver missed the target");
    kink = true;
  }
  out.status = kink ? QuasilinearInverseStatus::unsupported : QuasilinearInverseStatus::unique;
  return out;
}

}  // namespace demandlens
