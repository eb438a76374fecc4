#pragma once

// Open convex domains: an axis-aligned open box (infinite bounds allowed)
// intersected with finitely many open half-spaces a.u < c.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "demandlens/errors.hpp"
#include "demandlens/linalg.hpp"
#include "demandlens/random.hpp"

namespace demandlens {

struct HalfSpace {
  Vector normal;
  double offset = 0.0;  // constraint: normal . u < offset

  friend bool operator==(const HalfSpace&, const HalfSpace&) = default;
};

// Open interval of line parameters.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool empty() const { return !(lo < hi); }
  bool contains(double t) const { return lo < t && t < hi; }
};

class Domain {
 public:
  Domain(Vector lower, Vector upper, std::vector<HalfSpace> halfspaces = {})
      : lower_(std::move(lower)), upper_(std::move(upper)), halfspaces_(std::move(halfspaces)) {
    if (lower_.empty()) throw DimensionError("domain: dimension must be positive");
    if (lower_.size() != upper_.size()) throw DimensionError("domain: lower and upper bounds differ in length");
    for (std::size_t k = 0; k < lower_.size(); ++k) {
      if (std::isnan(lower_[k]) || std::isnan(upper_[k]))
        throw PreconditionError("domain: NaN bound in coordinate " + std::to_string(k));
      if (!(lower_[k] < upper_[k]))
        throw PreconditionError("domain: lower bound must be below upper bound in coordinate " + std::to_string(k));
    }
    for (const auto& h : halfspaces_) {
      if (h.normal.size() != lower_.size()) throw DimensionError("domain: half-space normal has wrong dimension");
      for (double a : h.normal)
        if (!std::isfinite(a)) throw PreconditionError("domain: half-space normal must be finite");
      if (!std::isfinite(h.offset)) throw PreconditionError("domain: half-space offset must be finite");
    }
  }

  // Open box with the same bounds on every coordinate.
  static Domain cube(std::size_t dim, double lo, double hi) { return Domain(Vector(dim, lo), Vector(dim, hi)); }

  static Domain whole_space(std::size_t dim) { return cube(dim, -kInf, kInf); }

  std::size_t dim() const { return lower_.size(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const std::vector<HalfSpace>& halfspaces() const { return halfspaces_; }

  bool bounded() const {
    for (std::size_t k = 0; k < dim(); ++k)
      if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k])) return false;
    return true;
  }

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  Vector lower_;
  Vector upper_;
  std::vector<HalfSpace> halfspaces_;
};

// Strict membership; every boundary is excluded.
inline bool contains(const Domain& domain, std::span<const double> u) {
  if (u.size() != domain.dim()) throw DimensionError("contains: point has dimension " + std::to_string(u.size()) +
                                                     ", domain has " + std::to_string(domain.dim()));
  for (std::size_t k = 0; k < u.size(); ++k)
    if (!(domain.lower()[k] < u[k] && u[k] < domain.upper()[k])) return false;
  for (const auto& h : domain.halfspaces())
    if (!(dot(h.normal, u) < h.offset)) return false;
  return true;
}

/// Maximal open interval of lambda such that u + lambda * v stays in the domain.
///
/// The base point must be inside the domain, so the interval always contains
/// zero. A zero direction gives the whole real line.
inline Interval clip_segment(const Domain& domain, std::span<const double> u, std::span<const double> v) {
  if (v.size() != domain.dim()) throw DimensionError("clip_segment: direction has wrong dimension");
  if (!contains(domain, u)) throw DomainError("clip_segment: base point is outside the domain");

  Interval out{-kInf, kInf};
  auto tighten = [&out](double slope, double room) {
    // constraint: slope * lambda < room, with room > 0 at lambda = 0
    if (slope > 0.0) {
      out.hi = std::min(out.hi, room / slope);
    } else if (slope < 0.0) {
      out.lo = std::max(out.lo, room / slope);
    }
  };
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (std::isfinite(domain.upper()[k])) tighten(v[k], domain.upper()[k] - u[k]);
    if (std::isfinite(domain.lower()[k])) tighten(-v[k], u[k] - domain.lower()[k]);
  }
  for (const auto& h : domain.halfspaces()) tighten(dot(h.normal, v), h.offset - dot(h.normal, u));
  return out;
}

// Closed parameter range of a line segment through `base` along unit `direction`.
struct Segment {
  Vector base;
  Vector direction;
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;

  Vector point(double lambda) const { return axpy(base, lambda, direction); }
  Vector start() const { return point(lambda_lo); }
  Vector end() const { return point(lambda_hi); }
  double length() const { return (lambda_hi - lambda_lo) * norm2(direction); }
};

/// Deterministic uniform pseudo-random points in the domain.
///
/// Infinite bounds are replaced by -bound / +bound for sampling only. Points
/// are drawn by rejection against the half-spaces; point i depends only on
/// (seed, stream, i), so sample_points(n, seed) is always a prefix of
/// sample_points(n + m, seed). Throws PreconditionError for n == 0 and
/// DomainError when the truncated region is empty (or too thin to hit).
inline std::vector<Vector> sample_points(const Domain& domain, std::size_t n, std::uint64_t seed, double bound = 10.0,
                                         std::uint64_t stream = streams::kDomainSample,
                                         std::size_t first_index = 0) {
  if (n == 0) throw PreconditionError("sample_points: n must be at least 1");
  if (!(bound > 0.0)) throw PreconditionError("sample_points: bound must be positive");

  const std::size_t dim = domain.dim();
  Vector lo(dim), hi(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    lo[k] = std::isfinite(domain.lower()[k]) ? domain.lower()[k] : -bound;
    hi[k] = std::isfinite(domain.upper()[k]) ? domain.upper()[k] : bound;
    if (!std::isfinite(domain.lower()[k]) || !std::isfinite(domain.upper()[k])) {
      lo[k] = std::max(lo[k], -bound);
      hi[k] = std::min(hi[k], bound);
    }
    if (!(lo[k] < hi[k]))
      throw DomainError("sample_points: effective sampling region is empty in coordinate " + std::to_string(k));
  }

  constexpr std::size_t kMaxAttempts = 4096;
  const CounterRng rng(seed);
  std::vector<Vector> points;
  points.reserve(n);
  Vector u(dim);
  for (std::size_t i = first_index; i < first_index + n; ++i) {
    bool found = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = rng.uniform(stream, i, attempt * dim + k);
        u[k] = lo[k] + t * (hi[k] - lo[k]);
      }
      found = contains(domain, u);
    }
    if (!found) throw DomainError("sample_points: effective sampling region is empty or too thin to sample");
    points.push_back(u);
  }
  return points;
}

}  // namespace demandlens
