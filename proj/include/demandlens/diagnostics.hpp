#pragma once

// Sampling diagnostics for monotonicity and injectivity properties of demand
// systems. Each returns a Verdict: a violation always carries concrete
// witnesses; a pass only means nothing was falsified at the sampled resolution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "demandlens/demand_systems.hpp"
#include "demandlens/differential.hpp"
#include "demandlens/domain.hpp"
#include "demandlens/errors.hpp"
#include "demandlens/linalg.hpp"
#include "demandlens/random.hpp"

namespace demandlens {

enum class Status { pass, violation, inconclusive };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::violation: return "violation";
    case Status::inconclusive: return "inconclusive";
  }
  return "unknown";
}

/// Concrete evidence against a property. `magnitude` is the signed quantity the
/// diagnostic tests, recomputable from the stored points (see replay_magnitude).
struct Witness {
  Vector u;
  std::optional<Vector> u_tilde;
  std::optional<Vector> q_u;
  std::optional<Vector> q_u_tilde;
  std::optional<Vector> direction;
  std::optional<Vector> target;
  double magnitude = 0.0;

  friend bool operator==(const Witness&, const Witness&) = default;
};

struct Verdict {
  std::string diagnostic_name;
  Status status = Status::inconclusive;
  std::vector<Witness> witnesses;
  std::size_t samples_used = 0;
  std::map<std::string, double> tolerances;
  std::map<std::string, double> statistics;
  std::vector<std::string> notes;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct ConstancySegment {
  Segment segment;
  double max_deviation = 0.0;
};

namespace diagnostic_names {
inline constexpr std::string_view law_of_demand = "check_law_of_demand";
inline constexpr std::string_view quasi_definite = "check_quasi_definite_everywhere";
inline constexpr std::string_view injectivity = "check_injectivity";
inline constexpr std::string_view local_injectivity = "check_local_injectivity_at";
inline constexpr std::string_view jacobian_invertible = "check_jacobian_invertible";
inline constexpr std::string_view own_good = "check_own_good_monotonicity";
inline constexpr std::string_view weak_substitutability = "check_weak_substitutability";
inline constexpr std::string_view inverse_isotonicity = "check_inverse_isotonicity";
inline constexpr std::string_view p_function = "check_p_function";
inline constexpr std::string_view preimage_convexity = "check_preimage_convexity";
}  // namespace diagnostic_names

inline constexpr const char* kSamplingCaveat = "no violation found at sampling resolution; this is not a proof";

// Relative default tolerances; each is multiplied by the sampled scale max(1, max ||Q||_inf).
namespace default_tolerance {
inline constexpr double law_of_demand = 1e-9;
inline constexpr double constancy = 1e-7;
inline constexpr double null_singular_value = 1e-6;
inline constexpr double strict_margin = 1e-12;
}  // namespace default_tolerance

struct SamplingOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double bound = 10.0;                                  // truncation of unbounded coordinates
  std::optional<double> tol;                            // absolute override of the relative default
  std::vector<std::pair<Vector, Vector>> probe_pairs;   // always checked, always reported if violating
  std::vector<Vector> probe_points;
  std::size_t max_witnesses = 10;
  double max_perturbation = 1.0;                        // cap on delta for coordinate perturbations
};

struct ConstancyOptions {
  std::optional<double> tol_const;  // absolute; default 1e-7 * scale
  double tol_null = default_tolerance::null_singular_value;
  double max_extent = 1.0;
  double initial_step = 0.0;        // 0 selects 1e-3 * max_extent
};

namespace detail {

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string format_vector(const Vector& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_number(v[i]);
  }
  return s + ")";
}

inline double sampled_scale(const std::vector<Vector>& values) {
  double s = 1.0;
  for (const auto& q : values) s = std::max(s, norm_inf(q));
  return s;
}

// Keeps the `keep` most severe witnesses, most severe first. Ties keep sample order.
inline void keep_worst(std::vector<Witness>& w, std::size_t keep, bool smaller_is_worse) {
  std::stable_sort(w.begin(), w.end(), [smaller_is_worse](const Witness& a, const Witness& b) {
    return smaller_is_worse ? a.magnitude < b.magnitude : a.magnitude > b.magnitude;
  });
  if (w.size() > keep) w.resize(keep);
}

inline void finish(Verdict& v, std::vector<Witness> probe_witnesses, std::vector<Witness> sampled, std::size_t keep,
                   bool smaller_is_worse) {
  keep = std::max<std::size_t>(keep, 1);
  keep_worst(sampled, keep > probe_witnesses.size() ? keep - probe_witnesses.size() : 0, smaller_is_worse);
  v.witnesses = std::move(probe_witnesses);
  v.witnesses.insert(v.witnesses.end(), sampled.begin(), sampled.end());
  v.status = v.witnesses.empty() ? Status::pass : Status::violation;
  if (v.status == Status::pass) v.notes.emplace_back(kSamplingCaveat);
}

inline Verdict inconclusive(std::string_view name, std::string reason) {
  Verdict v;
  v.diagnostic_name = std::string(name);
  v.status = Status::inconclusive;
  v.notes.push_back(std::move(reason));
  return v;
}

inline void require_points_inside(const Domain& domain, const std::vector<Vector>& pts, const char* what) {
  for (const auto& p : pts)
    if (!contains(domain, p)) throw DomainError(std::string(what) + ": probe point " + format_vector(p) +
                                                " is outside the domain");
}

inline std::vector<std::pair<Vector, Vector>> sampled_pairs(const Domain& domain, const SamplingOptions& opts) {
  std::vector<std::pair<Vector, Vector>> pairs;
  if (opts.n == 0) return pairs;
  const auto pts = sample_points(domain, 2 * opts.n, opts.seed, opts.bound, streams::kPairSample);
  pairs.reserve(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) pairs.emplace_back(pts[2 * i], pts[2 * i + 1]);
  return pairs;
}

inline std::vector<Vector> sampled_points(const Domain& domain, const SamplingOptions& opts) {
  std::vector<Vector> pts = opts.probe_points;
  if (opts.n > 0) {
    auto s = sample_points(domain, opts.n, opts.seed, opts.bound, streams::kDomainSample);
    pts.insert(pts.end(), s.begin(), s.end());
  }
  return pts;
}

// A base point, a coordinate k and a positive step delta with u + delta e_k in the domain.
struct Perturbation {
  Vector u;
  Vector u_plus;
  std::size_t k = 0;
};

inline std::vector<Perturbation> sampled_perturbations(const Domain& domain, const SamplingOptions& opts) {
  std::vector<Perturbation> out;
  if (opts.n == 0) return out;
  const auto pts = sample_points(domain, opts.n, opts.seed, opts.bound, streams::kPerturbation);
  const CounterRng rng(opts.seed);
  const std::size_t dim = domain.dim();
  out.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Perturbation p{pts[i], pts[i], static_cast<std::size_t>(rng.bits(streams::kPerturbation, i, 1) % dim)};
    Vector e(dim, 0.0);
    e[p.k] = 1.0;
    const Interval room = clip_segment(domain, p.u, e);
    const double reach = std::min(room.hi, opts.max_perturbation);
    double delta = reach * (0.05 + 0.95 * rng.uniform(streams::kPerturbation, i, 2));
    p.u_plus[p.k] = p.u[p.k] + delta;
    while (!contains(domain, p.u_plus) || !(p.u_plus[p.k] > p.u[p.k])) {
      delta *= 0.5;
      p.u_plus[p.k] = p.u[p.k] + delta;
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::size_t dominant_index(const Vector& direction) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < direction.size(); ++i)
    if (std::abs(direction[i]) > std::abs(direction[k])) k = i;
  return k;
}

}  // namespace detail

// ---- law of demand ---------------------------------------------------------

/// (Q(u) - Q(u~)) . (u - u~) >= -tol over sampled pairs and every probe pair.
inline Verdict check_law_of_demand(const DemandSystem& system, const Domain& domain, const SamplingOptions& opts) {
  Verdict v;
  v.diagnostic_name = std::string(diagnostic_names::law_of_demand);
  std::vector<Vector> probe_flat;
  for (const auto& [a, b] : opts.probe_pairs) {
    probe_flat.push_back(a);
    probe_flat.push_back(b);
  }
  detail::require_points_inside(domain, probe_flat, "check_law_of_demand");

  const auto pairs = detail::sampled_pairs(domain, opts);
  std::vector<Vector> qa, qb;
  auto eval_all = [&](const auto& list) {
    for (const auto& [a, b] : list) {
      qa.push_back(system.eval(a));
      qb.push_back(system.eval(b));
    }
  };
  eval_all(opts.probe_pairs);
  eval_all(pairs);
  double scale = std::max(detail::sampled_scale(qa), detail::sampled_scale(qb));
  const double tol = opts.tol.value_or(default_tolerance::law_of_demand * scale);
  v.tolerances = {{"law_of_demand", tol}, {"scale", scale}};

  std::vector<Witness> probe_w, sampled_w;
  double min_ip = kInf;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    const bool is_probe = i < opts.probe_pairs.size();
    const auto& [a, b] = is_probe ? opts.probe_pairs[i] : pairs[i - opts.probe_pairs.size()];
    const double ip = dot(subtract(qa[i], qb[i]), subtract(a, b));
    min_ip = std::min(min_ip, ip);
    if (is_probe)
      v.notes.push_back("probe pair u=" + detail::format_vector(a) + ", u~=" + detail::format_vector(b) +
                        ": Q(u)=" + detail::format_vector(qa[i]) + ", Q(u~)=" + detail::format_vector(qb[i]) +
                        ", inner product " + detail::format_number(ip));
    if (ip < -tol) {
      Witness w{a, b, qa[i], qb[i], std::nullopt, std::nullopt, ip};
      (is_probe ? probe_w : sampled_w).push_back(std::move(w));
    }
  }
  v.samples_used = qa.size();
  if (!qa.empty()) v.statistics["min_inner_product"] = min_ip;
  v.statistics["violating_pairs"] = static_cast<double>(probe_w.size() + sampled_w.size());
  detail::finish(v, std::move(probe_w), std::move(sampled_w), opts.max_witnesses, true);
  return v;
}

// ---- Jacobian definiteness -------------------------------------------------

/// Weak quasi-definiteness of J(u) at sampled points (probe points first).
/// `opts.tol` overrides the PSD tolerance (default 1e-8, scaled per matrix).
inline Verdict check_quasi_definite_everywhere(const DemandSystem& system, const Domain& domain,
                                               const SamplingOptions& opts, JacobianOptions jopts = {}) {
  const auto name = diagnostic_names::quasi_definite;
  if (!system.continuous())
    return detail::inconclusive(name, "system is flagged as not continuous; Jacobian-based reasoning does not apply");
  detail::require_points_inside(domain, opts.probe_points, "check_quasi_definite_everywhere");

  Verdict v;
  v.diagnostic_name = std::string(name);
  const double tol = opts.tol.value_or(kDefaultPsdTolerance);
  v.tolerances = {{"psd", tol}};
  const auto pts = detail::sampled_points(domain, opts);
  std::vector<Witness> probe_w, sampled_w;
  double min_eig = kInf, max_eig = -kInf;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    JacobianMatrix j;
    try {
      j = jacobian(system, pts[i], domain, jopts);
    } catch (const DomainError&) {
      ++skipped;
      continue;
    }
    const DefinitenessVerdict d = is_weakly_quasi_definite(j.entries, tol);
    min_eig = std::min(min_eig, d.min_symmetric_eigenvalue);
    max_eig = std::max(max_eig, d.min_symmetric_eigenvalue);
    if (d.classification == Definiteness::indefinite) {
      Witness w;
      w.u = pts[i];
      w.q_u = system.eval(pts[i]);
      w.magnitude = d.min_symmetric_eigenvalue;
      (i < opts.probe_points.size() ? probe_w : sampled_w).push_back(std::move(w));
    }
  }
  v.samples_used = pts.size() - skipped;
  if (v.samples_used == 0)
    return detail::inconclusive(name, "no sampled point admitted a Jacobian evaluation inside the domain");
  v.statistics = {{"min_eigenvalue", min_eig}, {"max_of_min_eigenvalues", max_eig},
                  {"points_skipped", static_cast<double>(skipped)}};
  detail::finish(v, std::move(probe_w), std::move(sampled_w), opts.max_witnesses, true);
  return v;
}

// ---- constancy segments ----------------------------------------------------

/// Searches for a non-degenerate segment through u along which Q is constant.
///
/// Candidate directions are the null directions of J(u). Along each, the march
/// goes outward in both senses with doubling steps (halved on failure, down to
/// the initial step), requiring ||Q(p) - Q(u)||_inf <= tol_const and
/// ||Q'(p, v)||_inf <= tol_null at every visited p. The longest segment of
/// length at least 10 initial steps is returned.
inline std::optional<ConstancySegment> find_constancy_segment(const DemandSystem& system, const Domain& domain,
                                                              const Vector& u, const ConstancyOptions& opts = {}) {
  if (!contains(domain, u)) throw DomainError("find_constancy_segment: base point is outside the domain");
  const Vector q0 = system.eval(u);
  const double tol_const = opts.tol_const.value_or(default_tolerance::constancy * std::max(1.0, norm_inf(q0)));
  const double s0 = opts.initial_step > 0.0 ? opts.initial_step : 1e-3 * opts.max_extent;
  const double max_step = std::max(s0, opts.max_extent / 20.0);

  const JacobianMatrix j = jacobian(system, u, domain);
  std::optional<ConstancySegment> best;
  for (const Vector& dir : null_directions(j.entries, opts.tol_null)) {
    const Interval room = clip_segment(domain, u, dir);
    double max_dev = 0.0;
    auto march = [&](double sense) {
      const double edge = sense > 0.0 ? room.hi : -room.lo;
      const double limit = std::min(opts.max_extent, edge * (1.0 - 1e-9));
      double lam = 0.0;
      double step = s0;
      while (lam < limit) {
        const double trial = std::min(lam + step, limit);
        const Vector p = axpy(u, sense * trial, dir);
        bool ok = contains(domain, p);
        double dev = 0.0;
        if (ok) {
          dev = max_abs_diff(system.eval(p), q0);
          ok = dev <= tol_const;
        }
        if (ok) {
          try {
            ok = norm_inf(directional_derivative(system, p, dir, domain)) <= opts.tol_null;
          } catch (const DomainError&) {
            ok = false;
          }
        }
        if (ok) {
          lam = trial;
          max_dev = std::max(max_dev, dev);
          step = std::min(2.0 * step, max_step);
        } else {
          step *= 0.5;
          if (step < s0) break;
        }
      }
      return lam;
    };
    const double hi = march(1.0);
    const double lo = -march(-1.0);
    if (hi - lo >= 10.0 * s0 && (!best || hi - lo > best->segment.length())) {
      best = ConstancySegment{Segment{u, dir, lo, hi}, max_dev};
    }
  }
  return best;
}

namespace detail {

inline Witness segment_witness(const DemandSystem& system, const ConstancySegment& c) {
  Witness w;
  w.u = c.segment.start();
  w.u_tilde = c.segment.end();
  w.q_u = system.eval(w.u);
  w.q_u_tilde = system.eval(*w.u_tilde);
  w.direction = c.segment.direction;
  w.magnitude = norm2(subtract(*w.u_tilde, w.u));
  return w;
}

inline std::optional<Verdict> law_of_demand_precheck(const DemandSystem& system, const Domain& domain,
                                                     const SamplingOptions& opts, std::string_view name) {
  if (!system.continuous())
    return inconclusive(name, "system is flagged as not continuous; the local-to-global equivalence does not apply");
  SamplingOptions pre = opts;
  pre.probe_points.clear();
  pre.tol.reset();
  pre.max_witnesses = 1;
  const Verdict lod = check_law_of_demand(system, domain, pre);
  if (lod.status == Status::violation) {
    const Witness& w = lod.witnesses.front();
    return inconclusive(name, "law-of-demand precheck failed, so segment constancy does not characterize "
                              "injectivity; worst pair u=" + format_vector(w.u) + ", u~=" + format_vector(*w.u_tilde) +
                              " has inner product " + format_number(w.magnitude));
  }
  return std::nullopt;
}

}  // namespace detail

/// Global injectivity via segment constancy, valid for continuous systems that
/// satisfy the law of demand on a convex domain. Returns inconclusive when the
/// law-of-demand precheck fails or the system is not continuous.
inline Verdict check_injectivity(const DemandSystem& system, const Domain& domain, const SamplingOptions& opts,
                                 ConstancyOptions copts = {}) {
  const auto name = diagnostic_names::injectivity;
  if (auto refused = detail::law_of_demand_precheck(system, domain, opts, name)) return *refused;
  detail::require_points_inside(domain, opts.probe_points, "check_injectivity");

  Verdict v;
  v.diagnostic_name = std::string(name);
  const auto pts = detail::sampled_points(domain, opts);
  std::vector<Vector> qs;
  for (const auto& p : pts) qs.push_back(system.eval(p));
  const double scale = detail::sampled_scale(qs);
  if (!copts.tol_const) copts.tol_const = opts.tol.value_or(default_tolerance::constancy * scale);
  v.tolerances = {{"constancy", *copts.tol_const}, {"null_singular_value", copts.tol_null}, {"scale", scale}};

  std::vector<Witness> probe_w, sampled_w;
  std::size_t skipped = 0, singular = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    try {
      if (!null_directions(jacobian(system, pts[i], domain).entries, copts.tol_null).empty()) ++singular;
      if (auto seg = find_constancy_segment(system, domain, pts[i], copts))
        (i < opts.probe_points.size() ? probe_w : sampled_w).push_back(detail::segment_witness(system, *seg));
    } catch (const DomainError&) {
      ++skipped;
    }
  }
  v.samples_used = pts.size() - skipped;
  v.statistics = {{"points_with_null_directions", static_cast<double>(singular)},
                  {"segments_found", static_cast<double>(probe_w.size() + sampled_w.size())},
                  {"points_skipped", static_cast<double>(skipped)}};
  detail::finish(v, std::move(probe_w), std::move(sampled_w), opts.max_witnesses, false);
  return v;
}

/// Singleton preimage at one point: no constancy segment through u.
inline Verdict check_local_injectivity_at(const DemandSystem& system, const Domain& domain, const Vector& u,
                                          const SamplingOptions& opts, ConstancyOptions copts = {}) {
  const auto name = diagnostic_names::local_injectivity;
  if (auto refused = detail::law_of_demand_precheck(system, domain, opts, name)) return *refused;
  Verdict v;
  v.diagnostic_name = std::string(name);
  if (!copts.tol_const && opts.tol) copts.tol_const = opts.tol;
  const auto seg = find_constancy_segment(system, domain, u, copts);
  v.tolerances = {{"constancy", copts.tol_const.value_or(default_tolerance::constancy *
                                                          std::max(1.0, norm_inf(system.eval(u))))},
                  {"null_singular_value", copts.tol_null}};
  v.samples_used = 1;
  std::vector<Witness> w;
  if (seg) w.push_back(detail::segment_witness(system, *seg));
  detail::finish(v, std::move(w), {}, opts.max_witnesses, false);
  return v;
}

/// Invertible-Jacobian route: pass when no sampled point has a null direction;
/// inconclusive otherwise (a singular Jacobian does not by itself refute
/// injectivity). Valid on open, possibly non-convex, domains.
inline Verdict check_jacobian_invertible(const DemandSystem& system, const Domain& domain, const SamplingOptions& opts,
                                         double tol_null = default_tolerance::null_singular_value) {
  const auto name = diagnostic_names::jacobian_invertible;
  if (!system.continuous())
    return detail::inconclusive(name, "system is flagged as not continuous; Jacobian-based reasoning does not apply");
  if (auto refused = detail::law_of_demand_precheck(system, domain, opts, name)) return *refused;
  const auto pts = detail::sampled_points(domain, opts);
  std::size_t singular = 0, skipped = 0;
  std::optional<Vector> first_singular;
  for (const auto& p : pts) {
    try {
      if (!null_directions(jacobian(system, p, domain).entries, tol_null).empty()) {
        ++singular;
        if (!first_singular) first_singular = p;
      }
    } catch (const DomainError&) {
      ++skipped;
    }
  }
  Verdict v;
  v.diagnostic_name = std::string(name);
  v.samples_used = pts.size() - skipped;
  v.tolerances = {{"null_singular_value", tol_null}};
  v.statistics = {{"points_with_null_directions", static_cast<double>(singular)},
                  {"points_skipped", static_cast<double>(skipped)}};
  if (singular > 0) {
    v.status = Status::inconclusive;
    v.notes.push_back("singular Jacobian at " + detail::format_vector(*first_singular) +
                      "; this route cannot decide injectivity there");
  } else {
    v.status = Status::pass;
    v.notes.emplace_back(kSamplingCaveat);
  }
  return v;
}

// ---- gross-substitutes style conditions ------------------------------------

/// Q_k(u + delta e_k) - Q_k(u) > tol for sampled (u, k, delta > 0).
inline Verdict check_own_good_monotonicity(const DemandSystem& system, const Domain& domain,
                                           const SamplingOptions& opts) {
  Verdict v;
  v.diagnostic_name = std::string(diagnostic_names::own_good);
  const auto triples = detail::sampled_perturbations(domain, opts);
  std::vector<Vector> q0, q1;
  for (const auto& t : triples) {
    q0.push_back(system.eval(t.u));
    q1.push_back(system.eval(t.u_plus));
  }
  const double scale = std::max(detail::sampled_scale(q0), detail::sampled_scale(q1));
  const double tol = opts.tol.value_or(default_tolerance::strict_margin * scale);
  v.tolerances = {{"strict_margin", tol}, {"scale", scale}};
  std::vector<Witness> sampled;
  double min_effect = kInf;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const std::size_t k = triples[i].k;
    const double effect = q1[i][k] - q0[i][k];
    min_effect = std::min(min_effect, effect);
    if (effect <= tol) {
      Vector e(system.dim(), 0.0);
      e[k] = 1.0;
      sampled.push_back({triples[i].u, triples[i].u_plus, q0[i], q1[i], e, std::nullopt, effect});
    }
  }
  v.samples_used = triples.size();
  if (!triples.empty()) v.statistics["min_own_effect"] = min_effect;
  detail::finish(v, {}, std::move(sampled), opts.max_witnesses, true);
  return v;
}

/// Q_l(u + delta e_k) <= Q_l(u) + tol for all l != k at sampled (u, k, delta > 0).
inline Verdict check_weak_substitutability(const DemandSystem& system, const Domain& domain,
                                           const SamplingOptions& opts) {
  Verdict v;
  v.diagnostic_name = std::string(diagnostic_names::weak_substitutability);
  const auto triples = detail::sampled_perturbations(domain, opts);
  std::vector<Vector> q0, q1;
  for (const auto& t : triples) {
    q0.push_back(system.eval(t.u));
    q1.push_back(system.eval(t.u_plus));
  }
  const double scale = std::max(detail::sampled_scale(q0), detail::sampled_scale(q1));
  const double tol = opts.tol.value_or(default_tolerance::strict_margin * scale);
  v.tolerances = {{"strict_margin", tol}, {"scale", scale}};
  std::vector<Witness> sampled;
  double max_cross = -kInf;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const std::size_t k = triples[i].k;
    double cross = -kInf;
    for (std::size_t l = 0; l < system.dim(); ++l)
      if (l != k) cross = std::max(cross, q1[i][l] - q0[i][l]);
    max_cross = std::max(max_cross, cross);
    if (cross > tol) {
      Vector e(system.dim(), 0.0);
      e[k] = 1.0;
      sampled.push_back({triples[i].u, triples[i].u_plus, q0[i], q1[i], e, std::nullopt, cross});
    }
  }
  v.samples_used = triples.size();
  if (!triples.empty() && system.dim() > 1) v.statistics["max_cross_effect"] = max_cross;
  detail::finish(v, {}, std::move(sampled), opts.max_witnesses, false);
  return v;
}

/// Q(u) >= Q(u~) - tol componentwise must imply u >= u~ - tol componentwise.
/// Both orders of every sampled and probe pair are tested.
inline Verdict check_inverse_isotonicity(const DemandSystem& system, const Domain& domain,
                                         const SamplingOptions& opts) {
  Verdict v;
  v.diagnostic_name = std::string(diagnostic_names::inverse_isotonicity);
  std::vector<Vector> probe_flat;
  for (const auto& [a, b] : opts.probe_pairs) {
    probe_flat.push_back(a);
    probe_flat.push_back(b);
  }
  detail::require_points_inside(domain, probe_flat, "check_inverse_isotonicity");
  auto pairs = opts.probe_pairs;
  const auto sampled_pairs = detail::sampled_pairs(domain, opts);
  pairs.insert(pairs.end(), sampled_pairs.begin(), sampled_pairs.end());

  std::vector<Vector> qa, qb;
  for (const auto& [a, b] : pairs) {
    qa.push_back(system.eval(a));
    qb.push_back(system.eval(b));
  }
  const double scale = std::max(detail::sampled_scale(qa), detail::sampled_scale(qb));
  const double tol = opts.tol.value_or(default_tolerance::strict_margin * scale);
  v.tolerances = {{"order_margin", tol}, {"scale", scale}};

  auto dominates = [tol](const Vector& x, const Vector& y) {
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] < y[k] - tol) return false;
    return true;
  };
  std::vector<Witness> probe_w, sampled_w;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [a, b] = pairs[i];
    for (int order = 0; order < 2; ++order) {
      const Vector& x = order == 0 ? a : b;
      const Vector& y = order == 0 ? b : a;
      const Vector& qx = order == 0 ? qa[i] : qb[i];
      const Vector& qy = order == 0 ? qb[i] : qa[i];
      if (!dominates(qx, qy)) continue;
      ++comparable;
      if (dominates(x, y)) continue;
      double gap = kInf;
      for (std::size_t k = 0; k < x.size(); ++k) gap = std::min(gap, x[k] - y[k]);
      Witness w{x, y, qx, qy, std::nullopt, std::nullopt, gap};
      (i < opts.probe_pairs.size() ? probe_w : sampled_w).push_back(std::move(w));
    }
  }
  v.samples_used = pairs.size();
  v.statistics["comparable_ordered_pairs"] = static_cast<double>(comparable);
  detail::finish(v, std::move(probe_w), std::move(sampled_w), opts.max_witnesses, true);
  return v;
}

/// For distinct u, u~ some k has (Q_k(u) - Q_k(u~)) (u_k - u~_k) > tol.
inline Verdict check_p_function(const DemandSystem& system, const Domain& domain, const SamplingOptions& opts) {
  Verdict v;
  v.diagnostic_name = std::string(diagnostic_names::p_function);
  std::vector<Vector> probe_flat;
  for (const auto& [a, b] : opts.probe_pairs) {
    probe_flat.push_back(a);
    probe_flat.push_back(b);
  }
  detail::require_points_inside(domain, probe_flat, "check_p_function");
  auto pairs = opts.probe_pairs;
  const auto sampled_pairs = detail::sampled_pairs(domain, opts);
  pairs.insert(pairs.end(), sampled_pairs.begin(), sampled_pairs.end());

  std::vector<Vector> qa, qb;
  for (const auto& [a, b] : pairs) {
    qa.push_back(system.eval(a));
    qb.push_back(system.eval(b));
  }
  const double scale = std::max(detail::sampled_scale(qa), detail::sampled_scale(qb));
  const double tol = opts.tol.value_or(default_tolerance::strict_margin * scale);
  v.tolerances = {{"strict_margin", tol}, {"scale", scale}};

  std::vector<Witness> probe_w, sampled_w;
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [a, b] = pairs[i];
    if (a == b) continue;
    ++distinct;
    double best = -kInf;
    for (std::size_t k = 0; k < a.size(); ++k) best = std::max(best, (qa[i][k] - qb[i][k]) * (a[k] - b[k]));
    if (best <= tol) {
      Witness w{a, b, qa[i], qb[i], std::nullopt, std::nullopt, best};
      (i < opts.probe_pairs.size() ? probe_w : sampled_w).push_back(std::move(w));
    }
  }
  v.samples_used = distinct;
  detail::finish(v, std::move(probe_w), std::move(sampled_w), opts.max_witnesses, true);
  return v;
}

// ---- preimage convexity ----------------------------------------------------

/// Every convex combination of points in Q^{-1}(y) must map to y.
///
/// Checks the exact midpoint of every pair of supplied preimages first, then
/// `n_combinations` random combinations. Throws PreconditionError if a supplied
/// point does not map to y within tol.
inline Verdict check_preimage_convexity(const DemandSystem& system, const Vector& y,
                                        const std::vector<Vector>& preimages, std::size_t n_combinations,
                                        std::uint64_t seed, std::optional<double> tol_override = std::nullopt,
                                        std::size_t max_witnesses = 10) {
  if (y.size() != system.dim()) throw DimensionError("check_preimage_convexity: target has wrong dimension");
  const double tol = tol_override.value_or(default_tolerance::law_of_demand * std::max(1.0, norm_inf(y)));
  for (const auto& p : preimages) {
    const double err = max_abs_diff(system.eval(p), y);
    if (err > tol)
      throw PreconditionError("check_preimage_convexity: point " + detail::format_vector(p) + " maps to " +
                              detail::format_vector(system.eval(p)) + ", not to the target");
  }
  Verdict v;
  v.diagnostic_name = std::string(diagnostic_names::preimage_convexity);
  v.tolerances = {{"preimage", tol}};
  std::vector<Witness> midpoint_w, sampled_w;
  auto test = [&](const Vector& point, std::vector<Witness>& sink) {
    const Vector q = system.eval(point);
    const double err = max_abs_diff(q, y);
    if (err > tol) sink.push_back({point, std::nullopt, q, std::nullopt, std::nullopt, y, err});
  };
  std::size_t used = 0;
  const std::size_t m = preimages.size();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      test(scaled(add(preimages[i], preimages[j]), 0.5), midpoint_w);
      ++used;
    }
  if (m >= 2) {
    const CounterRng rng(seed);
    for (std::size_t r = 0; r < n_combinations; ++r) {
      const std::size_t i = rng.bits(streams::kCombination, r, 0) % m;
      std::size_t j = rng.bits(streams::kCombination, r, 1) % (m - 1);
      if (j >= i) ++j;
      const double lam = rng.uniform(streams::kCombination, r, 2);
      test(add(scaled(preimages[i], lam), scaled(preimages[j], 1.0 - lam)), sampled_w);
      ++used;
    }
  } else {
    v.notes.emplace_back("fewer than two preimage points; convexity holds vacuously");
  }
  v.samples_used = used;
  // Midpoint witnesses stay in front so the deterministic part of the schedule is always visible.
  detail::keep_worst(midpoint_w, max_witnesses, false);
  detail::finish(v, std::move(midpoint_w), std::move(sampled_w), max_witnesses, false);
  return v;
}

// ---- witness replay --------------------------------------------------------

/// Recomputes a witness's magnitude from its stored points through the system.
/// Jacobian-based witnesses are recomputed on `domain` with default options.
inline double replay_magnitude(const DemandSystem& system, std::string_view diagnostic, const Witness& w,
                               const Domain& domain) {
  namespace dn = diagnostic_names;
  if (diagnostic == dn::law_of_demand)
    return dot(subtract(system.eval(w.u), system.eval(*w.u_tilde)), subtract(w.u, *w.u_tilde));
  if (diagnostic == dn::quasi_definite)
    return min_eigenvalue_sym(symmetrize(jacobian(system, w.u, domain).entries));
  if (diagnostic == dn::injectivity || diagnostic == dn::local_injectivity)
    return norm2(subtract(*w.u_tilde, w.u));
  if (diagnostic == dn::own_good) {
    const std::size_t k = detail::dominant_index(*w.direction);
    return system.eval(*w.u_tilde)[k] - system.eval(w.u)[k];
  }
  if (diagnostic == dn::weak_substitutability) {
    const std::size_t k = detail::dominant_index(*w.direction);
    const Vector q0 = system.eval(w.u);
    const Vector q1 = system.eval(*w.u_tilde);
    double cross = -kInf;
    for (std::size_t l = 0; l < q0.size(); ++l)
      if (l != k) cross = std::max(cross, q1[l] - q0[l]);
    return cross;
  }
  if (diagnostic == dn::inverse_isotonicity) {
    double gap = kInf;
    for (std::size_t k = 0; k < w.u.size(); ++k) gap = std::min(gap, w.u[k] - (*w.u_tilde)[k]);
    return gap;
  }
  if (diagnostic == dn::p_function) {
    const Vector qa = system.eval(w.u);
    const Vector qb = system.eval(*w.u_tilde);
    double best = -kInf;
    for (std::size_t k = 0; k < qa.size(); ++k) best = std::max(best, (qa[k] - qb[k]) * (w.u[k] - (*w.u_tilde)[k]));
    return best;
  }
  if (diagnostic == dn::preimage_convexity) return max_abs_diff(system.eval(w.u), *w.target);
  throw PreconditionError("replay_magnitude: unknown diagnostic '" + std::string(diagnostic) + "'");
}

}  // namespace demandlens
