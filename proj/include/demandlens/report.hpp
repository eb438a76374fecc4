#pragma once

// Executing a RunSpec and the report document: JSON emission with fixed key
// order and 17-significant-digit floats, parsing back, and the witness CSV.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <typeinfo>
#include <utility>
#include <vector>

#include "json.hpp"

#include "demandlens/config.hpp"
#include "demandlens/diagnostics.hpp"
#include "demandlens/errors.hpp"
#include "demandlens/inversion.hpp"

namespace demandlens {

struct TaskError {
  std::string type;
  std::string message;
  std::optional<Vector> best_iterate;
  std::optional<double> residual;

  friend bool operator==(const TaskError&, const TaskError&) = default;
};

struct TaskOutcome {
  std::size_t index = 0;
  std::string name;
  std::optional<Verdict> verdict;
  std::optional<InversionResult> inversion;
  std::optional<TaskError> error;
  std::optional<double> wall_time_seconds;
};

struct Report {
  std::string schema_version = kSchemaVersion;
  std::string tool_version = kToolVersion;
  Json spec_echo = Json::object();
  std::size_t dim = 0;
  std::vector<TaskOutcome> tasks;

  std::size_t count(Status s) const {
    std::size_t n = 0;
    for (const auto& t : tasks)
      if (t.verdict && t.verdict->status == s) ++n;
    return n;
  }
  std::size_t errors() const {
    std::size_t n = 0;
    for (const auto& t : tasks)
      if (t.error) ++n;
    return n;
  }
};

struct RunOptions {
  unsigned workers = 1;
  bool timings = false;
};

namespace report_detail {

inline std::string error_type(const std::exception& e) {
  if (dynamic_cast<const InversionFailure*>(&e)) return "convergence_error";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence_error";
  if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension_error";
  if (dynamic_cast<const PreconditionError*>(&e)) return "precondition_error";
  if (dynamic_cast<const ConfigError*>(&e)) return "config_error";
  return "internal_error";
}

inline SamplingOptions sampling_options(const RunSpec& spec, const TaskSpec& t) {
  SamplingOptions o;
  o.n = t.n;
  o.seed = t.seed;
  o.bound = spec.bound;
  o.tol = t.tol;
  o.probe_pairs = t.probe_pairs;
  o.probe_points = t.probe_points;
  o.max_witnesses = t.max_witnesses;
  o.max_perturbation = t.max_perturbation;
  return o;
}

inline ConstancyOptions constancy_options(const TaskSpec& t) {
  ConstancyOptions c;
  c.max_extent = t.max_extent;
  c.tol_null = t.tol_null;
  return c;
}

inline InversionResult closed_form_inverse(const RunSpec& spec, const DemandSystem& system, const TaskSpec& t) {
  InversionResult r;
  r.method = InversionMethod::closed_form;
  if (spec.system.kind == "logit") {
    r.solution = invert_logit(t.y);
  } else {
    const auto q = invert_quasilinear(quadratic_objective(spec.system.matrix), t.y);
    if (q.status != QuasilinearInverseStatus::unique)
      throw ConvergenceError("closed-form quasilinear inverse is not unique at the target");
    r.solution = q.u;
  }
  if (!contains(spec.domain, r.solution)) throw DomainError("closed-form solution lies outside the domain");
  r.residual_norm = max_abs_diff(system.eval(r.solution), t.y);
  r.residual_trace.push_back(norm2(subtract(system.eval(r.solution), t.y)));
  return r;
}

inline TaskOutcome execute(const RunSpec& spec, const DemandSystem& system, const TaskSpec& t, std::size_t index,
                           bool timings) {
  namespace dn = diagnostic_names;
  TaskOutcome out;
  out.index = index;
  out.name = t.name;
  const auto start = std::chrono::steady_clock::now();
  try {
    const SamplingOptions s = sampling_options(spec, t);
    const Domain& d = spec.domain;
    if (t.name == dn::law_of_demand) {
      out.verdict = check_law_of_demand(system, d, s);
    } else if (t.name == dn::quasi_definite) {
      out.verdict = check_quasi_definite_everywhere(system, d, s);
    } else if (t.name == dn::injectivity) {
      out.verdict = check_injectivity(system, d, s, constancy_options(t));
    } else if (t.name == dn::local_injectivity) {
      out.verdict = check_local_injectivity_at(system, d, t.u, s, constancy_options(t));
    } else if (t.name == dn::jacobian_invertible) {
      out.verdict = check_jacobian_invertible(system, d, s, t.tol_null);
    } else if (t.name == dn::own_good) {
      out.verdict = check_own_good_monotonicity(system, d, s);
    } else if (t.name == dn::weak_substitutability) {
      out.verdict = check_weak_substitutability(system, d, s);
    } else if (t.name == dn::inverse_isotonicity) {
      out.verdict = check_inverse_isotonicity(system, d, s);
    } else if (t.name == dn::p_function) {
      out.verdict = check_p_function(system, d, s);
    } else if (t.name == dn::preimage_convexity) {
      out.verdict = check_preimage_convexity(system, t.y, t.preimages, t.n, t.seed, t.tol, t.max_witnesses);
    } else if (t.name == "invert") {
      if (t.method == "closed_form") {
        out.inversion = closed_form_inverse(spec, system, t);
      } else {
        InversionOptions o;
        o.tol = t.tol.value_or(1e-10);
        o.max_iter = t.max_iter;
        o.detect_multiplicity = t.detect_multiplicity;
        o.constancy = constancy_options(t);
        out.inversion = invert(system, d, t.y, t.u0, o);
      }
    }
  } catch (const InversionFailure& e) {
    out.error = TaskError{error_type(e), e.what(), e.best_iterate, e.residual};
  } catch (const std::exception& e) {
    out.error = TaskError{error_type(e), e.what(), std::nullopt, std::nullopt};
  }
  if (timings)
    out.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---- JSON writing ----------------------------------------------------------

inline std::string format_double(double x) {
  if (std::isnan(x)) return "\"nan\"";
  if (std::isinf(x)) return x > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s = buf;
  // Keep floats recognizably floating point so that "-0.0" and "3.0" reparse
  // as floats and re-emit identically.
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

inline bool is_flat(const Json& j) {
  for (const auto& e : j)
    if (e.is_structured()) return false;
  return true;
}

inline void write(std::string& out, const Json& j, int depth) {
  const std::string pad(2 * (depth + 1), ' ');
  const std::string close_pad(2 * depth, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(key).dump() + ": ";
        write(out, value, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      if (is_flat(j)) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          write(out, j[i], depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        write(out, j[i], depth + 1);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

// ---- typed <-> JSON --------------------------------------------------------

inline Json vec(const Vector& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

inline double num(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::nan("");
    throw ConfigError("report: unexpected string where a number was expected: " + s);
  }
  return j.get<double>();
}

inline Vector unvec(const Json& j) {
  Vector v;
  for (const auto& e : j) v.push_back(num(e));
  return v;
}

inline Json number_map(const std::map<std::string, double>& m) {
  Json o = Json::object();
  for (const auto& [k, v] : m) o[k] = v;
  return o;
}

inline std::map<std::string, double> unnumber_map(const Json& j) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) m[k] = num(v);
  return m;
}

inline Json witness_json(const Witness& w) {
  Json j{{"u", vec(w.u)}};
  if (w.u_tilde) j["u_tilde"] = vec(*w.u_tilde);
  if (w.q_u) j["q_u"] = vec(*w.q_u);
  if (w.q_u_tilde) j["q_u_tilde"] = vec(*w.q_u_tilde);
  if (w.direction) j["direction"] = vec(*w.direction);
  if (w.target) j["target"] = vec(*w.target);
  j["magnitude"] = w.magnitude;
  return j;
}

inline Witness witness_from(const Json& j) {
  Witness w;
  w.u = unvec(j.at("u"));
  if (j.contains("u_tilde")) w.u_tilde = unvec(j.at("u_tilde"));
  if (j.contains("q_u")) w.q_u = unvec(j.at("q_u"));
  if (j.contains("q_u_tilde")) w.q_u_tilde = unvec(j.at("q_u_tilde"));
  if (j.contains("direction")) w.direction = unvec(j.at("direction"));
  if (j.contains("target")) w.target = unvec(j.at("target"));
  w.magnitude = num(j.at("magnitude"));
  return w;
}

inline Status status_from(const std::string& s) {
  if (s == "pass") return Status::pass;
  if (s == "violation") return Status::violation;
  if (s == "inconclusive") return Status::inconclusive;
  throw ConfigError("report: unknown status '" + s + "'");
}

inline Json verdict_json(const TaskOutcome& t) {
  const Verdict& v = *t.verdict;
  Json j{{"task", t.index}, {"diagnostic", v.diagnostic_name}, {"status", to_string(v.status)},
         {"samples_used", v.samples_used}};
  j["tolerances"] = number_map(v.tolerances);
  j["statistics"] = number_map(v.statistics);
  Json ws = Json::array();
  for (const auto& w : v.witnesses) ws.push_back(witness_json(w));
  j["witnesses"] = ws;
  j["notes"] = v.notes;
  if (t.wall_time_seconds) j["wall_time_seconds"] = *t.wall_time_seconds;
  return j;
}

inline TaskOutcome verdict_from(const Json& j) {
  TaskOutcome t;
  t.index = j.at("task").get<std::size_t>();
  Verdict v;
  v.diagnostic_name = j.at("diagnostic").get<std::string>();
  t.name = v.diagnostic_name;
  v.status = status_from(j.at("status").get<std::string>());
  v.samples_used = j.at("samples_used").get<std::size_t>();
  v.tolerances = unnumber_map(j.at("tolerances"));
  v.statistics = unnumber_map(j.at("statistics"));
  for (const auto& w : j.at("witnesses")) v.witnesses.push_back(witness_from(w));
  v.notes = j.at("notes").get<std::vector<std::string>>();
  if (j.contains("wall_time_seconds")) t.wall_time_seconds = num(j.at("wall_time_seconds"));
  t.verdict = std::move(v);
  return t;
}

inline Json inversion_json(const TaskOutcome& t) {
  const InversionResult& r = *t.inversion;
  Json j{{"task", t.index},
         {"method", to_string(r.method)},
         {"solution", vec(r.solution)},
         {"residual_norm", r.residual_norm},
         {"iterations", r.iterations},
         {"multiplicity", to_string(r.multiplicity)}};
  if (r.segment) {
    const Segment& s = r.segment->segment;
    j["segment"] = Json{{"base", vec(s.base)},
                        {"direction", vec(s.direction)},
                        {"lambda_lo", s.lambda_lo},
                        {"lambda_hi", s.lambda_hi},
                        {"max_deviation", r.segment->max_deviation}};
  }
  j["residual_trace"] = vec(r.residual_trace);
  if (t.wall_time_seconds) j["wall_time_seconds"] = *t.wall_time_seconds;
  return j;
}

inline TaskOutcome inversion_from(const Json& j) {
  TaskOutcome t;
  t.index = j.at("task").get<std::size_t>();
  t.name = "invert";
  InversionResult r;
  const auto method = j.at("method").get<std::string>();
  if (method == "gauss_newton") r.method = InversionMethod::gauss_newton;
  else if (method == "closed_form") r.method = InversionMethod::closed_form;
  else r.method = InversionMethod::residual_iteration;
  r.solution = unvec(j.at("solution"));
  r.residual_norm = num(j.at("residual_norm"));
  r.iterations = j.at("iterations").get<int>();
  r.multiplicity = j.at("multiplicity").get<std::string>() == "segment_found" ? Multiplicity::segment_found
                                                                              : Multiplicity::unique_at_resolution;
  if (j.contains("segment")) {
    const Json& s = j.at("segment");
    r.segment = ConstancySegment{
        Segment{unvec(s.at("base")), unvec(s.at("direction")), num(s.at("lambda_lo")), num(s.at("lambda_hi"))},
        num(s.at("max_deviation"))};
  }
  r.residual_trace = unvec(j.at("residual_trace"));
  if (j.contains("wall_time_seconds")) t.wall_time_seconds = num(j.at("wall_time_seconds"));
  t.inversion = std::move(r);
  return t;
}

inline Json error_json(const TaskOutcome& t) {
  Json j{{"task", t.index}, {"name", t.name}, {"type", t.error->type}, {"message", t.error->message}};
  if (t.error->best_iterate) j["best_iterate"] = vec(*t.error->best_iterate);
  if (t.error->residual) j["residual"] = *t.error->residual;
  if (t.wall_time_seconds) j["wall_time_seconds"] = *t.wall_time_seconds;
  return j;
}

inline TaskOutcome error_from(const Json& j) {
  TaskOutcome t;
  t.index = j.at("task").get<std::size_t>();
  t.name = j.at("name").get<std::string>();
  TaskError e{j.at("type").get<std::string>(), j.at("message").get<std::string>(), std::nullopt, std::nullopt};
  if (j.contains("best_iterate")) e.best_iterate = unvec(j.at("best_iterate"));
  if (j.contains("residual")) e.residual = num(j.at("residual"));
  if (j.contains("wall_time_seconds")) t.wall_time_seconds = num(j.at("wall_time_seconds"));
  t.error = std::move(e);
  return t;
}

}  // namespace report_detail

/// Runs every task of `spec`. Task failures are recorded in the report rather
/// than thrown. With several workers, tasks are distributed over threads and
/// merged back in spec order, so the output does not depend on the count.
inline Report run(const RunSpec& spec, const RunOptions& opts = {}) {
  Report report;
  report.schema_version = kSchemaVersion;
  report.spec_echo = spec.echo;
  report.dim = spec.system.dim();
  const DemandSystem system = build_system(spec.system);
  report.tasks.resize(spec.tasks.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(spec.tasks.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < spec.tasks.size(); ++i)
      report.tasks[i] = report_detail::execute(spec, system, spec.tasks[i], i, opts.timings);
    return report;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < spec.tasks.size(); i += workers)
        report.tasks[i] = report_detail::execute(spec, system, spec.tasks[i], i, opts.timings);
    });
  }
  for (auto& t : pool) t.join();
  return report;
}

inline Json report_json(const Report& r) {
  using namespace report_detail;
  Json j;
  j["schema_version"] = r.schema_version;
  j["tool"] = Json{{"name", "demandlens"}, {"version", r.tool_version}};
  j["dimension"] = r.dim;
  j["spec"] = r.spec_echo;
  Json verdicts = Json::array(), inversions = Json::array(), errors = Json::array();
  for (const auto& t : r.tasks) {
    if (t.verdict) verdicts.push_back(verdict_json(t));
    if (t.inversion) inversions.push_back(inversion_json(t));
    if (t.error) errors.push_back(error_json(t));
  }
  j["verdicts"] = verdicts;
  j["inversions"] = inversions;
  j["task_errors"] = errors;
  j["summary"] = Json{{"tasks", r.tasks.size()},
                      {"pass", r.count(Status::pass)},
                      {"violation", r.count(Status::violation)},
                      {"inconclusive", r.count(Status::inconclusive)},
                      {"inversions", inversions.size()},
                      {"errors", r.errors()}};
  return j;
}

/// JSON text with fixed key order and 17 significant digits per float.
inline std::string emit_report(const Report& r) {
  std::string out;
  report_detail::write(out, report_json(r), 0);
  out += "\n";
  return out;
}

/// Inverse of emit_report; rejects documents from a newer schema major version.
inline Report parse_report(std::string_view text) {
  using namespace report_detail;
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  Report r;
  try {
    r.schema_version = j.at("schema_version").get<std::string>();
    if (std::stoi(r.schema_version) > kSchemaMajor)
      throw ConfigError("report: schema version " + r.schema_version + " is newer than supported");
    r.tool_version = j.at("tool").at("version").get<std::string>();
    r.dim = j.at("dimension").get<std::size_t>();
    r.spec_echo = j.at("spec");
    std::vector<TaskOutcome> all;
    for (const auto& v : j.at("verdicts")) all.push_back(verdict_from(v));
    for (const auto& v : j.at("inversions")) all.push_back(inversion_from(v));
    for (const auto& v : j.at("task_errors")) all.push_back(error_from(v));
    const std::size_t n = j.at("summary").at("tasks").get<std::size_t>();
    r.tasks.resize(n);
    for (auto& t : all) {
      if (t.index >= n) throw ConfigError("report: task index out of range");
      r.tasks[t.index] = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report: malformed document: ") + e.what());
  }
  return r;
}

/// One row per witness: diagnostic, u_1..u_K, u_tilde_1..u_tilde_K, magnitude.
/// Missing u_tilde values are left empty.
inline std::string emit_witness_csv(const Report& r) {
  std::string out = "diagnostic";
  for (std::size_t k = 1; k <= r.dim; ++k) out += ",u_" + std::to_string(k);
  for (std::size_t k = 1; k <= r.dim; ++k) out += ",u_tilde_" + std::to_string(k);
  out += ",magnitude\n";
  auto cell = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (const auto& t : r.tasks) {
    if (!t.verdict) continue;
    for (const auto& w : t.verdict->witnesses) {
      out += t.verdict->diagnostic_name;
      for (std::size_t k = 0; k < r.dim; ++k) out += "," + (k < w.u.size() ? cell(w.u[k]) : "");
      for (std::size_t k = 0; k < r.dim; ++k) out += "," + (w.u_tilde && k < w.u_tilde->size() ? cell((*w.u_tilde)[k]) : "");
      out += "," + cell(w.magnitude) + "\n";
    }
  }
  return out;
}

/// 0 when nothing failed, 2 when any diagnostic found a violation, 1 when a
/// task errored without any violation being found.
inline int exit_code(const Report& r) {
  if (r.count(Status::violation) > 0) return 2;
  if (r.errors() > 0) return 1;
  return 0;
}

}  // namespace demandlens
