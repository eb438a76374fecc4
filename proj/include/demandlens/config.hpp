#pragma once

// Run specifications: JSON parsing, validation with field paths, default
// filling, and construction of systems and domains from descriptors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "demandlens/demand_systems.hpp"
#include "demandlens/diagnostics.hpp"
#include "demandlens/domain.hpp"
#include "demandlens/errors.hpp"
#include "demandlens/linalg.hpp"

namespace demandlens {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaMajor = 1;
inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr const char* kToolVersion = "0.1.0";

inline const std::vector<std::string>& system_kinds() {
  static const std::vector<std::string> kinds{"linear",        "cubic_linear", "logit",    "indicator2d",
                                              "quasilinear_quadratic", "arum_mc", "transform"};
  return kinds;
}

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{
      std::string(diagnostic_names::law_of_demand),     std::string(diagnostic_names::quasi_definite),
      std::string(diagnostic_names::injectivity),       std::string(diagnostic_names::local_injectivity),
      std::string(diagnostic_names::jacobian_invertible), std::string(diagnostic_names::own_good),
      std::string(diagnostic_names::weak_substitutability), std::string(diagnostic_names::inverse_isotonicity),
      std::string(diagnostic_names::p_function),        std::string(diagnostic_names::preimage_convexity),
      "invert"};
  return names;
}

struct MapDescriptor {
  std::string name;  // identity, cube, cube_root, affine, scale
  double a = 1.0;    // affine slope, or the scale factor
  double b = 0.0;    // affine intercept
};

struct SystemDescriptor {
  std::string kind;
  Matrix matrix;
  Vector intercept;
  std::size_t k = 0;
  std::size_t n_draws = 0;
  std::uint64_t draw_seed = 0;
  ShockModel shocks;
  std::vector<MapDescriptor> maps;
  std::shared_ptr<SystemDescriptor> inner;

  std::size_t dim() const {
    if (kind == "linear" || kind == "cubic_linear" || kind == "quasilinear_quadratic") return matrix.rows();
    if (kind == "logit" || kind == "arum_mc") return k;
    if (kind == "indicator2d") return 2;
    return inner->dim();
  }
};

struct TaskSpec {
  std::string name;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::optional<double> tol;
  std::size_t max_witnesses = 10;
  double max_perturbation = 1.0;
  std::vector<std::pair<Vector, Vector>> probe_pairs;
  std::vector<Vector> probe_points;
  double max_extent = 1.0;
  double tol_null = default_tolerance::null_singular_value;
  Vector u;                     // check_local_injectivity_at
  Vector y;                     // check_preimage_convexity, invert
  std::vector<Vector> preimages;
  Vector u0;                    // invert
  int max_iter = 10000;
  std::string method = "iterative";
  bool detect_multiplicity = true;
};

struct RunSpec {
  std::string schema_version = kSchemaVersion;
  SystemDescriptor system;
  Domain domain = Domain::whole_space(1);
  double bound = 10.0;
  std::vector<TaskSpec> tasks;
  std::uint64_t seed = 0;
  bool seed_from_environment = false;
  std::optional<std::string> report_path;
  std::optional<std::string> witness_csv_path;
  Json echo;  // normalized document with every default written out
};

namespace config_detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) fail(path.empty() ? key : path + "." + key, "required field is missing");
  return obj.at(key);
}

inline void allow_only(const Json& obj, const std::set<std::string>& keys, const std::string& path) {
  for (const auto& [key, value] : obj.items())
    if (!keys.count(key)) fail(path.empty() ? key : path + "." + key, "unknown field");
}

inline double to_number(const Json& j, const std::string& path, bool allow_infinite = false) {
  if (j.is_number()) return j.get<double>();
  if (allow_infinite && j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  fail(path, allow_infinite ? "expected a number, \"inf\" or \"-inf\"" : "expected a number");
}

inline std::uint64_t to_count(const Json& j, const std::string& path, bool allow_zero = false) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
    fail(path, "expected a non-negative integer");
  const auto v = j.get<std::uint64_t>();
  if (!allow_zero && v == 0) fail(path, "must be at least 1");
  return v;
}

inline Vector to_vector(const Json& j, const std::string& path, std::optional<std::size_t> dim = std::nullopt,
                        bool allow_infinite = false) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Vector v;
  for (std::size_t i = 0; i < j.size(); ++i)
    v.push_back(to_number(j[i], path + "[" + std::to_string(i) + "]", allow_infinite));
  if (dim && v.size() != *dim)
    fail(path, "expected " + std::to_string(*dim) + " entries, got " + std::to_string(v.size()));
  return v;
}

inline Matrix to_square_matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < j.size(); ++i)
    rows.push_back(to_vector(j[i], path + "[" + std::to_string(i) + "]", j.size()));
  return Matrix::from_rows(rows);
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (double x : v) {
    if (std::isinf(x))
      a.push_back(x > 0 ? "inf" : "-inf");
    else
      a.push_back(x);
  }
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (const auto& row : m.to_rows()) a.push_back(vector_json(row));
  return a;
}

inline Matrix scaled_matrix_half_sum(const Matrix& m) {
  Matrix s = m + m.transposed();
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < s.cols(); ++c) s(r, c) *= 0.5;
  return s;
}

inline std::string kind_list() {
  std::string s;
  for (const auto& k : system_kinds()) s += (s.empty() ? "" : ", ") + k;
  return s;
}

inline MapDescriptor parse_map(const Json& j, const std::string& path) {
  MapDescriptor m;
  if (j.is_string()) {
    m.name = j.get<std::string>();
  } else if (j.is_object()) {
    m.name = require(j, "name", path).is_string() ? j.at("name").get<std::string>() : "";
    if (m.name == "affine") {
      allow_only(j, {"name", "a", "b"}, path);
      m.a = to_number(require(j, "a", path), path + ".a");
      m.b = to_number(require(j, "b", path), path + ".b");
    } else if (m.name == "scale") {
      allow_only(j, {"name", "c"}, path);
      m.a = to_number(require(j, "c", path), path + ".c");
    } else {
      allow_only(j, {"name"}, path);
    }
  } else {
    fail(path, "expected a map name or an object with a name");
  }
  if (m.name != "identity" && m.name != "cube" && m.name != "cube_root" && m.name != "affine" && m.name != "scale")
    fail(path, "unknown coordinate map '" + m.name + "'; valid maps: identity, cube, cube_root, affine, scale");
  if ((m.name == "affine" || m.name == "scale") && !(m.a > 0.0))
    fail(path, "the map must be strictly increasing (positive slope)");
  if (j.is_string() && (m.name == "affine" || m.name == "scale"))
    fail(path, "map '" + m.name + "' needs parameters; use an object");
  return m;
}

inline Json map_json(const MapDescriptor& m) {
  if (m.name == "affine") return Json{{"name", "affine"}, {"a", m.a}, {"b", m.b}};
  if (m.name == "scale") return Json{{"name", "scale"}, {"c", m.a}};
  return Json{{"name", m.name}};
}

inline SystemDescriptor parse_system(const Json& j, const std::string& path, std::uint64_t seed) {
  if (!j.is_object()) fail(path, "expected an object");
  const Json& kind = require(j, "kind", path);
  if (!kind.is_string()) fail(path + ".kind", "expected a string");
  SystemDescriptor d;
  d.kind = kind.get<std::string>();
  if (std::find(system_kinds().begin(), system_kinds().end(), d.kind) == system_kinds().end())
    fail(path + ".kind", "unknown kind '" + d.kind + "'; valid kinds: " + kind_list());

  if (d.kind == "linear") {
    allow_only(j, {"kind", "matrix", "intercept"}, path);
    d.matrix = to_square_matrix(require(j, "matrix", path), path + ".matrix");
    d.intercept = j.contains("intercept") ? to_vector(j.at("intercept"), path + ".intercept", d.matrix.rows())
                                          : Vector(d.matrix.rows(), 0.0);
  } else if (d.kind == "cubic_linear" || d.kind == "quasilinear_quadratic") {
    allow_only(j, {"kind", "matrix"}, path);
    d.matrix = to_square_matrix(require(j, "matrix", path), path + ".matrix");
    if (d.kind == "quasilinear_quadratic") {
      const Matrix sym = scaled_matrix_half_sum(d.matrix);
      if (!(eigen_symmetric(sym).values.front() > 0.0))
        fail(path + ".matrix", "must have a positive definite symmetric part so that C is strictly concave");
    }
  } else if (d.kind == "logit") {
    allow_only(j, {"kind", "k"}, path);
    d.k = to_count(require(j, "k", path), path + ".k");
  } else if (d.kind == "indicator2d") {
    allow_only(j, {"kind"}, path);
  } else if (d.kind == "arum_mc") {
    allow_only(j, {"kind", "k", "n_draws", "seed", "distribution", "table"}, path);
    d.k = to_count(require(j, "k", path), path + ".k");
    d.n_draws = j.contains("n_draws") ? to_count(j.at("n_draws"), path + ".n_draws") : 10000;
    d.draw_seed = j.contains("seed") ? to_count(j.at("seed"), path + ".seed", true) : seed;
    const std::string dist = j.contains("distribution") && j.at("distribution").is_string()
                                 ? j.at("distribution").get<std::string>()
                                 : (j.contains("distribution") ? std::string("?") : std::string("gumbel"));
    if (dist == "gumbel") {
      d.shocks.distribution = ShockDistribution::gumbel;
    } else if (dist == "normal") {
      d.shocks.distribution = ShockDistribution::normal;
    } else if (dist == "table") {
      d.shocks.distribution = ShockDistribution::table;
      const Json& t = require(j, "table", path);
      if (!t.is_array() || t.empty()) fail(path + ".table", "expected a non-empty array of shock rows");
      for (std::size_t i = 0; i < t.size(); ++i)
        d.shocks.table.push_back(to_vector(t[i], path + ".table[" + std::to_string(i) + "]", d.k));
    } else {
      fail(path + ".distribution", "expected one of gumbel, normal, table");
    }
    if (dist != "table" && j.contains("table")) fail(path + ".table", "only allowed with distribution 'table'");
  } else {  // transform
    allow_only(j, {"kind", "inner", "maps"}, path);
    d.inner = std::make_shared<SystemDescriptor>(parse_system(require(j, "inner", path), path + ".inner", seed));
    const Json& maps = require(j, "maps", path);
    if (maps.is_array()) {
      for (std::size_t i = 0; i < maps.size(); ++i)
        d.maps.push_back(parse_map(maps[i], path + ".maps[" + std::to_string(i) + "]"));
    } else {
      d.maps.push_back(parse_map(maps, path + ".maps"));
    }
    if (d.maps.size() != 1 && d.maps.size() != d.inner->dim())
      fail(path + ".maps", "expected one map or one per coordinate (" + std::to_string(d.inner->dim()) + ")");
  }
  return d;
}

inline Json system_json(const SystemDescriptor& d) {
  Json j{{"kind", d.kind}};
  if (d.kind == "linear") {
    j["matrix"] = matrix_json(d.matrix);
    j["intercept"] = vector_json(d.intercept);
  } else if (d.kind == "cubic_linear" || d.kind == "quasilinear_quadratic") {
    j["matrix"] = matrix_json(d.matrix);
  } else if (d.kind == "logit") {
    j["k"] = d.k;
  } else if (d.kind == "arum_mc") {
    j["k"] = d.k;
    j["n_draws"] = d.n_draws;
    j["seed"] = d.draw_seed;
    const char* names[] = {"gumbel", "normal", "table"};
    j["distribution"] = names[static_cast<int>(d.shocks.distribution)];
    if (d.shocks.distribution == ShockDistribution::table) {
      Json t = Json::array();
      for (const auto& row : d.shocks.table) t.push_back(vector_json(row));
      j["table"] = t;
    }
  } else if (d.kind == "transform") {
    j["inner"] = system_json(*d.inner);
    Json maps = Json::array();
    for (const auto& m : d.maps) maps.push_back(map_json(m));
    j["maps"] = maps;
  }
  return j;
}

inline bool is_sampling_task(std::string_view name) {
  return name != "invert" && name != diagnostic_names::local_injectivity &&
         name != diagnostic_names::preimage_convexity;
}

inline bool uses_pairs(std::string_view name) {
  return name == diagnostic_names::law_of_demand || name == diagnostic_names::inverse_isotonicity ||
         name == diagnostic_names::p_function;
}

inline bool uses_points(std::string_view name) {
  return name == diagnostic_names::quasi_definite || name == diagnostic_names::injectivity ||
         name == diagnostic_names::jacobian_invertible;
}

inline bool uses_perturbations(std::string_view name) {
  return name == diagnostic_names::own_good || name == diagnostic_names::weak_substitutability;
}

inline bool uses_constancy(std::string_view name) {
  return name == diagnostic_names::injectivity || name == diagnostic_names::local_injectivity ||
         name == "invert";
}

// A deterministic interior starting point: 0 where admissible, else a point
// near the middle of each coordinate range, else the first sampled point.
inline Vector default_start(const Domain& domain, double bound, std::uint64_t seed) {
  Vector u(domain.dim());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double lo = domain.lower()[k], hi = domain.upper()[k];
    if (lo < 0.0 && 0.0 < hi)
      u[k] = 0.0;
    else if (std::isfinite(lo) && std::isfinite(hi))
      u[k] = 0.5 * (lo + hi);
    else
      u[k] = std::isfinite(lo) ? lo + 1.0 : hi - 1.0;
  }
  if (contains(domain, u)) return u;
  return sample_points(domain, 1, seed, bound).front();
}

inline TaskSpec parse_task(const Json& j, const std::string& path, const RunSpec& spec, const Json& tolerances) {
  if (!j.is_object()) fail(path, "expected an object");
  const Json& name = require(j, "name", path);
  if (!name.is_string()) fail(path + ".name", "expected a string");
  TaskSpec t;
  t.name = name.get<std::string>();
  if (std::find(task_names().begin(), task_names().end(), t.name) == task_names().end()) {
    std::string valid;
    for (const auto& n : task_names()) valid += (valid.empty() ? "" : ", ") + n;
    fail(path + ".name", "unknown task '" + t.name + "'; valid tasks: " + valid);
  }
  const std::size_t dim = spec.system.dim();
  std::set<std::string> allowed{"name", "seed", "tol"};
  if (is_sampling_task(t.name)) allowed.insert({"n", "max_witnesses"});
  if (uses_pairs(t.name)) allowed.insert("probe_pairs");
  if (uses_points(t.name)) allowed.insert("probe_points");
  if (uses_perturbations(t.name)) allowed.insert("max_perturbation");
  if (uses_constancy(t.name)) allowed.insert({"max_extent", "tol_null"});
  if (t.name == diagnostic_names::jacobian_invertible) allowed.insert("tol_null");
  if (t.name == diagnostic_names::local_injectivity) allowed.insert("u");
  if (t.name == diagnostic_names::preimage_convexity) allowed.insert({"y", "preimages", "n", "max_witnesses"});
  if (t.name == "invert") allowed.insert({"y", "u0", "max_iter", "method", "detect_multiplicity"});
  allow_only(j, allowed, path);

  t.seed = j.contains("seed") ? to_count(j.at("seed"), path + ".seed", true) : spec.seed;
  if (j.contains("tol")) {
    t.tol = to_number(j.at("tol"), path + ".tol");
  } else if (tolerances.contains(t.name)) {
    t.tol = to_number(tolerances.at(t.name), "tolerances." + t.name);
  }
  if (t.tol && !(*t.tol >= 0.0)) fail(path + ".tol", "must be non-negative");
  if (t.name == diagnostic_names::preimage_convexity) t.n = 100;
  if (j.contains("n")) t.n = to_count(j.at("n"), path + ".n", t.name == diagnostic_names::preimage_convexity);
  if (j.contains("max_witnesses")) t.max_witnesses = to_count(j.at("max_witnesses"), path + ".max_witnesses");
  if (j.contains("max_perturbation")) {
    t.max_perturbation = to_number(j.at("max_perturbation"), path + ".max_perturbation");
    if (!(t.max_perturbation > 0.0)) fail(path + ".max_perturbation", "must be positive");
  }
  if (j.contains("max_extent")) {
    t.max_extent = to_number(j.at("max_extent"), path + ".max_extent");
    if (!(t.max_extent > 0.0)) fail(path + ".max_extent", "must be positive");
  }
  if (j.contains("tol_null")) {
    t.tol_null = to_number(j.at("tol_null"), path + ".tol_null");
    if (!(t.tol_null > 0.0)) fail(path + ".tol_null", "must be positive");
  }
  if (j.contains("probe_pairs")) {
    const Json& pp = j.at("probe_pairs");
    if (!pp.is_array()) fail(path + ".probe_pairs", "expected an array of [u, u~] pairs");
    for (std::size_t i = 0; i < pp.size(); ++i) {
      const std::string p = path + ".probe_pairs[" + std::to_string(i) + "]";
      if (!pp[i].is_array() || pp[i].size() != 2) fail(p, "expected a pair [u, u~]");
      t.probe_pairs.emplace_back(to_vector(pp[i][0], p + "[0]", dim), to_vector(pp[i][1], p + "[1]", dim));
    }
  }
  if (j.contains("probe_points")) {
    const Json& pp = j.at("probe_points");
    if (!pp.is_array()) fail(path + ".probe_points", "expected an array of points");
    for (std::size_t i = 0; i < pp.size(); ++i)
      t.probe_points.push_back(to_vector(pp[i], path + ".probe_points[" + std::to_string(i) + "]", dim));
  }
  if (t.name == diagnostic_names::local_injectivity) t.u = to_vector(require(j, "u", path), path + ".u", dim);
  if (t.name == diagnostic_names::preimage_convexity) {
    t.y = to_vector(require(j, "y", path), path + ".y", dim);
    const Json& pre = require(j, "preimages", path);
    if (!pre.is_array() || pre.empty()) fail(path + ".preimages", "expected a non-empty array of points");
    for (std::size_t i = 0; i < pre.size(); ++i)
      t.preimages.push_back(to_vector(pre[i], path + ".preimages[" + std::to_string(i) + "]", dim));
  }
  if (t.name == "invert") {
    t.y = to_vector(require(j, "y", path), path + ".y", dim);
    t.tol = t.tol.value_or(1e-10);
    t.u0 = j.contains("u0") ? to_vector(j.at("u0"), path + ".u0", dim)
                            : default_start(spec.domain, spec.bound, t.seed);
    if (j.contains("max_iter")) t.max_iter = static_cast<int>(to_count(j.at("max_iter"), path + ".max_iter"));
    if (j.contains("method")) {
      if (!j.at("method").is_string()) fail(path + ".method", "expected a string");
      t.method = j.at("method").get<std::string>();
      if (t.method != "iterative" && t.method != "closed_form")
        fail(path + ".method", "expected 'iterative' or 'closed_form'");
      const std::string& kind = spec.system.kind;
      if (t.method == "closed_form" && kind != "logit" && kind != "quasilinear_quadratic")
        fail(path + ".method", "closed_form inversion is available for logit and quasilinear_quadratic only");
    }
    if (j.contains("detect_multiplicity")) {
      if (!j.at("detect_multiplicity").is_boolean()) fail(path + ".detect_multiplicity", "expected a boolean");
      t.detect_multiplicity = j.at("detect_multiplicity").get<bool>();
    }
  }
  return t;
}

inline Json task_json(const TaskSpec& t) {
  Json j{{"name", t.name}, {"seed", t.seed}};
  j["tol"] = t.tol ? Json(*t.tol) : Json(nullptr);
  const bool preimage = t.name == diagnostic_names::preimage_convexity;
  if (is_sampling_task(t.name) || preimage) {
    j["n"] = t.n;
    j["max_witnesses"] = t.max_witnesses;
  }
  if (uses_pairs(t.name)) {
    Json pp = Json::array();
    for (const auto& [a, b] : t.probe_pairs) pp.push_back(Json::array({vector_json(a), vector_json(b)}));
    j["probe_pairs"] = pp;
  }
  if (uses_points(t.name)) {
    Json pp = Json::array();
    for (const auto& p : t.probe_points) pp.push_back(vector_json(p));
    j["probe_points"] = pp;
  }
  if (uses_perturbations(t.name)) j["max_perturbation"] = t.max_perturbation;
  if (uses_constancy(t.name)) j["max_extent"] = t.max_extent;
  if (uses_constancy(t.name) || t.name == diagnostic_names::jacobian_invertible) j["tol_null"] = t.tol_null;
  if (t.name == diagnostic_names::local_injectivity) j["u"] = vector_json(t.u);
  if (preimage) {
    j["y"] = vector_json(t.y);
    Json pre = Json::array();
    for (const auto& p : t.preimages) pre.push_back(vector_json(p));
    j["preimages"] = pre;
  }
  if (t.name == "invert") {
    j["y"] = vector_json(t.y);
    j["u0"] = vector_json(t.u0);
    j["max_iter"] = t.max_iter;
    j["method"] = t.method;
    j["detect_multiplicity"] = t.detect_multiplicity;
  }
  return j;
}

}  // namespace config_detail

/// Parses and validates a run specification.
///
/// `fallback_seed` (from DEMANDLENS_SEED in the CLI) is used only when the
/// document has no seed. Every default is written into `echo`, so a report
/// records exactly what was run.
inline RunSpec load_config(std::string_view text, std::optional<std::uint64_t> fallback_seed = std::nullopt) {
  using namespace config_detail;
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string what = e.what();
    if (const auto pos = what.find("syntax error"); pos != std::string::npos) what = what.substr(pos);
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      what);
  }
  if (!doc.is_object()) fail("(document)", "expected a JSON object");
  allow_only(doc, {"schema_version", "system", "domain", "tasks", "seed", "tolerances", "output"}, "");

  RunSpec spec;
  if (doc.contains("schema_version")) {
    if (!doc.at("schema_version").is_string()) fail("schema_version", "expected a string like \"1.0\"");
    spec.schema_version = doc.at("schema_version").get<std::string>();
    int major = 0;
    try {
      major = std::stoi(spec.schema_version);
    } catch (const std::exception&) {
      fail("schema_version", "expected a string like \"1.0\"");
    }
    if (major > kSchemaMajor)
      fail("schema_version", "major version " + std::to_string(major) + " is newer than supported (" +
                                 std::to_string(kSchemaMajor) + ")");
  }

  if (doc.contains("seed")) {
    spec.seed = to_count(doc.at("seed"), "seed", true);
  } else if (fallback_seed) {
    spec.seed = *fallback_seed;
    spec.seed_from_environment = true;
  } else {
    throw ConfigError("seed required");
  }

  spec.system = parse_system(require(doc, "system", ""), "system", spec.seed);
  const std::size_t dim = spec.system.dim();

  const Json& dj = require(doc, "domain", "");
  if (!dj.is_object()) fail("domain", "expected an object");
  allow_only(dj, {"lower", "upper", "halfspaces", "bound"}, "domain");
  const Vector lower = to_vector(require(dj, "lower", "domain"), "domain.lower", dim, true);
  const Vector upper = to_vector(require(dj, "upper", "domain"), "domain.upper", dim, true);
  std::vector<HalfSpace> halfspaces;
  if (dj.contains("halfspaces")) {
    const Json& hs = dj.at("halfspaces");
    if (!hs.is_array()) fail("domain.halfspaces", "expected an array");
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const std::string p = "domain.halfspaces[" + std::to_string(i) + "]";
      if (!hs[i].is_object()) fail(p, "expected an object with normal and offset");
      allow_only(hs[i], {"normal", "offset"}, p);
      halfspaces.push_back({to_vector(require(hs[i], "normal", p), p + ".normal", dim),
                            to_number(require(hs[i], "offset", p), p + ".offset")});
    }
  }
  if (dj.contains("bound")) {
    spec.bound = to_number(dj.at("bound"), "domain.bound");
    if (!(spec.bound > 0.0)) fail("domain.bound", "must be positive");
  }
  try {
    spec.domain = Domain(lower, upper, halfspaces);
  } catch (const Error& e) {
    fail("domain", e.what());
  }

  Json tolerances = Json::object();
  if (doc.contains("tolerances")) {
    tolerances = doc.at("tolerances");
    if (!tolerances.is_object()) fail("tolerances", "expected an object keyed by task name");
    for (const auto& [key, value] : tolerances.items()) {
      if (std::find(task_names().begin(), task_names().end(), key) == task_names().end())
        fail("tolerances." + key, "not a task name");
      to_number(value, "tolerances." + key);
    }
  }

  const Json& tasks = require(doc, "tasks", "");
  if (!tasks.is_array()) fail("tasks", "expected an array");
  for (std::size_t i = 0; i < tasks.size(); ++i)
    spec.tasks.push_back(parse_task(tasks[i], "tasks[" + std::to_string(i) + "]", spec, tolerances));

  if (doc.contains("output")) {
    const Json& o = doc.at("output");
    if (!o.is_object()) fail("output", "expected an object");
    allow_only(o, {"report_path", "witness_csv_path"}, "output");
    for (const char* key : {"report_path", "witness_csv_path"})
      if (o.contains(key) && !o.at(key).is_string()) fail(std::string("output.") + key, "expected a string");
    if (o.contains("report_path")) spec.report_path = o.at("report_path").get<std::string>();
    if (o.contains("witness_csv_path")) spec.witness_csv_path = o.at("witness_csv_path").get<std::string>();
  }

  Json& e = spec.echo;
  e["schema_version"] = spec.schema_version;
  e["seed"] = spec.seed;
  e["seed_source"] = spec.seed_from_environment ? "environment" : "spec";
  e["system"] = system_json(spec.system);
  Json domain_echo{{"lower", vector_json(lower)}, {"upper", vector_json(upper)}};
  Json hs_echo = Json::array();
  for (const auto& h : halfspaces) hs_echo.push_back(Json{{"normal", vector_json(h.normal)}, {"offset", h.offset}});
  domain_echo["halfspaces"] = hs_echo;
  domain_echo["bound"] = spec.bound;
  e["domain"] = domain_echo;
  e["tolerances"] = tolerances;
  Json task_echo = Json::array();
  for (const auto& t : spec.tasks) task_echo.push_back(task_json(t));
  e["tasks"] = task_echo;
  Json out = Json::object();
  if (spec.report_path) out["report_path"] = *spec.report_path;
  if (spec.witness_csv_path) out["witness_csv_path"] = *spec.witness_csv_path;
  e["output"] = out;
  return spec;
}

inline CoordinateMap build_map(const MapDescriptor& m) {
  if (m.name == "cube") return CoordinateMap::cube();
  if (m.name == "cube_root") return CoordinateMap::cube_root();
  if (m.name == "affine") return CoordinateMap::affine(m.a, m.b);
  if (m.name == "scale") return CoordinateMap::scale(m.a);
  return CoordinateMap::identity();
}

inline DemandSystem build_system(const SystemDescriptor& d) {
  if (d.kind == "linear") return make_linear(d.matrix, d.intercept);
  if (d.kind == "cubic_linear") return make_cubic_linear(d.matrix);
  if (d.kind == "logit") return make_logit(d.k);
  if (d.kind == "indicator2d") return make_indicator2d();
  if (d.kind == "quasilinear_quadratic") return make_quasilinear(quadratic_objective(d.matrix));
  if (d.kind == "arum_mc") return make_arum_mc(d.k, d.n_draws, d.draw_seed, d.shocks);
  if (d.kind == "transform") {
    std::vector<CoordinateMap> maps;
    for (const auto& m : d.maps) maps.push_back(build_map(m));
    return transform(build_system(*d.inner), maps);
  }
  throw ConfigError("system.kind: unknown kind '" + d.kind + "'; valid kinds: " + config_detail::kind_list());
}

}  // namespace demandlens
