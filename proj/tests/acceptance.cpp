// Prints one [PASS]/[FAIL] line per acceptance criterion and exits nonzero if
// any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "demandlens/demandlens.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace dl = demandlens;

namespace {

struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

dl::SamplingOptions sampling(std::size_t n, std::uint64_t seed = 1) {
  dl::SamplingOptions o;
  o.n = n;
  o.seed = seed;
  return o;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

const dl::Domain kBox5 = dl::Domain::cube(2, -5.0, 5.0);
const dl::Domain kBox3 = dl::Domain::cube(2, -3.0, 3.0);

void example_one(Check& c) {
  const auto q = dl::make_linear(fixtures::kExample1);
  c.expect(q.eval({2.0, -1.0}) == dl::Vector{3.0, 0.0}, "Q(2,-1) != (3,0)");

  const auto lod = dl::check_law_of_demand(q, kBox5, sampling(10000));
  c.expect(lod.status == dl::Status::pass && lod.samples_used == 10000 && lod.statistics.at("violating_pairs") == 0.0,
           "law of demand did not pass cleanly over 10^4 pairs");

  auto opts = sampling(2000);
  opts.probe_pairs = {{{0.0, 0.0}, {2.0, -1.0}}};
  const auto iso = dl::check_inverse_isotonicity(q, kBox5, opts);
  bool probe_found = false;
  for (const auto& w : iso.witnesses) {
    const bool forward = w.u == dl::Vector{2.0, -1.0} && w.u_tilde == dl::Vector{0.0, 0.0};
    const bool backward = w.u == dl::Vector{0.0, 0.0} && w.u_tilde == dl::Vector{2.0, -1.0};
    probe_found = probe_found || forward || backward;
  }
  c.expect(iso.status == dl::Status::violation && probe_found, "no isotonicity witness on ((0,0),(2,-1))");

  c.expect(dl::check_weak_substitutability(q, kBox5, sampling(2000)).status == dl::Status::violation,
           "weak substitutability not violated");

  const double lambda = dl::min_eigenvalue_sym(dl::symmetrize(fixtures::kExample1));
  c.expect(std::abs(lambda - 1.0) <= 1e-9, "min symmetrized eigenvalue " + fmt(lambda));
}

void example_two(Check& c) {
  const auto q = dl::make_cubic_linear(fixtures::kExample2);
  auto opts = sampling(10000);
  opts.probe_pairs = {{{0.0, 0.0}, {1.0, 2.0}}};
  const auto lod = dl::check_law_of_demand(q, kBox3, opts);
  bool probe_found = false;
  for (const auto& w : lod.witnesses) {
    if (w.u == dl::Vector{0.0, 0.0} && w.u_tilde == dl::Vector{1.0, 2.0}) {
      probe_found = true;
      c.expect(std::abs(w.magnitude + 30.0) <= 1e-9, "probe magnitude " + fmt(w.magnitude));
    }
  }
  c.expect(lod.status == dl::Status::violation && probe_found, "probe pair ((0,0),(1,2)) not reported");
  c.expect(dl::check_own_good_monotonicity(q, kBox3, sampling(10000)).status == dl::Status::pass,
           "own-good monotonicity did not pass");
  c.expect(dl::check_weak_substitutability(q, kBox3, sampling(10000)).status == dl::Status::pass,
           "weak substitutability did not pass");
}

void change_of_variables(Check& c) {
  const auto cubic = dl::make_cubic_linear(fixtures::kExample2);
  const auto tq = dl::transform(cubic, {dl::CoordinateMap::cube_root()});
  const auto v = dl::check_quasi_definite_everywhere(tq, kBox3, sampling(500));
  const double target = 11.0 - std::sqrt(111.25);
  const double got = v.statistics.count("min_eigenvalue") ? v.statistics.at("min_eigenvalue") : NAN;
  c.expect(v.status == dl::Status::pass, "transformed system not quasi-definite");
  c.expect(std::abs(got - target) <= 1e-6, "min eigenvalue " + fmt(got) + " vs " + fmt(target));
  c.expect(dl::check_quasi_definite_everywhere(cubic, kBox3, sampling(500)).status == dl::Status::violation,
           "untransformed system not flagged");
  c.expect(dl::check_law_of_demand(cubic, kBox3, sampling(5000)).status == dl::Status::violation &&
               dl::check_law_of_demand(tq, kBox3, sampling(5000)).status == dl::Status::pass,
           "law of demand verdicts do not flip under the transform");
}

void indicator(Check& c) {
  const auto v = dl::check_preimage_convexity(dl::make_indicator2d(), {0.0, 0.0}, {{-1.0, 1.0}, {1.0, -1.0}}, 100, 1);
  bool midpoint = false;
  for (const auto& w : v.witnesses)
    midpoint = midpoint || (w.u == dl::Vector{0.0, 0.0} && w.q_u && *w.q_u == dl::Vector{1.0, 1.0});
  c.expect(v.status == dl::Status::violation && midpoint, "midpoint (0,0) -> (1,1) not reported");
}

void cube_on_the_line(Check& c) {
  const auto cube = fixtures::cube_1d();
  const auto line = dl::Domain::cube(1, -2.0, 2.0);
  const double j0 = dl::jacobian(cube, {0.0}, line).entries(0, 0);
  c.expect(std::abs(j0) < 1e-8, "|J(0)| = " + fmt(std::abs(j0)));
  c.expect(dl::check_local_injectivity_at(cube, line, {0.0}, sampling(200)).status == dl::Status::pass,
           "local injectivity at 0 did not pass");

  oracle::Gen gen(5);
  int misses = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double u = gen.uniform(-2.0, 2.0);
    const double y = u * u * u;
    dl::InversionOptions opts;
    opts.tol = 1e-14;
    opts.detect_multiplicity = false;
    try {
      const auto r = dl::invert(cube, line, {y}, {0.1}, opts);
      const double err = std::abs(r.solution[0] - std::cbrt(y));
      worst = std::max(worst, err);
      if (err > 1e-6) ++misses;
    } catch (const dl::Error&) {
      ++misses;
    }
  }
  c.expect(misses == 0, std::to_string(misses) + " inversions missed, worst error " + fmt(worst));
}

void flat_direction(Check& c) {
  const auto q = fixtures::flat_second();
  c.expect(dl::check_law_of_demand(q, kBox5, sampling(5000)).status == dl::Status::pass, "law of demand failed");
  c.expect(dl::find_constancy_segment(q, kBox5, {0.3, 0.0}).has_value(), "no constancy segment found");
  c.expect(dl::check_injectivity(q, kBox5, sampling(100)).status == dl::Status::violation,
           "injectivity not violated");
  const dl::Vector y{0.7, 0.0};
  const auto a = dl::invert(q, kBox5, y, {0.0, -3.0});
  const auto b = dl::invert(q, kBox5, y, {1.0, 2.5});
  c.expect(a.multiplicity == dl::Multiplicity::segment_found && b.multiplicity == dl::Multiplicity::segment_found,
           "multiplicity not segment_found");
  const auto mid = dl::scaled(dl::add(a.solution, b.solution), 0.5);
  const double miss = dl::max_abs_diff(q.eval(mid), y);
  c.expect(dl::max_abs_diff(a.solution, b.solution) > 1e-3, "the two starts found the same solution");
  c.expect(miss <= 1e-9, "midpoint misses the target by " + fmt(miss));
}

void equivalence_sweep(Check& c) {
  oracle::Gen gen(2718);
  for (std::size_t k : {2u, 3u}) {
    const auto box = dl::Domain::cube(k, -5.0, 5.0);
    int drawn = 0, disagreements = 0;
    while (drawn < 50) {
      const auto e = gen.vec(k * k, -2.0, 2.0);
      dl::Matrix a(k, k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) a(i, j) = e[i * k + j];
      const auto qd = dl::is_weakly_quasi_definite(a);
      if (std::abs(qd.min_symmetric_eigenvalue) < 0.05) continue;
      ++drawn;
      const auto lod = dl::check_law_of_demand(dl::make_linear(a), box, sampling(5000, drawn));
      const bool psd = qd.classification != dl::Definiteness::indefinite;
      if ((lod.status == dl::Status::pass) != psd) ++disagreements;
    }
    c.expect(disagreements == 0, std::to_string(disagreements) + " disagreements at K=" + std::to_string(k));
  }
}

void arum(Check& c) {
  oracle::Gen gen(99);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto u = gen.vec(3, -3.0, 3.0), ut = gen.vec(3, -3.0, 3.0);
    const auto draw = dl::arum_draw({}, 3, 77, static_cast<std::uint64_t>(i));
    const auto d = dl::subtract(dl::arum_individual(u, draw), dl::arum_individual(ut, draw));
    if (dl::dot(d, dl::subtract(u, ut)) < 0.0) ++violations;
  }
  c.expect(violations == 0, std::to_string(violations) + " individual violations");

  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto u = gen.vec(2, -2.0, 2.0);
    const auto sim = dl::arum_simulate(u, 200000, 1000 + i);
    const auto exact = oracle::logit_direct(u);
    worst = std::max(worst, dl::max_abs_diff(sim, exact));
  }
  c.expect(worst <= 0.005, "simulated shares off logit by " + fmt(worst));

  int aggregate = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto u = gen.vec(2, -2.0, 2.0), ut = gen.vec(2, -2.0, 2.0);
    const auto qa = dl::arum_simulate(u, 1000, 5), qb = dl::arum_simulate(ut, 1000, 5);
    if (dl::dot(dl::subtract(qa, qb), dl::subtract(u, ut)) < 0.0) ++aggregate;
  }
  c.expect(aggregate == 0, std::to_string(aggregate) + " aggregate violations under common random numbers");
}

void quasilinear(Check& c) {
  const dl::Matrix m{{2.0, 0.0}, {0.0, 4.0}};
  const auto spec = dl::quadratic_objective(m);
  const auto q = dl::make_quasilinear(spec);
  oracle::Gen gen(31);
  double worst = 0.0, worst_trip = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto u = gen.vec(2, -5.0, 5.0);
    const auto y = q.eval(u);
    worst = std::max(worst, dl::max_abs_diff(y, dl::Vector{u[0] / 2.0, u[1] / 4.0}));
    const auto inv = dl::invert_quasilinear(spec, y);
    worst_trip = std::max(worst_trip, std::max(inv.round_trip_error, dl::max_abs_diff(inv.u, u)));
    c.expect(inv.status == dl::QuasilinearInverseStatus::unique, "quadratic inverse flagged unsupported");
  }
  c.expect(worst <= 1e-6, "argmax off M^-1 u by " + fmt(worst));
  c.expect(worst_trip <= 1e-6, "round trip off by " + fmt(worst_trip));

  dl::QuasilinearSpec kink;
  kink.dim = 1;
  kink.objective = [](const dl::Vector& y) { return -std::abs(y[0]); };
  kink.gradient = [](const dl::Vector& y) { return dl::Vector{y[0] > 0 ? -1.0 : (y[0] < 0 ? 1.0 : 0.0)}; };
  c.expect(dl::invert_quasilinear(kink, {0.0}).status == dl::QuasilinearInverseStatus::unsupported,
           "kink at 0 not flagged");
}

void logit_substitutes(Check& c) {
  const auto q = dl::make_logit(2);
  const auto opts = sampling(10000, 11);
  const std::vector<dl::Verdict> verdicts{
      dl::check_own_good_monotonicity(q, kBox5, opts),
      dl::check_weak_substitutability(q, kBox5, opts),
      dl::check_inverse_isotonicity(q, kBox5, opts),
      dl::check_p_function(q, kBox5, opts),
  };
  for (const auto& v : verdicts)
    c.expect(v.status == dl::Status::pass && v.witnesses.empty(), v.diagnostic_name + " did not pass");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(Check& c) {
  std::vector<std::filesystem::path> specs;
  for (const auto& entry : std::filesystem::directory_iterator(DEMANDLENS_RUNSPEC_DIR))
    if (entry.path().extension() == ".json") specs.push_back(entry.path());
  std::sort(specs.begin(), specs.end());
  c.expect(!specs.empty(), "no run specs found");
  dl::RunOptions parallel;
  parallel.workers = 4;
  for (const auto& path : specs) {
    const auto spec = dl::load_config(slurp(path));
    const auto first = dl::run(spec);
    const auto second = dl::run(spec);
    const auto threaded = dl::run(spec, parallel);
    const std::string text = dl::emit_report(first);
    const bool same = text == dl::emit_report(second) && text == dl::emit_report(threaded) &&
                      dl::emit_witness_csv(first) == dl::emit_witness_csv(threaded);
    c.expect(same, path.filename().string() + " differs between runs");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Check&)>>> criteria{
      {"linear example", example_one},
      {"cubic example", example_two},
      {"change of variables", change_of_variables},
      {"indicator preimage", indicator},
      {"singular jacobian, cube map", cube_on_the_line},
      {"flat direction", flat_direction},
      {"law of demand vs quasi-definiteness", equivalence_sweep},
      {"random utility", arum},
      {"quasilinear", quasilinear},
      {"logit substitutes", logit_substitutes},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    if (!ok) ++failed;
    std::printf("[%s] %zu %s", ok ? "PASS" : "FAIL", i + 1, criteria[i].first);
    for (const auto& f : c.failures) std::printf("; %s", f.c_str());
    std::printf("\n");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
