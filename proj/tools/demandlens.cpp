#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "demandlens/config.hpp"
#include "demandlens/report.hpp"

namespace dl = demandlens;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dl::ConfigError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dl::ConfigError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw dl::ConfigError("write to '" + path + "' failed");
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("DEMANDLENS_SEED");
  if (!raw || !*raw) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(raw, &used, 10);
    if (used != std::string(raw).size() || std::string(raw).front() == '-') throw std::invalid_argument(raw);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw dl::ConfigError(std::string("DEMANDLENS_SEED: expected a non-negative integer, got '") + raw + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Injectivity diagnostics and inversion for demand systems"};
  app.require_subcommand(1);

  std::string spec_path;
  std::optional<std::string> out_path, csv_path;
  unsigned parallel = 1;
  bool timings = false;

  auto* run_cmd = app.add_subcommand("run", "Execute a run specification and write a report");
  run_cmd->add_option("spec", spec_path, "Run specification (JSON)")->required();
  run_cmd->add_option("--out", out_path, "Report path (default: output.report_path, else stdout)");
  run_cmd->add_option("--witness-csv", csv_path, "Witness CSV path (default: output.witness_csv_path)");
  run_cmd->add_option("--parallel", parallel, "Worker threads for independent tasks")->check(CLI::Range(1u, 256u));
  run_cmd->add_flag("--timings", timings, "Record wall time per task (reports are then not reproducible)");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a run specification and print it with defaults");
  validate_cmd->add_option("spec", validate_path, "Run specification (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) {
      const dl::RunSpec spec = dl::load_config(read_file(validate_path), seed_from_environment());
      std::string text;
      dl::report_detail::write(text, spec.echo, 0);
      std::cout << text << "\n";
      return 0;
    }

    const dl::RunSpec spec = dl::load_config(read_file(spec_path), seed_from_environment());
    const dl::Report report = dl::run(spec, {parallel, timings});
    const std::string text = dl::emit_report(report);
    if (const auto path = out_path ? out_path : spec.report_path)
      write_file(*path, text);
    else
      std::cout << text;
    if (const auto path = csv_path ? csv_path : spec.witness_csv_path) write_file(*path, dl::emit_witness_csv(report));

    std::cerr << "tasks " << report.tasks.size() << ": " << report.count(dl::Status::pass) << " pass, "
              << report.count(dl::Status::violation) << " violation, " << report.count(dl::Status::inconclusive)
              << " inconclusive, " << report.errors() << " error\n";
    return dl::exit_code(report);
  } catch (const std::exception& e) {
    std::cerr << "demandlens: " << e.what() << "\n";
    return 1;
  }
}
