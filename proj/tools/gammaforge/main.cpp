#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gammaforge/cli.hpp"

namespace fs = std::filesystem;
using namespace gammaforge::cli;

namespace {

bool write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  return static_cast<bool>(out);
}

std::string csv_path_for(const std::string& report) {
  fs::path p(report);
  p.replace_extension(".csv");
  return p.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gamma-calculus and curvature-dimension verification engine"};
  std::string command, job_path, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(commands()));
  app.add_option("--job", job_path, "Job document (JSON)")->required();
  app.add_option("--out", out_path, "Report path; the CSV table goes next to it");
  app.add_option("--seed", seed, "Random seed (overrides the job)");
  app.add_option("--tol", tol, "Tolerance (overrides the job)")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  RunResult result;
  std::optional<std::string> csv_path;
  try {
    JobSpec job = load_job(job_path);
    if (seed) job.seed = *seed;
    if (tol) job.tol = *tol;
    if (out_path.empty() && job.report_path) out_path = *job.report_path;
    csv_path = job.csv_path;
    result = run(command, std::move(job));
  } catch (const UsageError& e) {
    result.exit_code = 2;
    result.report = {{"tool", {{"name", "gammaforge"}, {"version", kToolVersion}}},
                     {"command", command},
                     {"status", "error"},
                     {"exit_code", 2},
                     {"error", {{"type", "usage"}, {"message", e.what()}}}};
    if (!e.path().empty()) result.report["error"]["path"] = e.path();
    result.table = CsvTable{{"error"}, {{e.what()}}};
  }

  if (result.exit_code == 2) std::cerr << "gammaforge: " << result.report["error"]["message"].get<std::string>() << "\n";
  const std::string body = result.report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << body;
    if (csv_path && !write_file(*csv_path, result.table.str())) {
      std::cerr << "gammaforge: cannot write " << *csv_path << "\n";
      return 2;
    }
  } else {
    const std::string csv = csv_path.value_or(csv_path_for(out_path));
    if (!write_file(out_path, body) || !write_file(csv, result.table.str())) {
      std::cerr << "gammaforge: cannot write report to " << out_path << "\n";
      return 2;
    }
  }
  return result.exit_code;
}
