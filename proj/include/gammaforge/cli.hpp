#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gammaforge/spectral.hpp"

namespace gammaforge::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr std::uint64_t kDefaultSeed = 20240611;

/// Malformed job document; path names the offending field.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct AxisSpec {
  double min = 0.0;
  double max = 0.0;
  int count = 1;
};

struct GridSpec {
  std::vector<AxisSpec> axes;
  std::vector<Point> points;
};

/// Cartesian product of the axes in lexicographic order (last axis fastest),
/// or the explicit point list as given.
std::vector<Point> grid_expand(const GridSpec& spec);

struct JobSpec {
  /// The validated document, echoed into the report.
  json source;
  std::string command;
  json operator_doc;
  json transform_doc;
  json params = json::object();
  std::optional<GridSpec> grid;
  std::optional<Domain1D> domain;
  std::uint64_t seed = kDefaultSeed;
  std::optional<double> tol;
  std::optional<std::string> report_path;
  std::optional<std::string> csv_path;
};

const std::vector<std::string>& commands();

/// Schema validation; unknown fields are rejected.
JobSpec parse_job(const json& doc);
JobSpec load_job(const std::string& path);

DiffusionOperator build_operator(const json& doc);
TransformSpec build_transform(const json& doc, int dim);
GridSpec parse_grid(const json& doc, int dim);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// RFC 4180: CRLF line ends, fields with comma, quote or line breaks quoted.
  std::string str() const;
};

struct RunResult {
  int exit_code = 0;
  json report;
  CsvTable table;
};

/// Exit codes: 0 pass, 1 mathematical fail, 2 usage or domain error.
RunResult run(const std::string& command, JobSpec job);

/// Shortest round-trip text of a double ("inf"/"-inf" for infinities).
std::string format_real(double v);
json ext_json(ExtReal v);

}  // namespace gammaforge::cli
