#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "drf/data.hpp"
#include "drf/estimators.hpp"
#include "drf/simulation.hpp"
#include "drf/treatment.hpp"

namespace drf::cli {

enum class GridMode { automatic, range, quantiles, theoretical };

struct GridSpec {
  GridMode mode = GridMode::automatic;
  double lo = 0.0;  // range: treatment values; quantiles: probabilities
  double hi = 0.0;
  std::size_t points = 10;  // range/quantiles: D; theoretical: subclass count
};

/// "lo:hi:D" -> range.
GridSpec parse_range(const std::string& text);
/// "D" or "lo_p:hi_p:D" -> quantiles.
GridSpec parse_quantiles(const std::string& text);

struct DiagnoseOptions {
  std::vector<double> cutpoints;  // empty: quintiles of T
  int blocks = 5;
  double window = 0.05;
};

/// Fully resolved description of one run; serialised into manifest.json.
struct RunConfig {
  std::string subcommand;  // fit | diagnose | simulate | study
  std::optional<std::filesystem::path> data_path;
  std::optional<StudySpec> study;
  ColumnSpec columns;
  DesignSpec design;
  std::vector<EstimatorConfig> estimators;
  GridSpec grid;
  /// Empty: subcommand default. "none" disables relative curves.
  std::optional<std::string> baseline;
  std::size_t boot = 0;
  std::size_t reps = 0;
  std::optional<std::uint64_t> seed;
  DiagnoseOptions diagnose;
  std::filesystem::path out_dir = ".";

  /// Throws Error(invalid_input) on inconsistent settings.
  void validate() const;
};

std::string to_json_text(const RunConfig& config);
RunConfig config_from_json_text(const std::string& text);

/// Executes the run, writing artifacts and manifest.json into out_dir.
/// Returns the process exit status; diagnostics go to `log`.
int run(const RunConfig& config, std::ostream& log);

/// Full command-line entry point (parsing, error records, exit status).
int main(int argc, char** argv);

}  // namespace drf::cli
