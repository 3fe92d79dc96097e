#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drf/data.hpp"
#include "drf/estimators.hpp"
#include "drf/parallel.hpp"
#include "drf/treatment.hpp"

namespace drf {

enum class Study {
  sim1,
  sim2_linear,
  sim2_quadratic,
  sim3,
  sim4,
  smoking_quadratic,
  smoking_piecewise,
  smoking_hockey
};

std::string to_string(Study study);
Study parse_study(const std::string& name);
const std::vector<Study>& all_studies();

struct StudySpec {
  Study study = Study::sim1;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  /// Read the second argument of N(., .) as a standard deviation.
  bool sd_reading = false;

  void validate() const;
};

/// Default spec: n = 2000, or 9073 for the smoking studies.
StudySpec default_spec(Study study);

/// Draws one dataset. Deterministic in (study, n, seed, sd_reading).
Dataset generate(const StudySpec& spec);

/// Treatment model recipe that is correctly specified for the study.
DesignSpec study_design(Study study);

/// True E{Y(t)}.
double true_drf(const StudySpec& spec, double t);

/// Evaluation grid used for the study's summaries. The smoking grid depends
/// on the data (10 points between the 5% and 95% quantiles of T).
Grid study_grid(const StudySpec& spec, const Dataset* data = nullptr);

/// Baseline for relative curves; empty when the study reports the absolute
/// DRF (sim4 and the smoking studies).
std::optional<double> study_baseline(Study study);

/// Truth on the study's reporting scale: relative to `baseline` when given.
double study_truth(const StudySpec& spec, double t, std::optional<double> baseline);

struct SummaryRow {
  std::string estimator;
  std::size_t point = 0;
  double t = 0.0;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;  // 2.5% across replicates
  double upper = 0.0;  // 97.5%
  double bias = 0.0;
  std::size_t successes = 0;
  std::size_t failures = 0;
};

struct ReplicationSummary {
  StudySpec spec;
  Grid grid;
  std::optional<double> baseline;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators;
  std::vector<SummaryRow> rows;
  std::map<std::string, std::size_t> failures;
  /// Estimators for which every replicate failed, with the last message.
  std::map<std::string, std::string> aborted;
  /// Successful replicate curves per estimator, in replicate order.
  std::map<std::string, std::vector<std::vector<double>>> draws;

  std::vector<SummaryRow> rows_for(const std::string& estimator) const;
};

/// Replicate r draws its dataset with seed derive_seed(seed, r), fits the
/// study's treatment model and runs every estimator. An estimator fails on a
/// replicate when it throws or returns a singular point.
ReplicationSummary run_replications(const StudySpec& spec, const std::vector<EstimatorConfig>& estimators,
                                    const Grid& grid, std::optional<double> baseline, std::size_t reps,
                                    std::uint64_t seed, Execution execution = Execution::serial);

void write_summary_csv(std::ostream& out, const ReplicationSummary& summary);
/// Long format: grid point, t, truth.
void write_truth_csv(std::ostream& out, const StudySpec& spec, const Grid& grid,
                     std::optional<double> baseline);

}  // namespace drf
