#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drf/data.hpp"
#include "drf/estimators.hpp"
#include "drf/parallel.hpp"
#include "drf/treatment.hpp"

namespace drf {

struct BootstrapOptions {
  /// Treatment model recipe refitted on every replicate.
  DesignSpec design;
  /// Bootstrap the relative curve against this baseline.
  std::optional<double> baseline;
  Execution execution = Execution::serial;
};

struct BootstrapResult {
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::size_t failures = 0;
  /// Failure messages keyed by error code name, with counts.
  std::map<std::string, std::size_t> failure_reasons;
  std::vector<double> se;  // per grid point, SD of the successful replicates
  std::vector<double> lower;  // 2.5% percentile
  std::vector<double> upper;  // 97.5% percentile
  /// Successful replicate curves in replicate order.
  std::vector<std::vector<double>> draws;

  std::size_t successes() const { return draws.size(); }
  /// Percentile band at any level in (0, 1).
  Band band(double level) const;
};

/// Resamples units with probability proportional to their sampling weight
/// (replicates carry unit weights), refits the treatment model and reruns the
/// estimator on `grid`. Replicates that throw or hit a singular grid point are
/// failures; more than half failing raises Error(too_many_failures).
/// Replicate r uses the stream derive_seed(seed, r), so output does not
/// depend on the execution policy.
BootstrapResult bootstrap_drf(const Dataset& data, const EstimatorConfig& config, const Grid& grid,
                              std::size_t replicates, std::uint64_t seed,
                              const BootstrapOptions& options = {});

/// Copies SE and the 95% band into the estimate.
void attach(DrfEstimate& estimate, const BootstrapResult& result);

}  // namespace drf
