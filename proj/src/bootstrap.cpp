#include "drf/bootstrap.hpp"

#include <cmath>
#include <random>

#include "drf/error.hpp"
#include "drf/random.hpp"
#include "drf/stats.hpp"

namespace drf {

namespace {

struct Replicate {
  std::optional<std::vector<double>> values;
  std::string failure;
};

Replicate run_replicate(const Dataset& data, const EstimatorConfig& config, const Grid& grid,
                        std::uint64_t seed, std::size_t r, const BootstrapOptions& options) {
  Replicate out;
  try {
    Rng rng = make_rng(seed, r);
    const Eigen::VectorXd& w = data.weights();
    std::discrete_distribution<std::size_t> pick(w.data(), w.data() + w.size());
    std::vector<std::size_t> rows(data.n());
    for (auto& row : rows) row = pick(rng);
    const Dataset sample = data.take(rows, true);

    EstimatorConfig cfg = config;
    cfg.seed = derive_seed(derive_seed(seed, r), 1);
    cfg.smooth.execution = Execution::serial;
    const GaussianTreatmentModel model = fit_treatment_model(sample, options.design);
    DrfEstimate est = run_estimator(cfg, sample, model, grid);
    if (est.any_singular()) {
      out.failure = "singular";
      return out;
    }
    if (options.baseline) est = relative_drf(est, *options.baseline);
    out.values = std::move(est.values);
  } catch (const Error& e) {
    out.failure = to_string(e.code());
  } catch (const std::exception&) {
    out.failure = "exception";
  }
  return out;
}

}  // namespace

Band BootstrapResult::band(double level) const {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::invalid_input, "band level must lie in (0, 1)");
  Band b;
  b.level = level;
  if (draws.empty()) return b;
  const std::size_t d = draws.front().size();
  std::vector<double> col(draws.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t r = 0; r < draws.size(); ++r) col[r] = draws[r][j];
    std::sort(col.begin(), col.end());
    b.lower.push_back(stats::quantile_sorted(col, 0.5 * (1.0 - level)));
    b.upper.push_back(stats::quantile_sorted(col, 0.5 * (1.0 + level)));
  }
  return b;
}

BootstrapResult bootstrap_drf(const Dataset& data, const EstimatorConfig& config, const Grid& grid,
                              std::size_t replicates, std::uint64_t seed, const BootstrapOptions& options) {
  if (replicates < 2) throw Error(ErrorCode::invalid_input, "bootstrap needs at least 2 replicates");
  grid.validate();

  std::vector<Replicate> reps(replicates);
  for_each_index(replicates, options.execution, [&](std::size_t r) {
    reps[r] = run_replicate(data, config, grid, seed, r, options);
  });

  BootstrapResult result;
  result.replicates = replicates;
  result.seed = seed;
  for (auto& rep : reps) {
    if (rep.values) {
      result.draws.push_back(std::move(*rep.values));
    } else {
      ++result.failures;
      ++result.failure_reasons[rep.failure];
    }
  }
  if (2 * result.failures > replicates || result.successes() < 2) {
    std::string why;
    for (const auto& [reason, count] : result.failure_reasons)
      why += (why.empty() ? "" : ", ") + reason + ": " + std::to_string(count);
    throw Error(ErrorCode::too_many_failures, "bootstrap: " + std::to_string(result.failures) + " of " +
                                                  std::to_string(replicates) + " replicates failed (" + why + ")");
  }

  const std::size_t d = grid.size();
  std::vector<double> col(result.draws.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t r = 0; r < result.draws.size(); ++r) col[r] = result.draws[r][j];
    result.se.push_back(stats::sd(col));
  }
  const Band b = result.band(0.95);
  result.lower = b.lower;
  result.upper = b.upper;
  return result;
}

void attach(DrfEstimate& estimate, const BootstrapResult& result) {
  estimate.se = result.se;
  estimate.band = Band{0.95, result.lower, result.upper};
}

}  // namespace drf
