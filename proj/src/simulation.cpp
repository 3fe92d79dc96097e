#include "drf/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "drf/csv.hpp"
#include "drf/error.hpp"
#include "drf/random.hpp"
#include "drf/stats.hpp"

namespace drf {

namespace {

const std::vector<std::pair<Study, std::string>>& study_names() {
  static const std::vector<std::pair<Study, std::string>> names{
      {Study::sim1, "sim1"},
      {Study::sim2_linear, "sim2_linear"},
      {Study::sim2_quadratic, "sim2_quadratic"},
      {Study::sim3, "sim3"},
      {Study::sim4, "sim4"},
      {Study::smoking_quadratic, "smoking_quadratic"},
      {Study::smoking_piecewise, "smoking_piecewise"},
      {Study::smoking_hockey, "smoking_hockey"}};
  return names;
}

bool is_smoking(Study s) {
  return s == Study::smoking_quadratic || s == Study::smoking_piecewise || s == Study::smoking_hockey;
}

// Smoking covariate: log(age) ~ N(log 40, 0.3^2).
const double kLogAgeMean = std::log(40.0);
constexpr double kLogAgeSd = 0.3;

double smoking_mean(Study s, double t) {
  switch (s) {
    case Study::smoking_quadratic: return 4.0 / 25.0 * t * t;
    case Study::smoking_piecewise: return t <= 2.0 ? -4.0 - 0.5 * t : -5.0 - 2.3 * (t - 2.0);
    case Study::smoking_hockey: return t <= 3.0 ? -8.1 : -8.1 + 1.5 * (t - 3.0) * (t - 3.0);
    default: throw Error(ErrorCode::invalid_input, "not a smoking study");
  }
}

// T | Z ~ N(Z, 1 + var_x) with Z ~ Bernoulli(0.5).
double sim4_quantile(double p, double var_x) {
  const double s = std::sqrt(1.0 + var_x);
  auto cdf = [&](double t) { return 0.5 * stats::normal_cdf(t / s) + 0.5 * stats::normal_cdf((t - 1.0) / s); };
  double lo = -20.0, hi = 21.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::string to_string(Study study) {
  for (const auto& [s, name] : study_names())
    if (s == study) return name;
  return "unknown";
}

Study parse_study(const std::string& name) {
  for (const auto& [s, text] : study_names())
    if (text == name) return s;
  throw Error(ErrorCode::invalid_input, "unknown study '" + name + "'");
}

const std::vector<Study>& all_studies() {
  static const std::vector<Study> studies = [] {
    std::vector<Study> out;
    for (const auto& [s, name] : study_names()) out.push_back(s);
    return out;
  }();
  return studies;
}

void StudySpec::validate() const {
  if (n < 10) throw Error(ErrorCode::invalid_input, "study: n must be at least 10");
}

StudySpec default_spec(Study study) {
  StudySpec spec;
  spec.study = study;
  spec.n = is_smoking(study) ? 9073 : 2000;
  return spec;
}

Dataset generate(const StudySpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, 0);
  std::normal_distribution<double> z01(0.0, 1.0);
  // Second argument of N(., v): variance unless sd_reading.
  auto sd_of = [&](double v) { return spec.sd_reading ? v : std::sqrt(v); };
  auto normal = [&](double mean, double v) { return mean + sd_of(v) * z01(rng); };

  const auto n = static_cast<Eigen::Index>(spec.n);
  Eigen::VectorXd t(n), y(n);
  switch (spec.study) {
    case Study::sim1: {
      Eigen::MatrixXd x(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = normal(0.5, 0.25);
        t[i] = normal(x(i, 0), 0.25);
        y[i] = normal(10.0 * x(i, 0), 1.0);
      }
      return Dataset(std::move(x), {"x"}, std::move(t), std::move(y));
    }
    case Study::sim2_linear:
    case Study::sim2_quadratic: {
      const bool quad = spec.study == Study::sim2_quadratic;
      Eigen::MatrixXd x(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = normal(0.0, 1.0);
        x(i, 0) = xi;
        t[i] = normal(xi + xi * xi, 1.0);
        const double m = quad ? (xi + t[i]) * (xi + t[i]) : xi + t[i];
        y[i] = normal(m, 9.0);
      }
      return Dataset(std::move(x), {"x"}, std::move(t), std::move(y));
    }
    case Study::sim3: {
      Eigen::MatrixXd z(n, 4);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < 4; ++j) z(i, j) = z01(rng);
        t[i] = -z(i, 0) + 0.5 * z(i, 1) - 0.25 * z(i, 2) - 0.1 * z(i, 3) + z01(rng);
        y[i] = 210.0 + 27.4 * z(i, 0) + 13.7 * (z(i, 1) + z(i, 2) + z(i, 3)) + t[i] + z01(rng);
      }
      return Dataset(std::move(z), {"z1", "z2", "z3", "z4"}, std::move(t), std::move(y));
    }
    case Study::sim4: {
      std::bernoulli_distribution coin(0.5);
      Eigen::MatrixXd x(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double zi = coin(rng) ? 1.0 : 0.0;
        x(i, 0) = normal(zi, 0.01);
        t[i] = normal(x(i, 0), 1.0);
        y[i] = normal(4.0 * zi, 1.0);
      }
      return Dataset(std::move(x), {"x"}, std::move(t), std::move(y));
    }
    case Study::smoking_quadratic:
    case Study::smoking_piecewise:
    case Study::smoking_hockey: {
      // Packyear mechanism: years smoked are bounded by age, so large doses
      // are reachable only by older units.
      std::exponential_distribution<double> onset(1.0 / 10.0);
      std::lognormal_distribution<double> packs_dist(std::log(0.8), 0.7);
      std::lognormal_distribution<double> weight_dist(0.0, 0.5);
      Eigen::MatrixXd x(n, 1);
      Eigen::VectorXd w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double log_age = kLogAgeMean + kLogAgeSd * z01(rng);
        const double age = std::exp(log_age);
        const double start = std::min(12.0 + onset(rng), age - 0.5);
        const double packs = std::clamp(packs_dist(rng), 0.05, 2.0);
        x(i, 0) = age;
        t[i] = std::log(packs * (age - start));
        y[i] = smoking_mean(spec.study, t[i]) + log_age * log_age + 0.5 * z01(rng);
        w[i] = weight_dist(rng);
      }
      return Dataset(std::move(x), {"age"}, std::move(t), std::move(y), std::move(w));
    }
  }
  throw Error(ErrorCode::invalid_input, "unknown study");
}

DesignSpec study_design(Study study) {
  DesignSpec d;
  if (is_smoking(study)) d.squared = {"age"};
  if (study == Study::sim2_linear || study == Study::sim2_quadratic) d.squared = {"x"};
  return d;
}

double true_drf(const StudySpec& spec, double t) {
  switch (spec.study) {
    case Study::sim1: return 5.0;
    case Study::sim2_linear: return t;
    case Study::sim2_quadratic: return 1.0 + t * t;
    case Study::sim3: return 210.0 + t;
    case Study::sim4: return 2.0;
    default:
      return smoking_mean(spec.study, t) + kLogAgeMean * kLogAgeMean + kLogAgeSd * kLogAgeSd;
  }
}

Grid study_grid(const StudySpec& spec, const Dataset* data) {
  switch (spec.study) {
    case Study::sim1: return Grid::range(-0.5, 1.5, 10);
    case Study::sim2_linear:
    case Study::sim2_quadratic: return Grid::range(-1.5, 5.5, 10);
    case Study::sim3: return Grid::range(-2.5, 2.5, 10);
    case Study::sim4: {
      const double var_x = spec.sd_reading ? 0.01 * 0.01 : 0.01;
      Grid g;
      g.kind = GridKind::theoretical_subclass_medians;
      for (double p : stats::linspace(0.05, 0.95, 10)) g.points.push_back(sim4_quantile(p, var_x));
      g.validate();
      return g;
    }
    default: {
      if (!data) throw Error(ErrorCode::invalid_input, "smoking grid needs the generated data");
      std::vector<double> ts(data->treatment().data(), data->treatment().data() + data->n());
      std::sort(ts.begin(), ts.end());
      return Grid::range(stats::quantile_sorted(ts, 0.05), stats::quantile_sorted(ts, 0.95), 10);
    }
  }
}

std::optional<double> study_baseline(Study study) {
  if (study == Study::sim4 || is_smoking(study)) return std::nullopt;
  return 0.0;
}

double study_truth(const StudySpec& spec, double t, std::optional<double> baseline) {
  const double v = true_drf(spec, t);
  return baseline ? v - true_drf(spec, *baseline) : v;
}

std::vector<SummaryRow> ReplicationSummary::rows_for(const std::string& estimator) const {
  std::vector<SummaryRow> out;
  for (const auto& r : rows)
    if (r.estimator == estimator) out.push_back(r);
  return out;
}

ReplicationSummary run_replications(const StudySpec& spec, const std::vector<EstimatorConfig>& estimators,
                                    const Grid& grid, std::optional<double> baseline, std::size_t reps,
                                    std::uint64_t seed, Execution execution) {
  spec.validate();
  grid.validate();
  if (reps < 1) throw Error(ErrorCode::invalid_input, "need at least one replication");
  if (estimators.empty()) throw Error(ErrorCode::invalid_input, "no estimators");

  ReplicationSummary summary;
  summary.spec = spec;
  summary.grid = grid;
  summary.baseline = baseline;
  summary.reps = reps;
  summary.seed = seed;
  for (const auto& e : estimators) summary.estimators.push_back(display_name(e));

  const std::size_t k = estimators.size();
  struct Cell {
    std::optional<std::vector<double>> values;
    std::string failure;
  };
  std::vector<std::vector<Cell>> cells(reps, std::vector<Cell>(k));
  for_each_index(reps, execution, [&](std::size_t r) {
    StudySpec rs = spec;
    rs.seed = derive_seed(seed, r);
    std::optional<Dataset> data;
    std::optional<GaussianTreatmentModel> model;
    std::string setup_error;
    try {
      data.emplace(generate(rs));
      model.emplace(fit_treatment_model(*data, study_design(spec.study)));
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (std::size_t j = 0; j < k; ++j) {
      Cell& cell = cells[r][j];
      if (!setup_error.empty()) {
        cell.failure = setup_error;
        continue;
      }
      try {
        EstimatorConfig cfg = estimators[j];
        cfg.seed = derive_seed(rs.seed, 1 + j);
        cfg.smooth.execution = Execution::serial;
        DrfEstimate est = run_estimator(cfg, *data, *model, grid);
        if (est.any_singular()) {
          cell.failure = "singular grid point";
          continue;
        }
        if (baseline) est = relative_drf(est, *baseline);
        cell.values = std::move(est.values);
      } catch (const std::exception& e) {
        cell.failure = e.what();
      }
    }
  });

  const std::size_t d = grid.size();
  for (std::size_t j = 0; j < k; ++j) {
    const std::string& name = summary.estimators[j];
    auto& draws = summary.draws[name];
    std::size_t failures = 0;
    std::string last;
    for (std::size_t r = 0; r < reps; ++r) {
      if (cells[r][j].values) {
        draws.push_back(*cells[r][j].values);
      } else {
        ++failures;
        last = cells[r][j].failure;
      }
    }
    summary.failures[name] = failures;
    if (draws.empty()) {
      summary.aborted[name] = last;
      continue;
    }
    std::vector<double> col(draws.size());
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t r = 0; r < draws.size(); ++r) col[r] = draws[r][p];
      SummaryRow row;
      row.estimator = name;
      row.point = p;
      row.t = grid.points[p];
      row.truth = study_truth(spec, row.t, baseline);
      row.mean = stats::mean(col);
      row.sd = stats::sd(col);
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      row.lower = stats::quantile_sorted(sorted, 0.025);
      row.upper = stats::quantile_sorted(sorted, 0.975);
      row.bias = row.mean - row.truth;
      row.successes = draws.size();
      row.failures = failures;
      summary.rows.push_back(row);
    }
  }
  return summary;
}

void write_summary_csv(std::ostream& out, const ReplicationSummary& summary) {
  csv::write_row(out, {"study", "estimator", "point", "t", "truth", "mean", "sd", "lower", "upper", "bias",
                       "successes", "failures"});
  const std::string study = to_string(summary.spec.study);
  for (const auto& r : summary.rows)
    csv::write_row(out, {study, r.estimator, std::to_string(r.point), csv::format_double(r.t),
                         csv::format_double(r.truth), csv::format_double(r.mean), csv::format_double(r.sd),
                         csv::format_double(r.lower), csv::format_double(r.upper), csv::format_double(r.bias),
                         std::to_string(r.successes), std::to_string(r.failures)});
}

void write_truth_csv(std::ostream& out, const StudySpec& spec, const Grid& grid,
                     std::optional<double> baseline) {
  csv::write_row(out, {"point", "t", "truth"});
  for (std::size_t p = 0; p < grid.size(); ++p)
    csv::write_row(out, {std::to_string(p), csv::format_double(grid.points[p]),
                         csv::format_double(study_truth(spec, grid.points[p], baseline))});
}

}  // namespace drf
