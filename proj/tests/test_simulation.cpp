#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "drf/error.hpp"
#include "drf/random.hpp"
#include "drf/simulation.hpp"
#include "drf/stats.hpp"
#include "drf/treatment.hpp"
#include "helpers.hpp"

using namespace drf;

namespace {

std::vector<double> column(const Eigen::VectorXd& v) { return testing::vec(v); }

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean(), y = b.array() - b.mean();
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

EstimatorConfig config(EstimatorKind kind) {
  EstimatorConfig c;
  c.kind = kind;
  return c;
}

}  // namespace

TEST_CASE("study names round trip") {
  for (Study s : all_studies()) CHECK(parse_study(to_string(s)) == s);
  CHECK_THROWS_AS(parse_study("sim9"), Error);
  CHECK(default_spec(Study::sim1).n == 2000);
  CHECK(default_spec(Study::smoking_hockey).n == 9073);
}

TEST_CASE("Simulation I moments") {
  StudySpec spec = default_spec(Study::sim1);
  spec.seed = 1;
  const Dataset d = generate(spec);
  CHECK(std::abs(d.response().mean() - 5.0) < 0.15);
  CHECK(std::abs(d.covariates().col(0).mean() - 0.5) < 0.05);
  CHECK(std::abs(corr(d.treatment(), d.covariates().col(0)) - std::sqrt(0.5)) < 0.05);
  CHECK(d.has_unit_weights());
  for (double t : {-0.5, 0.3, 1.5}) CHECK(true_drf(spec, t) == 5.0);
  CHECK(study_truth(spec, 1.0, study_baseline(spec.study)) == 0.0);
}

TEST_CASE("the second argument of N(., .) can be read as a standard deviation") {
  StudySpec spec = default_spec(Study::sim1);
  spec.seed = 2;
  const double var_t = stats::sd(column(generate(spec).treatment()));
  spec.sd_reading = true;
  const double sd_t = stats::sd(column(generate(spec).treatment()));
  // Variance reading: Var(T) = 0.5; sd reading: Var(T) = 0.125.
  CHECK(std::abs(var_t * var_t - 0.5) < 0.05);
  CHECK(std::abs(sd_t * sd_t - 0.125) < 0.015);
}

TEST_CASE("Simulation III outcome coefficients are recovered") {
  StudySpec spec = default_spec(Study::sim3);
  spec.seed = 3;
  const Dataset d = generate(spec);
  REQUIRE(d.p() == 4);
  const auto n = static_cast<Eigen::Index>(d.n());
  Eigen::MatrixXd x(n, 6);
  x.col(0).setOnes();
  x.middleCols(1, 4) = d.covariates();
  x.col(5) = d.treatment();
  const Eigen::VectorXd c = x.colPivHouseholderQr().solve(d.response());
  const double expected[] = {210.0, 27.4, 13.7, 13.7, 13.7, 1.0};
  for (int j = 1; j < 6; ++j) CHECK(std::abs(c[j] - expected[j]) < 0.1);
  const GaussianTreatmentModel m = fit_treatment_model(d, study_design(spec.study));
  CHECK(std::abs(m.beta[1] + 1.0) < 0.1);
  CHECK(std::abs(m.beta[2] - 0.5) < 0.1);
}

TEST_CASE("Simulation IV has a constant DRF") {
  StudySpec spec = default_spec(Study::sim4);
  spec.seed = 5;
  const Dataset d = generate(spec);
  CHECK(std::abs(d.response().mean() - 2.0) < 0.1);
  CHECK(true_drf(spec, -1.0) == 2.0);
  CHECK_FALSE(study_baseline(spec.study));
  const Grid g = study_grid(spec);
  CHECK(g.size() == 10);
  CHECK(g.kind == GridKind::theoretical_subclass_medians);
}

TEST_CASE("smoking data carry sampling weights and a data-driven grid") {
  StudySpec spec = default_spec(Study::smoking_piecewise);
  spec.seed = 6;
  spec.n = 1500;
  const Dataset d = generate(spec);
  CHECK_FALSE(d.has_unit_weights());
  CHECK(d.weights().minCoeff() > 0.0);
  CHECK_THROWS_AS(study_grid(spec), Error);
  const Grid g = study_grid(spec, &d);
  CHECK(g.size() == 10);
  CHECK(g.points.front() > d.treatment().minCoeff());
  CHECK(g.points.back() < d.treatment().maxCoeff());
}

TEST_CASE("generation is reproducible and seed dependent") {
  for (Study s : all_studies()) {
    CAPTURE(to_string(s));
    StudySpec spec = default_spec(s);
    spec.n = 300;
    spec.seed = 77;
    const Dataset a = generate(spec), b = generate(spec);
    CHECK(a.treatment() == b.treatment());
    CHECK(a.response() == b.response());
    CHECK(a.covariates() == b.covariates());
    spec.seed = 78;
    CHECK(generate(spec).treatment() != a.treatment());
  }
  StudySpec bad = default_spec(Study::sim1);
  bad.n = 5;
  CHECK_THROWS_AS(generate(bad), Error);
}

TEST_CASE("one replication equals a single fit") {
  StudySpec spec = default_spec(Study::sim1);
  const Grid grid = study_grid(spec);
  const auto baseline = study_baseline(spec.study);
  const ReplicationSummary s = run_replications(spec, {config(EstimatorKind::ivd)}, grid, baseline, 1, 42);
  spec.seed = derive_seed(42, 0);
  const Dataset d = generate(spec);
  const GaussianTreatmentModel m = fit_treatment_model(d, study_design(spec.study));
  const DrfEstimate e = relative_drf(run_estimator(config(EstimatorKind::ivd), d, m, grid), *baseline);
  const auto rows = s.rows_for("ivd");
  REQUIRE(rows.size() == grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(rows[j].mean == e.values[j]);
    CHECK(rows[j].sd == 0.0);
    CHECK(rows[j].bias == doctest::Approx(e.values[j] - rows[j].truth));
    CHECK(rows[j].successes == 1);
  }
}

TEST_CASE("replications are reproducible, parallel-safe and serialisable") {
  const StudySpec spec = default_spec(Study::sim1);
  const Grid grid = study_grid(spec);
  const std::vector<EstimatorConfig> est{config(EstimatorKind::ivd), config(EstimatorKind::hi)};
  const ReplicationSummary a = run_replications(spec, est, grid, 0.0, 6, 9);
  const ReplicationSummary b = run_replications(spec, est, grid, 0.0, 6, 9, Execution::parallel);
  CHECK(a.draws == b.draws);
  std::ostringstream sa, sb, truth;
  write_summary_csv(sa, a);
  write_summary_csv(sb, b);
  const std::string summary = sa.str();
  CHECK(summary == sb.str());
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 2 * 10);
  write_truth_csv(truth, spec, grid, 0.0);
  const std::string t = truth.str();
  CHECK(std::count(t.begin(), t.end(), '\n') == 11);
  CHECK_THROWS_AS(run_replications(spec, est, grid, 0.0, 0, 9), Error);
  CHECK_THROWS_AS(run_replications(spec, {}, grid, 0.0, 2, 9), Error);
}

TEST_CASE("failures are counted, not fatal") {
  const StudySpec spec = default_spec(Study::sim1);
  EstimatorConfig iw = config(EstimatorKind::iw);
  iw.bandwidth = 1e-9;
  const ReplicationSummary s =
      run_replications(spec, {config(EstimatorKind::ivd), iw}, study_grid(spec), 0.0, 3, 10);
  CHECK(s.failures.at("iw") == 3);
  CHECK(s.aborted.count("iw") == 1);
  CHECK(s.failures.at("ivd") == 0);
  CHECK(s.draws.at("ivd").size() == 3);
}

TEST_CASE("Simulation II quadratic response defeats a linear within-class model") {
  StudySpec spec = default_spec(Study::sim2_quadratic);
  const Grid grid = study_grid(spec);
  const ReplicationSummary s = run_replications(spec, {config(EstimatorKind::ivd)}, grid,
                                                study_baseline(spec.study), 10, 12, Execution::parallel);
  const auto rows = s.rows_for("ivd");
  CHECK(rows.back().t == doctest::Approx(5.5));
  CHECK(std::abs(rows.back().bias) > 1.0);
}

TEST_CASE("Simulation III: SCM(p-function) is nearly unbiased") {
  // Endpoint SD is about 1.5, so 400 replicates keep the Monte Carlo error near 0.08.
  StudySpec spec = default_spec(Study::sim3);
  const Grid grid = study_grid(spec);
  const ReplicationSummary s = run_replications(spec, {config(EstimatorKind::scm_pf)}, grid,
                                                study_baseline(spec.study), 400, 13, Execution::parallel);
  for (const SummaryRow& r : s.rows_for("scm-pf")) CHECK(std::abs(r.bias) < 0.3);
}
