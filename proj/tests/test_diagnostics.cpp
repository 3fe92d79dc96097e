#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "drf/diagnostics.hpp"
#include "drf/error.hpp"
#include "drf/random.hpp"
#include "drf/simulation.hpp"
#include "drf/stats.hpp"
#include "drf/treatment.hpp"
#include "helpers.hpp"

using namespace drf;

namespace {

/// Columns: x (confounder), then `extra` noise covariates independent of everything.
Dataset null_data(std::size_t n, int extra, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, 1 + extra);
  Eigen::VectorXd t(n), y(n);
  std::vector<std::string> names{"x"};
  for (int j = 0; j < extra; ++j) names.push_back("noise" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j <= extra; ++j) x(i, j) = z(rng);
    t[i] = x(i, 0) + z(rng);
    y[i] = t[i] + z(rng);
  }
  return Dataset(x, names, t, y);
}

double ks_normal(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = stats::normal_cdf(v[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

GaussianTreatmentModel model_on(const Dataset& d, std::vector<std::string> names) {
  GaussianTreatmentModel m;
  m.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(names.size()) + 1);
  m.beta[1] = 1.0;
  m.sigma2 = 1.0;
  m.covariate_names = std::move(names);
  (void)d;
  return m;
}

}  // namespace

TEST_CASE("IvD balance: constant covariates are flagged, not fatal") {
  Rng rng(1);
  std::normal_distribution<double> z;
  const std::size_t n = 200;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = 3.0;
    t[i] = x(i, 0) + z(rng);
  }
  const Dataset d(x, {"x", "c"}, t);
  const IvdBalanceReport r = balance_ivd(d, x.col(0));
  REQUIRE(r.rows.size() == 2);
  CHECK_FALSE(r.rows[0].flagged);
  CHECK(r.rows[1].flagged);
  CHECK(r.rows[1].note == "constant covariate");
  CHECK(r.qq_adjusted.size() == 1);
}

TEST_CASE("IvD balance: a covariate equal to the treatment is grossly imbalanced") {
  Rng rng(2);
  std::normal_distribution<double> z;
  const std::size_t n = 100;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = z(rng);
    x(i, 0) = t[i] + 1e-3 * z(rng);
  }
  const Dataset d(x, {"copy"}, t);
  const IvdBalanceReport r = balance_ivd(d, Eigen::VectorXd::Zero(n).array() + z(rng));
  CHECK(std::abs(r.rows[0].t_unadjusted) > 10.0);
}

TEST_CASE("IvD balance: binary covariates use the logistic z statistic") {
  Rng rng(3);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.4);
  const std::size_t n = 300;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = coin(rng) ? 1.0 : 0.0;
    t[i] = x(i, 0) + z(rng);
  }
  const Dataset d(x, {"x", "flag"}, t);
  const IvdBalanceReport r = balance_ivd(d, x.col(0));
  CHECK_FALSE(r.rows[0].binary);
  CHECK(r.rows[1].binary);
  CHECK(std::isfinite(r.rows[1].t_adjusted));
}

TEST_CASE("IvD balance under the null is standard normal") {
  // 100 replications, 20 noise covariates each; KS 5% critical value for 20 draws.
  const double critical = 0.294;
  int ok = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const Dataset d = null_data(2000, 20, 1000 + rep);
    const IvdBalanceReport r = balance_ivd(d, d.covariates().col(0));
    std::vector<double> stats;
    for (std::size_t j = 1; j < r.rows.size(); ++j) stats.push_back(r.rows[j].t_adjusted);
    if (ks_normal(stats) < critical) ++ok;
  }
  CHECK(ok >= 90);
}

TEST_CASE("balance statistics are invariant to affine rescaling of a covariate") {
  const Dataset d = null_data(300, 1, 4);
  Eigen::MatrixXd scaled = d.covariates();
  scaled.col(1) = 3.5 * scaled.col(1).array() - 7.0;
  const Dataset ds(scaled, d.covariate_names(), d.treatment(), d.response());
  const IvdBalanceReport a = balance_ivd(d, d.covariates().col(0));
  const IvdBalanceReport b = balance_ivd(ds, d.covariates().col(0));
  CHECK(std::abs(a.rows[1].t_adjusted - b.rows[1].t_adjusted) < 1e-10);
  CHECK(std::abs(a.rows[1].t_unadjusted - b.rows[1].t_unadjusted) < 1e-10);
  const GaussianTreatmentModel m = model_on(d, {"x", "noise0"});
  GaussianTreatmentModel m1 = m;
  m1.beta = Eigen::Vector3d(0.0, 1.0, 0.0);
  const HiBalanceReport ha = balance_hi(d, m1);
  GaussianTreatmentModel m2 = m1;
  m2.covariate_names = {"x", "noise0"};
  const HiBalanceReport hb = balance_hi(ds, m2);
  REQUIRE(ha.cells.size() == hb.cells.size());
  for (std::size_t c = 0; c < ha.cells.size(); ++c)
    if (ha.cells[c].covariate == "noise0") CHECK(std::abs(ha.cells[c].t_stat - hb.cells[c].t_stat) < 1e-10);
}

TEST_CASE("HI balance with one block is Welch's t test") {
  const Dataset d = null_data(150, 1, 5);
  GaussianTreatmentModel m = model_on(d, {"x", "noise0"});
  m.beta = Eigen::Vector3d(0.0, 1.0, 0.0);
  const std::vector<double> cuts{-0.5, 0.7};
  const HiBalanceReport r = balance_hi(d, m, cuts, 1);
  CHECK(r.cells.size() == 3 * 2);
  const Eigen::VectorXd& t = d.treatment();
  for (const HiBalanceCell& c : r.cells) {
    const Eigen::VectorXd x = d.covariates().col(d.covariate_index(c.covariate));
    std::vector<double> a, b;
    for (Eigen::Index i = 0; i < t.size(); ++i) (t[i] > c.lower && t[i] <= c.upper ? a : b).push_back(x[i]);
    const double sa = stats::sd(a), sb = stats::sd(b);
    const double welch = (stats::mean(a) - stats::mean(b)) /
                         std::sqrt(sa * sa / a.size() + sb * sb / b.size());
    CHECK(std::abs(c.t_stat - welch) < 1e-10);
  }
}

TEST_CASE("HI balance detects a covariate determined by the interval") {
  Rng rng(6);
  std::normal_distribution<double> z;
  const std::size_t n = 500;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    t[i] = x(i, 0) + z(rng);
  }
  const std::vector<double> cuts{0.0};
  for (std::size_t i = 0; i < n; ++i) x(i, 1) = t[i] > 0.0 ? 1.0 + 0.1 * z(rng) : 0.1 * z(rng);
  const Dataset d(x, {"x", "marker"}, t);
  GaussianTreatmentModel m = model_on(d, {"x", "marker"});
  m.beta = Eigen::Vector3d(0.0, 1.0, 0.0);
  const HiBalanceReport r = balance_hi(d, m, cuts, 5);
  for (const HiBalanceCell& c : r.cells)
    if (c.covariate == "marker") CHECK(std::abs(c.t_stat) > 5.0);
  CHECK_THROWS_AS(balance_hi(d, m, {1.0, 0.0}), Error);
  CHECK_THROWS_AS(balance_hi(d, m, cuts, 0), Error);
}

TEST_CASE("HI balance under the null rarely rejects") {
  int inside = 0, total = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const Dataset d = null_data(500, 1, 2000 + rep);
    GaussianTreatmentModel m = model_on(d, {"x", "noise0"});
    m.beta = Eigen::Vector3d(0.0, 1.0, 0.0);
    m.sigma2 = 1.0;
    const HiBalanceReport r = balance_hi(d, m);
    for (const HiBalanceCell& c : r.cells)
      if (c.covariate == "noise0" && c.interval == 2) {
        ++total;
        if (std::abs(c.t_stat) < 1.96) ++inside;
      }
  }
  REQUIRE(total == 100);
  CHECK(inside >= 90);
}

TEST_CASE("overlap: independent theta covers the interior") {
  Rng rng(7);
  std::normal_distribution<double> z;
  const std::size_t n = 5000;
  Eigen::VectorXd t(n), theta(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = z(rng);
    theta[i] = z(rng);
  }
  const Dataset d(Eigen::MatrixXd(theta), {"theta"}, t);
  const OverlapReport r = overlap_scatter(d, theta, Grid::range(-1.5, 1.5, 7));
  for (const OverlapPoint& p : r.points) CHECK(p.coverage > 0.8);
  CHECK(r.pairs.size() == n);
}

TEST_CASE("overlap: theta equal to T covers only its own window") {
  Rng rng(8);
  std::normal_distribution<double> z;
  const std::size_t n = 5000;
  Eigen::VectorXd t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = z(rng);
  const Dataset d(Eigen::MatrixXd(t), {"copy"}, t);
  const OverlapReport r = overlap_scatter(d, t, Grid::range(-1.5, 1.5, 7));
  for (const OverlapPoint& p : r.points) {
    CHECK(p.coverage < 0.3);
    CHECK(p.neighbours == doctest::Approx(0.1 * n).epsilon(0.05));
  }
  CHECK_THROWS_AS(OverlapIndex(t, t, 0.0), Error);
  CHECK_THROWS_AS(OverlapIndex(t, t.head(10), 0.05), Error);
}

TEST_CASE("overlap: smoking data lose coverage at heavy exposure") {
  StudySpec spec = default_spec(Study::smoking_quadratic);
  spec.seed = 9;
  const Dataset d = generate(spec);
  const GaussianTreatmentModel m = fit_treatment_model(d, study_design(spec.study));
  const Eigen::VectorXd theta = m.linear_predictor(d);
  const OverlapReport r = overlap_scatter(d, theta, Grid::range(0.0, 4.5, 10));
  double low_min = 1.0, high_min = 1.0;
  for (const OverlapPoint& p : r.points) (p.t > 3.0 ? high_min : low_min) = std::min(p.t > 3.0 ? high_min : low_min, p.coverage);
  CHECK(high_min < 1.0);
  CHECK(high_min < low_min);
}

TEST_CASE("diagnostic reports serialise to CSV") {
  const Dataset d = null_data(200, 1, 10);
  GaussianTreatmentModel m = model_on(d, {"x", "noise0"});
  m.beta = Eigen::Vector3d(0.0, 1.0, 0.0);
  std::ostringstream a, b, c, e;
  write_csv(a, balance_ivd(d, d.covariates().col(0)));
  write_csv(b, balance_hi(d, m));
  const OverlapReport o = overlap_scatter(d, d.covariates().col(0), Grid::range(-1, 1, 3));
  write_csv(c, o);
  write_pairs_csv(e, o);
  auto lines = [](const std::ostringstream& o) {
    const std::string s = o.str();
    return std::count(s.begin(), s.end(), '\n');
  };
  CHECK(a.str().rfind("method,covariate,binary", 0) == 0);
  CHECK(lines(a) == 3);
  CHECK(lines(b) == 1 + 5 * 2);
  CHECK(lines(c) == 4);
  CHECK(lines(e) == 201);
}
