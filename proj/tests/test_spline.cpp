#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "drf/error.hpp"
#include "drf/random.hpp"
#include "drf/spline.hpp"
#include "helpers.hpp"

using namespace drf;
using testing::view;

namespace {

struct Sample {
  std::vector<double> u, v, y, w;
};

Sample draw(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    s.u.push_back(unif(rng));
    s.v.push_back(unif(rng));
    s.w.push_back(1.0);
  }
  s.y.resize(n);
  return s;
}

std::span<const double> sp(const std::vector<double>& x) { return {x.data(), x.size()}; }

}  // namespace

TEST_CASE("basis interpolates its knot values") {
  const CubicRegressionBasis b({-1.0, 0.0, 0.5, 2.0, 3.0});
  for (int j = 0; j < b.dim(); ++j) {
    const Eigen::RowVectorXd row = b.evaluate(b.knots()[j]);
    for (int m = 0; m < b.dim(); ++m) CHECK(row[m] == doctest::Approx(m == j ? 1.0 : 0.0).epsilon(1e-12));
  }
  // Partition of unity and exact reproduction of linear functions.
  for (double x : {-3.0, -0.7, 0.2, 1.1, 2.9, 5.0}) {
    const Eigen::RowVectorXd row = b.evaluate(x);
    CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
    double lin = 0.0;
    for (int m = 0; m < b.dim(); ++m) lin += row[m] * (2.0 - 3.0 * b.knots()[m]);
    CHECK(lin == doctest::Approx(2.0 - 3.0 * x).epsilon(1e-12));
  }
  CHECK_THROWS_AS(CubicRegressionBasis({0.0, 1.0}), Error);
  CHECK_THROWS_AS(CubicRegressionBasis({0.0, 1.0, 1.0}), Error);
}

TEST_CASE("penalty equals the integrated squared second derivative") {
  const CubicRegressionBasis b({0.0, 0.4, 1.5, 2.0, 3.5, 4.0});
  Eigen::VectorXd beta(6);
  beta << 1.0, -0.5, 2.0, 0.3, -1.0, 0.7;
  // Composite midpoint rule on central second differences.
  const double lo = b.knots().front(), hi = b.knots().back();
  const int m = 40000;
  const double dx = (hi - lo) / m, h = 1e-4;
  double integral = 0.0;
  for (int i = 0; i < m; ++i) {
    const double x = lo + (i + 0.5) * dx;
    const double f2 = (b.evaluate(x + h).dot(beta) - 2.0 * b.evaluate(x).dot(beta) + b.evaluate(x - h).dot(beta)) / (h * h);
    integral += f2 * f2 * dx;
  }
  CHECK(beta.dot(b.penalty() * beta) == doctest::Approx(integral).epsilon(1e-4));
  // Linear functions are unpenalised.
  Eigen::VectorXd lin(6);
  for (int j = 0; j < 6; ++j) lin[j] = 1.0 + 2.0 * b.knots()[j];
  CHECK(std::abs(lin.dot(b.penalty() * lin)) < 1e-10);
}

TEST_CASE("varying coefficient fit reproduces an affine surface") {
  Sample s = draw(300, 1);
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = 1.0 + 2.0 * s.u[i] + 3.0 * s.v[i];
  const SmoothFit fit = fit_varying_coefficient(sp(s.u), sp(s.v), sp(s.y), sp(s.w));
  CHECK(fit.kind() == SmoothKind::varying_coefficient);
  for (double a : {-1.5, 0.0, 1.2}) {
    CHECK(fit.slope(a) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(fit.intercept(a) == doctest::Approx(1.0 + 2.0 * a).epsilon(1e-6));
    CHECK(fit.value(a, 0.5) == doctest::Approx(1.0 + 2.0 * a + 1.5).epsilon(1e-6));
  }
  CHECK_THROWS_AS(fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w)).slope(0.0), Error);
}

TEST_CASE("constant response is fitted exactly") {
  Sample s = draw(200, 2);
  std::fill(s.y.begin(), s.y.end(), 4.25);
  for (const SmoothFit& fit : {fit_varying_coefficient(sp(s.u), sp(s.v), sp(s.y), sp(s.w)),
                               fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w))}) {
    CHECK(fit.value(0.3, -0.8) == doctest::Approx(4.25).epsilon(1e-9));
    CHECK(fit.value(-1.9, 1.9) == doctest::Approx(4.25).epsilon(1e-9));
  }
}

TEST_CASE("tensor fit reproduces affine-by-affine surfaces for every lambda") {
  Sample s = draw(250, 3);
  for (std::size_t i = 0; i < s.y.size(); ++i)
    s.y[i] = 0.5 - s.u[i] + 2.0 * s.v[i] + 1.5 * s.u[i] * s.v[i];
  for (double lambda : {0.0, 1e-3, 1.0, 1e3, 1e6}) {
    SmoothOptions opt;
    opt.fixed_lambdas = std::vector<double>{lambda, lambda};
    const SmoothFit fit = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w), opt);
    for (double a : {-1.0, 0.2, 1.7})
      for (double b : {-1.4, 0.0, 0.9})
        CHECK(fit.value(a, b) == doctest::Approx(0.5 - a + 2.0 * b + 1.5 * a * b).epsilon(1e-7));
  }
}

TEST_CASE("tensor fit recovers a smooth product surface") {
  const int side = 30;
  std::vector<double> u, v, y, w;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      u.push_back(-1.0 + 2.0 * i / (side - 1));
      v.push_back(-1.0 + 2.0 * j / (side - 1));
      y.push_back(std::sin(u.back()) * v.back() * v.back());
      w.push_back(1.0);
    }
  const SmoothFit fit = fit_tensor_scm(sp(u), sp(v), sp(y), sp(w));
  double worst = 0.0;
  for (double a = -0.9; a <= 0.9; a += 0.1)
    for (double b = -0.9; b <= 0.9; b += 0.1)
      worst = std::max(worst, std::abs(fit.value(a, b) - std::sin(a) * b * b));
  CHECK(worst < 0.02);
}

TEST_CASE("tensor fit is symmetric under swapping its arguments") {
  Sample s = draw(300, 4);
  Rng rng(40);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = std::cos(s.u[i]) * s.v[i] + 0.2 * z(rng);
  const SmoothFit a = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w));
  const SmoothFit b = fit_tensor_scm(sp(s.v), sp(s.u), sp(s.y), sp(s.w));
  CHECK(a.lambdas()[0] == doctest::Approx(b.lambdas()[1]));
  CHECK(a.lambdas()[1] == doctest::Approx(b.lambdas()[0]));
  for (double p : {-1.5, -0.3, 0.8})
    for (double q : {-1.1, 0.4, 1.6}) CHECK(std::abs(a.value(p, q) - b.value(q, p)) < 1e-8);
}

TEST_CASE("penalised fit is competitive with an unpenalised polynomial oracle") {
  // Oracle: least squares on a 20-column tensor of Legendre-like monomials.
  Sample s = draw(600, 5);
  Rng rng(50);
  std::normal_distribution<double> z;
  auto truth = [](double a, double b) { return std::sin(1.5 * a) + 0.5 * b * a; };
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = truth(s.u[i], s.v[i]) + 0.3 * z(rng);
  const SmoothFit fit = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w));

  std::vector<std::pair<int, int>> powers;
  for (int p = 0; p <= 4; ++p)
    for (int q = 0; q <= 3; ++q) powers.emplace_back(p, q);
  auto row = [&](double a, double b) {
    Eigen::RowVectorXd r(powers.size());
    for (std::size_t j = 0; j < powers.size(); ++j)
      r[j] = std::pow(a / 2.0, powers[j].first) * std::pow(b / 2.0, powers[j].second);
    return r;
  };
  Eigen::MatrixXd x(s.u.size(), powers.size());
  for (std::size_t i = 0; i < s.u.size(); ++i) x.row(i) = row(s.u[i], s.v[i]);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.y.data(), s.y.size());
  const Eigen::VectorXd coef = x.colPivHouseholderQr().solve(y);

  double mse_fit = 0.0, mse_oracle = 0.0;
  int count = 0;
  for (double a = -1.8; a <= 1.8; a += 0.2)
    for (double b = -1.8; b <= 1.8; b += 0.2) {
      mse_fit += std::pow(fit.value(a, b) - truth(a, b), 2);
      mse_oracle += std::pow(row(a, b).dot(coef) - truth(a, b), 2);
      ++count;
    }
  CHECK(mse_fit / count < 2.0 * mse_oracle / count);
}

TEST_CASE("roughness decreases as smoothing increases") {
  Sample s = draw(300, 6);
  Rng rng(60);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = std::sin(2.0 * s.u[i]) * s.v[i] + 0.3 * z(rng);
  double prev = INFINITY;
  for (double lambda : {1e-4, 1e-2, 1.0, 1e2, 1e4}) {
    SmoothOptions opt;
    opt.fixed_lambdas = std::vector<double>{lambda, lambda};
    const double r = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w), opt).roughness();
    CHECK(r <= prev * (1.0 + 1e-9));
    prev = r;
  }
}

TEST_CASE("GCV choice is the minimum of its profile") {
  Sample s = draw(300, 7);
  Rng rng(70);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = s.u[i] * s.u[i] + s.v[i] + 0.5 * z(rng);
  const SmoothFit fit = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w));
  REQUIRE(fit.gcv_profile().size() == 41u * 41u);
  for (const GcvCandidate& c : fit.gcv_profile()) CHECK(fit.gcv() <= c.gcv);
  CHECK(fit.edf() > 3.0);
  CHECK(fit.edf() < 25.0);
}

TEST_CASE("fit with fixed lambdas is linear in the response") {
  Sample s = draw(200, 8);
  std::vector<double> y1(s.u.size()), y2(s.u.size()), y3(s.u.size());
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    y1[i] = std::exp(s.u[i] / 2.0) * s.v[i];
    y2[i] = std::cos(3.0 * s.v[i]);
    y3[i] = 2.0 * y1[i] - 0.5 * y2[i];
  }
  SmoothOptions opt;
  opt.fixed_lambdas = std::vector<double>{0.37, 2.9};
  const Eigen::VectorXd c1 = fit_tensor_scm(sp(s.u), sp(s.v), sp(y1), sp(s.w), opt).coefficients();
  const Eigen::VectorXd c2 = fit_tensor_scm(sp(s.u), sp(s.v), sp(y2), sp(s.w), opt).coefficients();
  const Eigen::VectorXd c3 = fit_tensor_scm(sp(s.u), sp(s.v), sp(y3), sp(s.w), opt).coefficients();
  CHECK((c3 - (2.0 * c1 - 0.5 * c2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("parallel GCV search matches the serial one bit for bit") {
  Sample s = draw(300, 9);
  Rng rng(90);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = std::sin(s.u[i] + s.v[i]) + 0.3 * z(rng);
  SmoothOptions serial, parallel;
  parallel.execution = Execution::parallel;
  const SmoothFit a = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w), serial);
  const SmoothFit b = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w), parallel);
  CHECK(a.lambdas() == b.lambdas());
  CHECK(a.coefficients() == b.coefficients());
  CHECK(a.gcv() == b.gcv());
}

TEST_CASE("predict flags extrapolation and validates its input") {
  Sample s = draw(200, 10);
  for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = s.u[i] + s.v[i];
  const SmoothFit fit = fit_tensor_scm(sp(s.u), sp(s.v), sp(s.y), sp(s.w));
  Eigen::MatrixXd pts(2, 2);
  pts << 0.0, 0.0, 5.0, 0.0;
  const Prediction p = fit.predict(pts);
  CHECK_FALSE(p.extrapolated[0]);
  CHECK(p.extrapolated[1]);
  CHECK(p.any_extrapolated);
  CHECK(p.values[1] == doctest::Approx(5.0).epsilon(1e-6));
  CHECK_THROWS_AS(fit.predict(Eigen::MatrixXd::Zero(2, 3)), Error);
  std::vector<double> few(10, 0.0);
  CHECK_THROWS_AS(fit_tensor_scm(sp(few), sp(few), sp(few), sp(few)), Error);
}
