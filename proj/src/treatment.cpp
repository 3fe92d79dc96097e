#include "drf/treatment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "drf/error.hpp"
#include "drf/linalg.hpp"
#include "drf/random.hpp"
#include "drf/stats.hpp"

namespace drf {

double GaussianTreatmentModel::sigma() const { return std::sqrt(sigma2); }

Eigen::MatrixXd GaussianTreatmentModel::design_matrix(const Dataset& data) const {
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto p = static_cast<Eigen::Index>(covariate_names.size());
  const auto q = static_cast<Eigen::Index>(design.squared.size());
  Eigen::MatrixXd x(n, 1 + p + q);
  x.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) {
    std::size_t src;
    try {
      src = data.covariate_index(covariate_names[static_cast<std::size_t>(j)]);
    } catch (const Error&) {
      throw Error(ErrorCode::invalid_input,
                  "dimension mismatch: data lacks covariate '" +
                      covariate_names[static_cast<std::size_t>(j)] + "' used by the treatment model");
    }
    x.col(1 + j) = data.covariates().col(static_cast<Eigen::Index>(src));
  }
  for (Eigen::Index k = 0; k < q; ++k) {
    const auto& name = design.squared[static_cast<std::size_t>(k)];
    auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
    if (it == covariate_names.end())
      throw Error(ErrorCode::invalid_input, "square term for unknown covariate '" + name + "'");
    const auto src = 1 + static_cast<Eigen::Index>(it - covariate_names.begin());
    x.col(1 + p + k) = x.col(src).array().square();
  }
  return x;
}

Eigen::VectorXd GaussianTreatmentModel::linear_predictor(const Dataset& data) const {
  return design_matrix(data) * beta;
}

GaussianTreatmentModel fit_treatment_model(const Dataset& data, const DesignSpec& design) {
  GaussianTreatmentModel model;
  model.design = design;
  model.covariate_names = data.covariate_names();
  const Eigen::MatrixXd x = model.design_matrix(data);
  if (data.n() <= static_cast<std::size_t>(x.cols()))
    throw Error(ErrorCode::rank_deficient, "treatment model: need n > p + 1 observations");

  const LinearFit fit = fit_wls(x, data.treatment(), data.weights());
  model.beta = fit.coef;
  model.sigma2 = fit.sigma2;
  const double scale = std::max(1.0, data.treatment().cwiseAbs().maxCoeff());
  if (!(model.sigma2 > (1e-12 * scale) * (1e-12 * scale)))
    throw Error(ErrorCode::degenerate_fit, "treatment model: residual variance is zero (exact fit)");
  if (!model.beta.allFinite()) throw Error(ErrorCode::degenerate_fit, "treatment model: non-finite coefficients");
  return model;
}

Eigen::VectorXd log_gps_at(const GaussianTreatmentModel& model, double t,
                           const Eigen::VectorXd& theta) {
  if (!std::isfinite(t)) throw Error(ErrorCode::invalid_input, "gps_at: non-finite treatment value");
  const double sd = model.sigma();
  Eigen::VectorXd out(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) out[i] = stats::normal_log_pdf(t, theta[i], sd);
  return out;
}

Eigen::VectorXd gps_at(const GaussianTreatmentModel& model, double t, const Eigen::VectorXd& theta) {
  return log_gps_at(model, t, theta).array().exp();
}

Eigen::VectorXd gps_at(const GaussianTreatmentModel& model, double t, const Dataset& data) {
  return gps_at(model, t, model.linear_predictor(data));
}

ScoreSet score(const GaussianTreatmentModel& model, const Dataset& data) {
  ScoreSet s;
  s.theta = model.linear_predictor(data);
  const double sd = model.sigma();
  s.gps.resize(s.theta.size());
  for (Eigen::Index i = 0; i < s.theta.size(); ++i)
    s.gps[i] = stats::normal_pdf(data.treatment()[i], s.theta[i], sd);
  return s;
}

std::size_t default_mc_size(std::size_t n) { return std::max<std::size_t>(100000, 50 * n); }

std::vector<double> equal_probability_cuts(int subclasses) {
  if (subclasses < 1) throw Error(ErrorCode::invalid_input, "need at least one subclass");
  std::vector<double> p;
  for (int k = 1; k < subclasses; ++k) p.push_back(static_cast<double>(k) / subclasses);
  return p;
}

TheoreticalQuantiles theoretical_quantiles(const GaussianTreatmentModel& model, const Dataset& data,
                                           std::span<const double> probs, std::size_t mc_size,
                                           std::uint64_t seed) {
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (!(probs[k] > 0.0 && probs[k] < 1.0))
      throw Error(ErrorCode::invalid_input, "theoretical_quantiles: probabilities must lie in (0, 1)");
    if (k > 0 && !(probs[k] > probs[k - 1]))
      throw Error(ErrorCode::invalid_input, "theoretical_quantiles: probabilities must increase strictly");
  }
  if (mc_size < 10 * data.n())
    throw Error(ErrorCode::invalid_input, "theoretical_quantiles: mc_size must be at least 10 n");

  const Eigen::VectorXd theta = model.linear_predictor(data);
  const Eigen::VectorXd& w = data.weights();
  Rng rng(derive_seed(seed, 0));
  std::discrete_distribution<std::size_t> pick(w.data(), w.data() + w.size());
  std::normal_distribution<double> noise(0.0, model.sigma());

  std::vector<double> draws(mc_size);
  for (auto& d : draws) {
    const std::size_t row = pick(rng);
    d = theta[static_cast<Eigen::Index>(row)] + noise(rng);
  }
  std::sort(draws.begin(), draws.end());

  TheoreticalQuantiles out;
  for (double p : probs) out.cutpoints.push_back(stats::quantile_sorted(draws, p));
  auto begin = draws.begin();
  for (std::size_t s = 0; s <= out.cutpoints.size(); ++s) {
    auto end = s < out.cutpoints.size()
                   ? std::upper_bound(begin, draws.end(), out.cutpoints[s])
                   : draws.end();
    if (end == begin)
      throw Error(ErrorCode::empty_subclass,
                  "theoretical_quantiles: Monte Carlo subclass " + std::to_string(s + 1) + " is empty");
    out.subclass_medians.push_back(
        stats::quantile_sorted(std::span<const double>(&*begin, static_cast<std::size_t>(end - begin)), 0.5));
    begin = end;
  }
  return out;
}

}  // namespace drf
