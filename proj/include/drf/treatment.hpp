#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drf/data.hpp"

namespace drf {

/// Covariate transformations applied before the treatment regression:
/// intercept, every covariate, then a square term for each listed column.
struct DesignSpec {
  std::vector<std::string> squared;
};

/// T | X ~ N(X'beta, sigma2).
struct GaussianTreatmentModel {
  Eigen::VectorXd beta;  // intercept first
  double sigma2 = 0.0;
  DesignSpec design;
  std::vector<std::string> covariate_names;

  double sigma() const;
  /// Design matrix for `data`; covariates are matched by name.
  Eigen::MatrixXd design_matrix(const Dataset& data) const;
  /// theta_i = X_i' beta.
  Eigen::VectorXd linear_predictor(const Dataset& data) const;
};

/// Weighted least squares by pivoted QR; sigma2 = RSS_w / (n - p - 1) with
/// weights normalised to sum to n. Throws on rank deficiency, n <= p + 1 and
/// exact fits (sigma2 == 0).
GaussianTreatmentModel fit_treatment_model(const Dataset& data, const DesignSpec& design = {});

/// Per-unit p-function summary theta and GPS R = density of T_i at theta_i.
struct ScoreSet {
  Eigen::VectorXd theta;
  Eigen::VectorXd gps;
};

ScoreSet score(const GaussianTreatmentModel& model, const Dataset& data);

/// r(t, X_i) for every unit. Values can underflow to 0 far in the tails;
/// use log_gps_at when ratios of tiny densities matter.
Eigen::VectorXd gps_at(const GaussianTreatmentModel& model, double t, const Dataset& data);
Eigen::VectorXd gps_at(const GaussianTreatmentModel& model, double t, const Eigen::VectorXd& theta);
Eigen::VectorXd log_gps_at(const GaussianTreatmentModel& model, double t,
                           const Eigen::VectorXd& theta);

struct TheoreticalQuantiles {
  std::vector<double> cutpoints;         // one per probability
  std::vector<double> subclass_medians;  // cutpoints.size() + 1 intervals
};

/// max(1e5, 50 n)
std::size_t default_mc_size(std::size_t n);

/// Monte Carlo quantiles of T under the fitted model: covariate rows are drawn
/// with replacement in proportion to the sampling weights and T ~
/// N(theta(X), sigma2). Subclass s is (c_{s-1}, c_s] with open ends.
TheoreticalQuantiles theoretical_quantiles(const GaussianTreatmentModel& model, const Dataset& data,
                                           std::span<const double> probs, std::size_t mc_size,
                                           std::uint64_t seed);

/// k / S for k = 1..S-1.
std::vector<double> equal_probability_cuts(int subclasses);

}  // namespace drf
