#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drf/data.hpp"
#include "drf/spline.hpp"
#include "drf/treatment.hpp"

namespace drf {

enum class GridKind { equally_spaced_range, quantile_based, theoretical_subclass_medians, levels };

struct Grid {
  std::vector<double> points;
  GridKind kind = GridKind::equally_spaced_range;

  std::size_t size() const { return points.size(); }
  /// Throws unless there are >= 2 finite, strictly increasing points.
  void validate() const;

  /// D points on [lo, hi], both ends included.
  static Grid range(double lo, double hi, std::size_t d);
  /// Sample quantiles of x at D evenly spaced probabilities in [lo_p, hi_p].
  static Grid quantile_based(const Eigen::VectorXd& x, std::size_t d, double lo_p = 0.05,
                             double hi_p = 0.95);
};

struct PointValue {
  double value = 0.0;
  bool singular = false;
  bool extrapolated = false;
};

/// A fitted estimator that can be evaluated at any treatment value.
class DoseResponseCurve {
 public:
  virtual ~DoseResponseCurve() = default;
  virtual PointValue at(double t) const = 0;
};

struct Band {
  double level = 0.95;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct DrfEstimate {
  std::string estimator;
  Grid grid;
  std::vector<double> values;
  std::vector<bool> singular;
  std::vector<bool> extrapolated;
  std::optional<std::vector<double>> derivative;
  std::optional<double> baseline_t;
  std::optional<double> baseline_value;
  std::optional<std::vector<double>> se;
  std::optional<Band> band;
  /// IvD: size-weighted mean of the within-class treatment coefficients.
  std::optional<double> average_effect;
  /// Subclass sizes (sums of sampling weights) for subclassification estimators.
  std::vector<double> subclass_sizes;
  /// SCM(p-function): overlap coverage per grid point.
  std::vector<double> coverage;
  std::shared_ptr<const DoseResponseCurve> curve;

  bool any_singular() const;
};

// ---------------------------------------------------------------------------
// Estimators. Sampling weights enter every fit and every average over units.

struct HiOptions {
  /// Drop the T^2 term.
  bool linear_in_t = false;
};

/// Quadratic response surface in (T, R) averaged over r(t, X_i).
DrfEstimate estimate_hi(const Dataset& data, const GaussianTreatmentModel& model, const Grid& grid,
                        const HiOptions& options = {});

/// Tensor spline beta(T, R) averaged over r(t, X_i).
DrfEstimate estimate_scm_gps(const Dataset& data, const GaussianTreatmentModel& model,
                             const Grid& grid, const SmoothOptions& smooth = {});

struct IwOptions {
  std::optional<double> bandwidth;
  bool local_constant = false;  // Nadaraya-Watson instead of local linear
  double singular_tol = 1e-8;
};

/// Gaussian-kernel rule-of-thumb bandwidth for local linear regression of y
/// on t, from a quartic pilot fit. Falls back to Silverman's rule when the
/// pilot curvature vanishes.
double rule_of_thumb_bandwidth(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights);

/// Kernel regression of Y on T with weights w_i K_h(T_i - t) / r(t, X_i).
DrfEstimate estimate_iw(const Dataset& data, const GaussianTreatmentModel& model, const Grid& grid,
                        const IwOptions& options = {});

enum class WithinModel { linear, quadratic, scm };

struct IvdOptions {
  int subclasses = 10;
  WithinModel within = WithinModel::linear;  // linear or quadratic
  /// Add theta recentred within each class as a covariate.
  bool adjust_theta = false;
};

/// Subclassification on theta into equal-size classes, Y ~ T (or T + T^2)
/// within each class.
DrfEstimate estimate_ivd_subclass(const Dataset& data, const GaussianTreatmentModel& model,
                                  const Grid& grid, const IvdOptions& options = {});

struct ScmPfOptions {
  SmoothOptions smooth;
  double overlap_window = 0.05;
};

/// Tensor spline f(theta, T) averaged over theta_i.
DrfEstimate estimate_scm_pfunction(const Dataset& data, const GaussianTreatmentModel& model,
                                   const Grid& grid, const ScmPfOptions& options = {});

/// Per-level GPS for a binary treatment with propensity score e: (1 - e, e).
Eigen::MatrixXd binary_gps(const Eigen::VectorXd& propensity);

/// Per-level GPS from one logistic regression of 1{T = level} on the
/// covariates per level, rows normalised to sum to 1.
Eigen::MatrixXd categorical_gps(const Dataset& data, const std::vector<double>& levels);

/// Sorted distinct treatment values.
std::vector<double> treatment_levels(const Dataset& data);

/// gps(i, l) = r(level l, X_i). Within level l regress Y on gps(., l), then
/// average the fitted line over all units. Grid = levels; relative to
/// `reference` when given.
DrfEstimate estimate_cov_adj_categorical(const Dataset& data, const std::vector<double>& levels,
                                         const Eigen::MatrixXd& gps,
                                         std::optional<std::size_t> reference = std::nullopt);

struct CovAdjOptions {
  int subclasses = 5;
  WithinModel within = WithinModel::linear;
  std::optional<std::size_t> mc_size;
  std::uint64_t seed = 0;
  SmoothOptions smooth;  // within = scm
};

/// Subclassification on T at theoretical quantiles; within each class regress
/// Y on R (linear, quadratic, or a varying-coefficient spline in theta) and
/// average over all units at r(t_s, X_i). Grid = theoretical medians.
DrfEstimate estimate_cov_adj_continuous(const Dataset& data, const GaussianTreatmentModel& model,
                                        const CovAdjOptions& options = {});

/// Same with explicit cutpoints (length S-1) and evaluation points (length S).
DrfEstimate estimate_cov_adj_continuous(const Dataset& data, const GaussianTreatmentModel& model,
                                        const std::vector<double>& cutpoints,
                                        const std::vector<double>& medians,
                                        const CovAdjOptions& options = {});

// ---------------------------------------------------------------------------
// Post-processing

/// Average of the adjacent difference quotients; one-sided at the ends.
std::vector<double> drf_derivative(const std::vector<double>& grid, const std::vector<double>& values);

/// Subtracts the curve's value at baseline_t. Throws Error(singular) if the
/// curve cannot be evaluated there.
DrfEstimate relative_drf(const DrfEstimate& estimate, double baseline_t);

// ---------------------------------------------------------------------------
// Uniform dispatch for bootstrap, simulation and CLI.

enum class EstimatorKind { hi, hi_linear, scm_gps, iw, iw_nw, ivd, scm_pf, cov_adj, cov_adj_cat };

std::string to_string(EstimatorKind kind);
/// Parses the CLI names: hi, hi-linear, scm-gps, iw, iw-nw, ivd, scm-pf,
/// cov-adj, cov-adj-cat.
EstimatorKind parse_estimator(const std::string& name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::scm_pf;
  std::string label;   // defaults to the estimator name
  int subclasses = 0;  // 0: 10 for ivd, 5 for cov-adj
  WithinModel within = WithinModel::linear;
  bool adjust_theta = false;
  std::optional<double> bandwidth;
  SmoothOptions smooth;
  double overlap_window = 0.05;
  std::optional<std::size_t> mc_size;
  std::uint64_t seed = 0;
};

/// label if set, else the estimator name with a "-quadratic" / "-scm" suffix
/// for non-default within-class models.
std::string display_name(const EstimatorConfig& config);

/// Runs the configured estimator and evaluates it on `grid`.
DrfEstimate run_estimator(const EstimatorConfig& config, const Dataset& data,
                          const GaussianTreatmentModel& model, const Grid& grid);

}  // namespace drf
