#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "drf/data.hpp"
#include "drf/estimators.hpp"
#include "drf/treatment.hpp"

namespace drf {

// ---------------------------------------------------------------------------
// Balance

struct QuantilePair {
  double normal = 0.0;    // standard normal quantile
  double observed = 0.0;  // sorted statistic
};

struct IvdBalanceRow {
  std::string covariate;
  bool binary = false;      // logistic z-statistic instead of OLS t
  double t_adjusted = 0.0;  // covariate ~ T + theta
  double t_unadjusted = 0.0;
  bool flagged = false;  // statistic unavailable (NaN): constant covariate or separation
  std::string note;
};

struct IvdBalanceReport {
  std::vector<IvdBalanceRow> rows;
  /// Normal quantile plot coordinates over the unflagged statistics.
  std::vector<QuantilePair> qq_adjusted;
  std::vector<QuantilePair> qq_unadjusted;
};

/// Regresses each covariate on the treatment with and without theta and
/// reports the treatment coefficient's t (or z) statistic.
IvdBalanceReport balance_ivd(const Dataset& data, const Eigen::VectorXd& theta);

struct HiBalanceCell {
  std::string covariate;
  std::size_t interval = 0;
  double lower = 0.0;  // interval (lower, upper]
  double upper = 0.0;
  double t_tilde = 0.0;  // median T inside the interval
  double t_stat = 0.0;
  double mean_difference = 0.0;  // combined
  std::vector<double> block_differences;  // NaN for dropped blocks
  std::size_t blocks_dropped = 0;
  bool flagged = false;
  std::string note;
};

struct HiBalanceReport {
  std::vector<double> cutpoints;  // interior cutpoints
  int n_subclass = 5;
  std::string combination = "block-size weighted mean difference / block-size weighted variance";
  std::vector<HiBalanceCell> cells;
};

/// For each treatment interval, compares covariate means of units inside and
/// outside it within blocks of r(T~, X), combining blocks into one t
/// statistic. Empty `cutpoints` means quintiles of T.
HiBalanceReport balance_hi(const Dataset& data, const GaussianTreatmentModel& model,
                           std::vector<double> cutpoints = {}, int n_subclass = 5);

// ---------------------------------------------------------------------------
// Overlap

struct OverlapPoint {
  double t = 0.0;
  double t_lower = 0.0;  // neighbourhood in T
  double t_upper = 0.0;
  std::size_t neighbours = 0;
  double theta_min = 0.0;
  double theta_max = 0.0;
  double coverage = 0.0;  // in [0, 1]; < 1 flags extrapolation
};

/// Neighbourhood of t: units whose T lies between the empirical quantiles at
/// F(t) - window and F(t) + window. Coverage is the share of the central 90%
/// theta range spanned by the neighbours' theta values.
class OverlapIndex {
 public:
  OverlapIndex(const Eigen::VectorXd& t, const Eigen::VectorXd& theta, double window = 0.05);
  OverlapPoint at(double t) const;
  double theta_q05() const { return q05_; }
  double theta_q95() const { return q95_; }

 private:
  std::vector<double> t_sorted_;
  std::vector<double> theta_by_t_;
  double window_;
  double q05_ = 0.0;
  double q95_ = 0.0;
};

struct OverlapReport {
  double window = 0.05;
  double theta_q05 = 0.0;
  double theta_q95 = 0.0;
  std::vector<OverlapPoint> points;
  std::vector<std::pair<double, double>> pairs;  // (T_i, theta_i)
};

OverlapReport overlap_scatter(const Dataset& data, const Eigen::VectorXd& theta, const Grid& grid,
                              double window = 0.05);

void write_csv(std::ostream& out, const IvdBalanceReport& report);
void write_csv(std::ostream& out, const HiBalanceReport& report);
void write_csv(std::ostream& out, const OverlapReport& report);
/// (T_i, theta_i) pairs for plotting.
void write_pairs_csv(std::ostream& out, const OverlapReport& report);

}  // namespace drf
