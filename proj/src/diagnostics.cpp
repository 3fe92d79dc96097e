#include "drf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "drf/csv.hpp"
#include "drf/error.hpp"
#include "drf/linalg.hpp"
#include "drf/stats.hpp"

namespace drf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_binary(const Eigen::VectorXd& x) {
  return (x.array() == 0.0 || x.array() == 1.0).all();
}

std::vector<QuantilePair> normal_quantile_pairs(std::vector<double> stats_) {
  std::erase_if(stats_, [](double v) { return !std::isfinite(v); });
  std::sort(stats_.begin(), stats_.end());
  std::vector<QuantilePair> out;
  const double m = static_cast<double>(stats_.size());
  for (std::size_t i = 0; i < stats_.size(); ++i)
    out.push_back({stats::normal_quantile((static_cast<double>(i) + 0.5) / m), stats_[i]});
  return out;
}

// Statistic of column 1 (the treatment); NaN plus note on failure.
double treatment_stat(const Eigen::MatrixXd& x, const Eigen::VectorXd& cov, bool binary, std::string& note) {
  if (binary) {
    const LogisticFit fit = fit_logistic(x, cov);
    if (fit.separated) {
      note = "separation in logistic fit";
      return kNaN;
    }
    return fit.z_stat(1);
  }
  try {
    return fit_ols(x, cov).t_stat(1);
  } catch (const Error& e) {
    note = e.what();
    return kNaN;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

IvdBalanceReport balance_ivd(const Dataset& data, const Eigen::VectorXd& theta) {
  const auto n = static_cast<Eigen::Index>(data.n());
  if (theta.size() != n) throw Error(ErrorCode::invalid_input, "balance: theta length differs from n");
  Eigen::MatrixXd adj(n, 3), unadj(n, 2);
  adj.col(0).setOnes();
  adj.col(1) = data.treatment();
  adj.col(2) = theta;
  unadj = adj.leftCols(2);

  IvdBalanceReport report;
  std::vector<double> ta, tu;
  for (std::size_t j = 0; j < data.p(); ++j) {
    IvdBalanceRow row;
    row.covariate = data.covariate_names()[j];
    const Eigen::VectorXd cov = data.covariates().col(static_cast<Eigen::Index>(j));
    row.binary = is_binary(cov);
    if (cov.maxCoeff() == cov.minCoeff()) {
      row.flagged = true;
      row.note = "constant covariate";
      row.t_adjusted = row.t_unadjusted = kNaN;
    } else {
      std::string note_a, note_u;
      row.t_adjusted = treatment_stat(adj, cov, row.binary, note_a);
      row.t_unadjusted = treatment_stat(unadj, cov, row.binary, note_u);
      row.flagged = !std::isfinite(row.t_adjusted) || !std::isfinite(row.t_unadjusted);
      row.note = !note_a.empty() ? note_a : note_u;
      if (row.flagged && row.note.empty()) row.note = "non-finite statistic";
    }
    ta.push_back(row.t_adjusted);
    tu.push_back(row.t_unadjusted);
    report.rows.push_back(std::move(row));
  }
  report.qq_adjusted = normal_quantile_pairs(ta);
  report.qq_unadjusted = normal_quantile_pairs(tu);
  return report;
}

// ---------------------------------------------------------------------------

HiBalanceReport balance_hi(const Dataset& data, const GaussianTreatmentModel& model,
                           std::vector<double> cutpoints, int n_subclass) {
  if (n_subclass < 1) throw Error(ErrorCode::invalid_input, "balance: need at least one block");
  const auto& t = data.treatment();
  const std::vector<double> ts(t.data(), t.data() + t.size());
  if (cutpoints.empty()) {
    const std::vector<double> probs{0.2, 0.4, 0.6, 0.8};
    cutpoints = stats::quantiles(ts, probs);
  }
  for (std::size_t j = 1; j < cutpoints.size(); ++j)
    if (!(cutpoints[j] > cutpoints[j - 1]))
      throw Error(ErrorCode::invalid_input, "balance: cutpoints must increase strictly");

  HiBalanceReport report;
  report.cutpoints = cutpoints;
  report.n_subclass = n_subclass;

  std::vector<double> edges;
  edges.push_back(-std::numeric_limits<double>::infinity());
  edges.insert(edges.end(), cutpoints.begin(), cutpoints.end());
  edges.push_back(std::numeric_limits<double>::infinity());

  const Eigen::VectorXd theta = model.linear_predictor(data);
  const auto n = static_cast<std::size_t>(t.size());
  for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
    std::vector<int> in(n);
    std::vector<double> inside;
    for (std::size_t i = 0; i < n; ++i) {
      in[i] = ts[i] > edges[j] && ts[i] <= edges[j + 1];
      if (in[i]) inside.push_back(ts[i]);
    }
    HiBalanceCell base;
    base.interval = j;
    base.lower = edges[j];
    base.upper = edges[j + 1];
    if (inside.empty() || inside.size() == n) {
      for (std::size_t c = 0; c < data.p(); ++c) {
        HiBalanceCell cell = base;
        cell.covariate = data.covariate_names()[c];
        cell.t_tilde = inside.empty() ? kNaN : stats::median(inside);
        cell.t_stat = cell.mean_difference = kNaN;
        cell.flagged = true;
        cell.note = inside.empty() ? "empty interval" : "interval contains every unit";
        report.cells.push_back(std::move(cell));
      }
      continue;
    }
    base.t_tilde = stats::median(inside);
    const Eigen::VectorXd r = gps_at(model, base.t_tilde, theta);
    const std::vector<int> block = stats::rank_classes({r.data(), n}, n_subclass);

    for (std::size_t c = 0; c < data.p(); ++c) {
      HiBalanceCell cell = base;
      cell.covariate = data.covariate_names()[c];
      const Eigen::VectorXd x = data.covariates().col(static_cast<Eigen::Index>(c));
      double num = 0.0, var = 0.0, used = 0.0;
      std::vector<double> diffs(static_cast<std::size_t>(n_subclass), kNaN);
      std::vector<std::pair<double, double>> kept;  // (d_b, v_b) with N_b
      std::vector<double> block_n;
      for (int b = 0; b < n_subclass; ++b) {
        double s1 = 0, s0 = 0, q1 = 0, q0 = 0;
        double n1 = 0, n0 = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (block[i] != b) continue;
          if (in[i]) {
            s1 += x[static_cast<Eigen::Index>(i)];
            ++n1;
          } else {
            s0 += x[static_cast<Eigen::Index>(i)];
            ++n0;
          }
        }
        if (n1 < 2 || n0 < 2) {
          ++cell.blocks_dropped;
          continue;
        }
        const double m1 = s1 / n1, m0 = s0 / n0;
        for (std::size_t i = 0; i < n; ++i) {
          if (block[i] != b) continue;
          const double v = x[static_cast<Eigen::Index>(i)];
          if (in[i])
            q1 += (v - m1) * (v - m1);
          else
            q0 += (v - m0) * (v - m0);
        }
        const double d = m1 - m0;
        const double v = q1 / (n1 - 1) / n1 + q0 / (n0 - 1) / n0;
        diffs[static_cast<std::size_t>(b)] = d;
        kept.emplace_back(d, v);
        block_n.push_back(n1 + n0);
        used += n1 + n0;
      }
      for (std::size_t k = 0; k < kept.size(); ++k) {
        const double share = block_n[k] / used;
        num += share * kept[k].first;
        var += share * share * kept[k].second;
      }
      cell.block_differences = std::move(diffs);
      if (kept.empty()) {
        cell.t_stat = cell.mean_difference = kNaN;
        cell.flagged = true;
        cell.note = "every block has fewer than 2 units on one side";
      } else if (!(var > 0.0)) {
        cell.mean_difference = num;
        cell.t_stat = kNaN;
        cell.flagged = true;
        cell.note = "zero variance";
      } else {
        cell.mean_difference = num;
        cell.t_stat = num / std::sqrt(var);
        if (cell.blocks_dropped > 0)
          cell.note = std::to_string(cell.blocks_dropped) + " block(s) dropped: fewer than 2 units on one side";
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

OverlapIndex::OverlapIndex(const Eigen::VectorXd& t, const Eigen::VectorXd& theta, double window)
    : window_(window) {
  if (t.size() != theta.size() || t.size() < 2)
    throw Error(ErrorCode::invalid_input, "overlap: treatment and theta must have equal length >= 2");
  if (!(window > 0.0 && window < 1.0)) throw Error(ErrorCode::invalid_input, "overlap: window must lie in (0, 1)");
  std::vector<std::size_t> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return t[static_cast<Eigen::Index>(a)] < t[static_cast<Eigen::Index>(b)];
  });
  for (std::size_t i : order) {
    t_sorted_.push_back(t[static_cast<Eigen::Index>(i)]);
    theta_by_t_.push_back(theta[static_cast<Eigen::Index>(i)]);
  }
  std::vector<double> th(theta.data(), theta.data() + theta.size());
  std::sort(th.begin(), th.end());
  q05_ = stats::quantile_sorted(th, 0.05);
  q95_ = stats::quantile_sorted(th, 0.95);
}

OverlapPoint OverlapIndex::at(double t) const {
  OverlapPoint p;
  p.t = t;
  const double n = static_cast<double>(t_sorted_.size());
  const double f =
      static_cast<double>(std::upper_bound(t_sorted_.begin(), t_sorted_.end(), t) - t_sorted_.begin()) / n;
  p.t_lower = stats::quantile_sorted(t_sorted_, std::max(0.0, f - window_));
  p.t_upper = stats::quantile_sorted(t_sorted_, std::min(1.0, f + window_));
  const auto first = std::lower_bound(t_sorted_.begin(), t_sorted_.end(), p.t_lower) - t_sorted_.begin();
  const auto last = std::upper_bound(t_sorted_.begin(), t_sorted_.end(), p.t_upper) - t_sorted_.begin();
  if (last <= first) throw Error(ErrorCode::invalid_input, "overlap: empty neighbourhood at t = " + std::to_string(t));
  p.neighbours = static_cast<std::size_t>(last - first);
  const auto [lo, hi] = std::minmax_element(theta_by_t_.begin() + first, theta_by_t_.begin() + last);
  p.theta_min = *lo;
  p.theta_max = *hi;
  const double span = q95_ - q05_;
  if (!(span > 0.0)) {
    p.coverage = 1.0;
  } else {
    const double covered = std::min(p.theta_max, q95_) - std::max(p.theta_min, q05_);
    p.coverage = std::clamp(covered / span, 0.0, 1.0);
  }
  return p;
}

OverlapReport overlap_scatter(const Dataset& data, const Eigen::VectorXd& theta, const Grid& grid,
                              double window) {
  grid.validate();
  const OverlapIndex index(data.treatment(), theta, window);
  OverlapReport report;
  report.window = window;
  report.theta_q05 = index.theta_q05();
  report.theta_q95 = index.theta_q95();
  for (double g : grid.points) report.points.push_back(index.at(g));
  for (Eigen::Index i = 0; i < theta.size(); ++i) report.pairs.emplace_back(data.treatment()[i], theta[i]);
  return report;
}

// ---------------------------------------------------------------------------

void write_csv(std::ostream& out, const IvdBalanceReport& report) {
  csv::write_row(out, {"method", "covariate", "binary", "t_adjusted", "t_unadjusted", "flagged", "note"});
  for (const auto& r : report.rows)
    csv::write_row(out, {"ivd", r.covariate, r.binary ? "1" : "0", csv::format_double(r.t_adjusted),
                         csv::format_double(r.t_unadjusted), r.flagged ? "1" : "0", r.note});
}

void write_csv(std::ostream& out, const HiBalanceReport& report) {
  csv::write_row(out, {"method", "covariate", "interval", "lower", "upper", "t_tilde", "mean_difference",
                       "t_stat", "blocks", "blocks_dropped", "flagged", "note"});
  for (const auto& c : report.cells)
    csv::write_row(out, {"hi", c.covariate, std::to_string(c.interval), csv::format_double(c.lower),
                         csv::format_double(c.upper), csv::format_double(c.t_tilde),
                         csv::format_double(c.mean_difference), csv::format_double(c.t_stat),
                         std::to_string(report.n_subclass), std::to_string(c.blocks_dropped),
                         c.flagged ? "1" : "0", c.note});
}

void write_csv(std::ostream& out, const OverlapReport& report) {
  csv::write_row(out, {"t", "t_lower", "t_upper", "neighbours", "theta_min", "theta_max", "theta_q05",
                       "theta_q95", "coverage", "flag"});
  for (const auto& p : report.points)
    csv::write_row(out, {csv::format_double(p.t), csv::format_double(p.t_lower), csv::format_double(p.t_upper),
                         std::to_string(p.neighbours), csv::format_double(p.theta_min),
                         csv::format_double(p.theta_max), csv::format_double(report.theta_q05),
                         csv::format_double(report.theta_q95), csv::format_double(p.coverage),
                         p.coverage < 1.0 ? "1" : "0"});
}

void write_pairs_csv(std::ostream& out, const OverlapReport& report) {
  csv::write_row(out, {"t", "theta"});
  for (const auto& [t, th] : report.pairs) csv::write_row(out, {csv::format_double(t), csv::format_double(th)});
}

}  // namespace drf
