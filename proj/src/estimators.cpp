#include "drf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "drf/diagnostics.hpp"
#include "drf/error.hpp"
#include "drf/linalg.hpp"
#include "drf/stats.hpp"

namespace drf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double wmean(const Eigen::VectorXd& v, const Eigen::VectorXd& w) { return v.dot(w) / w.sum(); }

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

bool outside(double t, const Eigen::VectorXd& x) { return t < x.minCoeff() || t > x.maxCoeff(); }

DrfEstimate evaluate_curve(std::string name, const Grid& grid,
                           std::shared_ptr<const DoseResponseCurve> curve) {
  DrfEstimate est;
  est.estimator = std::move(name);
  est.grid = grid;
  const std::size_t d = grid.size();
  est.values.resize(d);
  est.singular.resize(d);
  est.extrapolated.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const PointValue p = curve->at(grid.points[j]);
    est.values[j] = p.singular ? kNaN : p.value;
    est.singular[j] = p.singular;
    est.extrapolated[j] = p.extrapolated;
  }
  if (!est.any_singular()) est.derivative = drf_derivative(grid.points, est.values);
  est.curve = std::move(curve);
  return est;
}

Eigen::VectorXd subset(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

// ---------------------------------------------------------------------------

class HiCurve final : public DoseResponseCurve {
 public:
  HiCurve(Eigen::VectorXd coef, bool linear, GaussianTreatmentModel model, Eigen::VectorXd theta,
          Eigen::VectorXd weights, Eigen::VectorXd t)
      : coef_(std::move(coef)), linear_(linear), model_(std::move(model)), theta_(std::move(theta)),
        w_(std::move(weights)), t_(std::move(t)) {}

  PointValue at(double t) const override {
    const Eigen::ArrayXd r = gps_at(model_, t, theta_).array();
    const Eigen::VectorXd& c = coef_;
    Eigen::ArrayXd v;
    if (linear_)
      v = c[0] + c[1] * t + c[2] * r + c[3] * r.square() + c[4] * t * r;
    else
      v = c[0] + c[1] * t + c[2] * t * t + c[3] * r + c[4] * r.square() + c[5] * t * r;
    return {wmean(v.matrix(), w_), false, outside(t, t_)};
  }

 private:
  Eigen::VectorXd coef_;
  bool linear_;
  GaussianTreatmentModel model_;
  Eigen::VectorXd theta_, w_, t_;
};

class ScmGpsCurve final : public DoseResponseCurve {
 public:
  ScmGpsCurve(SmoothFit fit, GaussianTreatmentModel model, Eigen::VectorXd theta, Eigen::VectorXd w)
      : fit_(std::move(fit)), model_(std::move(model)), theta_(std::move(theta)), w_(std::move(w)) {}

  PointValue at(double t) const override {
    const Eigen::VectorXd r = gps_at(model_, t, theta_);
    Eigen::VectorXd v(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) v[i] = fit_.value(t, r[i]);
    return {wmean(v, w_), false, !fit_.bases()[0].covers(t)};
  }

 private:
  SmoothFit fit_;
  GaussianTreatmentModel model_;
  Eigen::VectorXd theta_, w_;
};

class IwCurve final : public DoseResponseCurve {
 public:
  IwCurve(const Dataset& data, GaussianTreatmentModel model, Eigen::VectorXd theta, double h,
          IwOptions options)
      : t_(data.treatment()), y_(data.response()), log_w_(data.weights().array().log()),
        model_(std::move(model)), theta_(std::move(theta)), h_(h), options_(options) {}

  PointValue at(double t) const override {
    const Eigen::VectorXd log_r = log_gps_at(model_, t, theta_);
    const Eigen::Index n = t_.size();
    Eigen::VectorXd lk(n);
    for (Eigen::Index i = 0; i < n; ++i) lk[i] = log_w_[i] + stats::normal_log_pdf(t_[i], t, h_) - log_r[i];
    const double top = lk.maxCoeff();
    double s0 = 0, s1 = 0, s2 = 0, m0 = 0, m1 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double k = std::exp(lk[i] - top);
      const double d = t_[i] - t;
      s0 += k;
      s1 += k * d;
      s2 += k * d * d;
      m0 += k * y_[i];
      m1 += k * d * y_[i];
    }
    const bool ext = outside(t, t_);
    if (options_.local_constant) {
      if (!(s0 > 0.0) || !std::isfinite(s0)) return {kNaN, true, ext};
      return {m0 / s0, false, ext};
    }
    const double det = s0 * s2 - s1 * s1;
    if (!std::isfinite(det) || std::abs(det) < options_.singular_tol * s0 * s2) return {kNaN, true, ext};
    return {(s2 * m0 - s1 * m1) / det, false, ext};
  }

 private:
  Eigen::VectorXd t_, y_, log_w_;
  GaussianTreatmentModel model_;
  Eigen::VectorXd theta_;
  double h_;
  IwOptions options_;
};

class IvdCurve final : public DoseResponseCurve {
 public:
  IvdCurve(std::vector<Eigen::Vector3d> coefs, std::vector<double> sizes, Eigen::VectorXd t)
      : coefs_(std::move(coefs)), sizes_(std::move(sizes)), t_(std::move(t)) {}

  PointValue at(double t) const override {
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < coefs_.size(); ++s) {
      const auto& c = coefs_[s];
      num += sizes_[s] * (c[0] + c[1] * t + c[2] * t * t);
      den += sizes_[s];
    }
    return {num / den, false, outside(t, t_)};
  }

 private:
  std::vector<Eigen::Vector3d> coefs_;
  std::vector<double> sizes_;
  Eigen::VectorXd t_;
};

class ScmPfCurve final : public DoseResponseCurve {
 public:
  ScmPfCurve(SmoothFit fit, Eigen::VectorXd theta, Eigen::VectorXd w, OverlapIndex overlap)
      : fit_(std::move(fit)), theta_(std::move(theta)), w_(std::move(w)), overlap_(std::move(overlap)) {}

  PointValue at(double t) const override {
    Eigen::VectorXd v(theta_.size());
    for (Eigen::Index i = 0; i < theta_.size(); ++i) v[i] = fit_.value(theta_[i], t);
    return {wmean(v, w_), false, coverage(t) < 1.0};
  }

  double coverage(double t) const { return overlap_.at(t).coverage; }

 private:
  SmoothFit fit_;
  Eigen::VectorXd theta_, w_;
  OverlapIndex overlap_;
};

class CategoricalCurve final : public DoseResponseCurve {
 public:
  CategoricalCurve(std::vector<double> levels, std::vector<double> values)
      : levels_(std::move(levels)), values_(std::move(values)) {}

  PointValue at(double t) const override {
    for (std::size_t l = 0; l < levels_.size(); ++l)
      if (t == levels_[l]) return {values_[l], false, false};
    throw Error(ErrorCode::invalid_input, "categorical estimate: " + std::to_string(t) +
                                              " is not a treatment level");
  }

 private:
  std::vector<double> levels_;
  std::vector<double> values_;
};

struct WithinFit {
  Eigen::VectorXd coef;                // linear / quadratic in R
  std::shared_ptr<const SmoothFit> vc;  // scm
};

class CovAdjCurve final : public DoseResponseCurve {
 public:
  CovAdjCurve(std::vector<double> cutpoints, std::vector<WithinFit> fits, WithinModel within,
              GaussianTreatmentModel model, Eigen::VectorXd theta, Eigen::VectorXd w,
              std::vector<std::pair<double, double>> ranges)
      : cutpoints_(std::move(cutpoints)), fits_(std::move(fits)), within_(within),
        model_(std::move(model)), theta_(std::move(theta)), w_(std::move(w)), ranges_(std::move(ranges)) {}

  PointValue at(double t) const override {
    const auto s = static_cast<std::size_t>(
        std::lower_bound(cutpoints_.begin(), cutpoints_.end(), t) - cutpoints_.begin());
    const Eigen::VectorXd r = gps_at(model_, t, theta_);
    Eigen::VectorXd v(r.size());
    const WithinFit& f = fits_[s];
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      switch (within_) {
        case WithinModel::linear: v[i] = f.coef[0] + f.coef[1] * r[i]; break;
        case WithinModel::quadratic: v[i] = f.coef[0] + f.coef[1] * r[i] + f.coef[2] * r[i] * r[i]; break;
        case WithinModel::scm: v[i] = f.vc->value(theta_[i], r[i]); break;
      }
    }
    return {wmean(v, w_), false, t < ranges_[s].first || t > ranges_[s].second};
  }

 private:
  std::vector<double> cutpoints_;
  std::vector<WithinFit> fits_;
  WithinModel within_;
  GaussianTreatmentModel model_;
  Eigen::VectorXd theta_, w_;
  std::vector<std::pair<double, double>> ranges_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Grid

void Grid::validate() const {
  if (points.size() < 2) throw Error(ErrorCode::invalid_input, "grid needs at least 2 points");
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (!std::isfinite(points[j])) throw Error(ErrorCode::invalid_input, "grid points must be finite");
    if (j > 0 && !(points[j] > points[j - 1]))
      throw Error(ErrorCode::invalid_input, "grid points must be strictly increasing");
  }
}

Grid Grid::range(double lo, double hi, std::size_t d) {
  Grid g{stats::linspace(lo, hi, d), GridKind::equally_spaced_range};
  g.validate();
  return g;
}

Grid Grid::quantile_based(const Eigen::VectorXd& x, std::size_t d, double lo_p, double hi_p) {
  const std::vector<double> probs = stats::linspace(lo_p, hi_p, d);
  const std::vector<double> xs = to_vector(x);
  Grid g{stats::quantiles(xs, probs), GridKind::quantile_based};
  g.validate();
  return g;
}

bool DrfEstimate::any_singular() const {
  return std::any_of(singular.begin(), singular.end(), [](bool b) { return b; });
}

// ---------------------------------------------------------------------------
// HI

DrfEstimate estimate_hi(const Dataset& data, const GaussianTreatmentModel& model, const Grid& grid,
                        const HiOptions& options) {
  grid.validate();
  if (data.n() <= 6) throw Error(ErrorCode::invalid_input, "HI estimator needs n > 6");
  const ScoreSet s = score(model, data);
  const Eigen::VectorXd& t = data.treatment();
  const Eigen::VectorXd& r = s.gps;
  const auto n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd x(n, options.linear_in_t ? 5 : 6);
  Eigen::Index c = 0;
  x.col(c++).setOnes();
  x.col(c++) = t;
  if (!options.linear_in_t) x.col(c++) = t.array().square();
  x.col(c++) = r;
  x.col(c++) = r.array().square();
  x.col(c++) = t.cwiseProduct(r);
  const LinearFit fit = fit_wls(x, data.response(), data.weights());
  auto curve = std::make_shared<HiCurve>(fit.coef, options.linear_in_t, model, s.theta, data.weights(), t);
  return evaluate_curve(options.linear_in_t ? "hi-linear" : "hi", grid, std::move(curve));
}

// ---------------------------------------------------------------------------
// SCM(GPS)

DrfEstimate estimate_scm_gps(const Dataset& data, const GaussianTreatmentModel& model,
                             const Grid& grid, const SmoothOptions& smooth) {
  grid.validate();
  const ScoreSet s = score(model, data);
  const auto& t = data.treatment();
  const auto& y = data.response();
  const auto& w = data.weights();
  SmoothFit fit = fit_tensor_scm({t.data(), data.n()}, {s.gps.data(), data.n()}, {y.data(), data.n()},
                                 {w.data(), data.n()}, smooth);
  auto curve = std::make_shared<ScmGpsCurve>(std::move(fit), model, s.theta, w);
  return evaluate_curve("scm-gps", grid, std::move(curve));
}

// ---------------------------------------------------------------------------
// IW

double rule_of_thumb_bandwidth(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights) {
  const auto n = t.size();
  const double w_total = weights.sum();
  const Eigen::VectorXd w = weights * (static_cast<double>(n) / w_total);
  const double mu = t.dot(w) / static_cast<double>(n);
  const double sd = std::sqrt((t.array() - mu).square().matrix().dot(w) / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw Error(ErrorCode::invalid_input, "bandwidth: treatment is constant");

  if (n > 5) {
    const Eigen::ArrayXd u = (t.array() - mu) / sd;
    Eigen::MatrixXd x(n, 5);
    x.col(0).setOnes();
    for (int p = 1; p <= 4; ++p) x.col(p) = u.pow(p).matrix();
    try {
      const LinearFit pilot = fit_wls(x, y, w);
      const Eigen::VectorXd& b = pilot.coef;
      // Second derivative with respect to t.
      const Eigen::ArrayXd m2 = (2.0 * b[2] + 6.0 * b[3] * u + 12.0 * b[4] * u.square()) / (sd * sd);
      const double denom = (m2.square() * w.array()).sum();
      const double range = t.maxCoeff() - t.minCoeff();
      if (denom > 0.0 && std::isfinite(denom) && pilot.sigma2 > 0.0)
        return 0.776 * std::pow(pilot.sigma2 * range / denom, 0.2);
    } catch (const Error&) {
    }
  }
  std::vector<double> ts = to_vector(t);
  std::sort(ts.begin(), ts.end());
  const double iqr = stats::quantile_sorted(ts, 0.75) - stats::quantile_sorted(ts, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 1.06 * spread * std::pow(static_cast<double>(n), -0.2);
}

DrfEstimate estimate_iw(const Dataset& data, const GaussianTreatmentModel& model, const Grid& grid,
                        const IwOptions& options) {
  grid.validate();
  const double h = options.bandwidth ? *options.bandwidth
                                     : rule_of_thumb_bandwidth(data.treatment(), data.response(),
                                                               data.weights());
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::invalid_input, "IW bandwidth must be positive");
  auto curve = std::make_shared<IwCurve>(data, model, model.linear_predictor(data), h, options);
  DrfEstimate est = evaluate_curve(options.local_constant ? "iw-nw" : "iw", grid, std::move(curve));
  if (std::all_of(est.singular.begin(), est.singular.end(), [](bool b) { return b; }))
    throw Error(ErrorCode::singular, "IW: the local regression is singular at every grid point");
  return est;
}

// ---------------------------------------------------------------------------
// IvD subclassification

DrfEstimate estimate_ivd_subclass(const Dataset& data, const GaussianTreatmentModel& model,
                                  const Grid& grid, const IvdOptions& options) {
  grid.validate();
  if (options.subclasses < 1) throw Error(ErrorCode::invalid_input, "IvD: need at least one subclass");
  if (options.within == WithinModel::scm)
    throw Error(ErrorCode::invalid_input, "IvD: within-class model must be linear or quadratic");
  const bool quad = options.within == WithinModel::quadratic;
  const Eigen::VectorXd theta = model.linear_predictor(data);
  const std::vector<int> cls = stats::rank_classes({theta.data(), data.n()}, options.subclasses);
  const auto& t = data.treatment();
  const auto& y = data.response();
  const auto& w = data.weights();

  const int order = quad ? 2 : 1;
  const int cols = 1 + order + (options.adjust_theta ? 1 : 0);
  std::vector<Eigen::Vector3d> coefs;
  std::vector<double> sizes;
  for (int s = 0; s < options.subclasses; ++s) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < cls.size(); ++i)
      if (cls[i] == s) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.empty()) throw Error(ErrorCode::empty_subclass, "IvD: subclass " + std::to_string(s + 1) + " is empty");
    if (rows.size() <= static_cast<std::size_t>(order + 1 + (options.adjust_theta ? 1 : 0)))
      throw Error(ErrorCode::empty_subclass,
                  "IvD: subclass " + std::to_string(s + 1) + " has too few units for the within-class model");
    const Eigen::VectorXd ts = subset(t, rows), ys = subset(y, rows), ws = subset(w, rows);
    Eigen::MatrixXd x(ts.size(), cols);
    x.col(0).setOnes();
    x.col(1) = ts;
    if (quad) x.col(2) = ts.array().square();
    if (options.adjust_theta) {
      const Eigen::VectorXd th = subset(theta, rows);
      x.col(cols - 1) = th.array() - wmean(th, ws);
    }
    const LinearFit fit = fit_wls(x, ys, ws);
    coefs.emplace_back(fit.coef[0], fit.coef[1], quad ? fit.coef[2] : 0.0);
    sizes.push_back(ws.sum());
  }

  double effect = 0.0, total = 0.0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    effect += sizes[s] * coefs[s][1];
    total += sizes[s];
  }
  auto curve = std::make_shared<IvdCurve>(coefs, sizes, t);
  DrfEstimate est = evaluate_curve("ivd", grid, std::move(curve));
  est.average_effect = effect / total;
  est.subclass_sizes = std::move(sizes);
  return est;
}

// ---------------------------------------------------------------------------
// SCM(p-function)

DrfEstimate estimate_scm_pfunction(const Dataset& data, const GaussianTreatmentModel& model,
                                   const Grid& grid, const ScmPfOptions& options) {
  grid.validate();
  const Eigen::VectorXd theta = model.linear_predictor(data);
  const auto& t = data.treatment();
  const auto& y = data.response();
  const auto& w = data.weights();
  SmoothFit fit = fit_tensor_scm({theta.data(), data.n()}, {t.data(), data.n()}, {y.data(), data.n()},
                                 {w.data(), data.n()}, options.smooth);
  auto curve = std::make_shared<ScmPfCurve>(std::move(fit), theta, w,
                                            OverlapIndex(t, theta, options.overlap_window));
  std::vector<double> coverage;
  for (double g : grid.points) coverage.push_back(curve->coverage(g));
  DrfEstimate est = evaluate_curve("scm-pf", grid, std::move(curve));
  est.coverage = std::move(coverage);
  return est;
}

// ---------------------------------------------------------------------------
// Covariance adjustment, categorical treatment

Eigen::MatrixXd binary_gps(const Eigen::VectorXd& propensity) {
  Eigen::MatrixXd out(propensity.size(), 2);
  out.col(0) = (1.0 - propensity.array()).matrix();
  out.col(1) = propensity;
  return out;
}

std::vector<double> treatment_levels(const Dataset& data) {
  std::set<double> levels(data.treatment().begin(), data.treatment().end());
  return {levels.begin(), levels.end()};
}

Eigen::MatrixXd categorical_gps(const Dataset& data, const std::vector<double>& levels) {
  if (levels.size() < 2) throw Error(ErrorCode::invalid_input, "categorical treatment needs at least 2 levels");
  const auto n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd x(n, 1 + data.covariates().cols());
  x.col(0).setOnes();
  x.rightCols(data.covariates().cols()) = data.covariates();
  Eigen::MatrixXd gps(n, static_cast<Eigen::Index>(levels.size()));
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const Eigen::VectorXd ind = (data.treatment().array() == levels[l]).cast<double>();
    const LogisticFit fit = fit_logistic(x, ind);
    if (fit.separated)
      throw Error(ErrorCode::degenerate_fit,
                  "categorical GPS: separation in the model for level " + std::to_string(levels[l]));
    gps.col(static_cast<Eigen::Index>(l)) =
        (1.0 / (1.0 + (-(x * fit.coef).array()).exp())).matrix();
  }
  for (Eigen::Index i = 0; i < n; ++i) gps.row(i) /= gps.row(i).sum();
  return gps;
}

DrfEstimate estimate_cov_adj_categorical(const Dataset& data, const std::vector<double>& levels,
                                         const Eigen::MatrixXd& gps, std::optional<std::size_t> reference) {
  const auto n = static_cast<Eigen::Index>(data.n());
  if (gps.rows() != n || gps.cols() != static_cast<Eigen::Index>(levels.size()))
    throw Error(ErrorCode::invalid_input, "categorical GPS matrix must be n x levels");
  if (reference && *reference >= levels.size())
    throw Error(ErrorCode::invalid_input, "reference level index out of range");
  const auto& t = data.treatment();
  const auto& y = data.response();
  const auto& w = data.weights();
  std::vector<double> values;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (t[i] == levels[l]) rows.push_back(i);
    if (rows.size() < 3)
      throw Error(ErrorCode::empty_subclass,
                  "categorical treatment level " + std::to_string(levels[l]) + " has fewer than 3 units");
    const Eigen::VectorXd r = gps.col(static_cast<Eigen::Index>(l));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 2);
    x.col(0).setOnes();
    x.col(1) = subset(r, rows);
    const LinearFit fit = fit_wls(x, subset(y, rows), subset(w, rows));
    values.push_back(wmean((fit.coef[0] + fit.coef[1] * r.array()).matrix(), w));
  }
  Grid grid{levels, GridKind::levels};
  grid.validate();
  DrfEstimate est = evaluate_curve("cov-adj-cat", grid, std::make_shared<CategoricalCurve>(levels, values));
  if (reference) return relative_drf(est, levels[*reference]);
  return est;
}

// ---------------------------------------------------------------------------
// Covariance adjustment, continuous treatment

DrfEstimate estimate_cov_adj_continuous(const Dataset& data, const GaussianTreatmentModel& model,
                                        const CovAdjOptions& options) {
  if (options.subclasses < 1) throw Error(ErrorCode::invalid_input, "cov-adj: need at least one subclass");
  const std::vector<double> probs = equal_probability_cuts(options.subclasses);
  const TheoreticalQuantiles q = theoretical_quantiles(
      model, data, probs, options.mc_size.value_or(default_mc_size(data.n())), options.seed);
  return estimate_cov_adj_continuous(data, model, q.cutpoints, q.subclass_medians, options);
}

DrfEstimate estimate_cov_adj_continuous(const Dataset& data, const GaussianTreatmentModel& model,
                                        const std::vector<double>& cutpoints,
                                        const std::vector<double>& medians,
                                        const CovAdjOptions& options) {
  if (medians.size() != cutpoints.size() + 1)
    throw Error(ErrorCode::invalid_input, "cov-adj: need one more evaluation point than cutpoints");
  for (std::size_t j = 1; j < cutpoints.size(); ++j)
    if (!(cutpoints[j] > cutpoints[j - 1]))
      throw Error(ErrorCode::invalid_input, "cov-adj: cutpoints must increase strictly");
  Grid grid{medians, GridKind::theoretical_subclass_medians};
  if (medians.size() >= 2) grid.validate();

  const ScoreSet sc = score(model, data);
  const auto& t = data.treatment();
  const auto& y = data.response();
  const auto& w = data.weights();
  const std::size_t classes = medians.size();
  std::vector<std::vector<Eigen::Index>> members(classes);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const auto s = std::lower_bound(cutpoints.begin(), cutpoints.end(), t[i]) - cutpoints.begin();
    members[static_cast<std::size_t>(s)].push_back(i);
  }

  const std::size_t need = options.within == WithinModel::linear      ? 3
                           : options.within == WithinModel::quadratic ? 4
                                                                      : 2 * options.smooth.k + 1;
  std::vector<WithinFit> fits;
  std::vector<double> sizes;
  std::vector<std::pair<double, double>> ranges;
  for (std::size_t s = 0; s < classes; ++s) {
    const auto& rows = members[s];
    if (rows.empty()) throw Error(ErrorCode::empty_subclass, "cov-adj: subclass " + std::to_string(s + 1) + " is empty");
    if (rows.size() < need)
      throw Error(ErrorCode::empty_subclass,
                  "cov-adj: subclass " + std::to_string(s + 1) + " has too few units for the within-class model");
    const Eigen::VectorXd rs = subset(sc.gps, rows), ys = subset(y, rows), ws = subset(w, rows);
    const Eigen::VectorXd ts = subset(t, rows);
    WithinFit f;
    if (options.within == WithinModel::scm) {
      const Eigen::VectorXd th = subset(sc.theta, rows);
      const auto m = static_cast<std::size_t>(rows.size());
      f.vc = std::make_shared<const SmoothFit>(fit_varying_coefficient(
          {th.data(), m}, {rs.data(), m}, {ys.data(), m}, {ws.data(), m}, options.smooth));
    } else {
      Eigen::MatrixXd x(rs.size(), options.within == WithinModel::linear ? 2 : 3);
      x.col(0).setOnes();
      x.col(1) = rs;
      if (options.within == WithinModel::quadratic) x.col(2) = rs.array().square();
      f.coef = fit_wls(x, ys, ws).coef;
    }
    fits.push_back(std::move(f));
    sizes.push_back(ws.sum());
    ranges.emplace_back(ts.minCoeff(), ts.maxCoeff());
  }
  auto curve = std::make_shared<CovAdjCurve>(cutpoints, std::move(fits), options.within, model, sc.theta, w,
                                             std::move(ranges));
  DrfEstimate est;
  if (medians.size() >= 2) {
    est = evaluate_curve("cov-adj", grid, std::move(curve));
  } else {
    est.estimator = "cov-adj";
    est.grid = grid;
    const PointValue p = curve->at(medians[0]);
    est.values = {p.value};
    est.singular = {false};
    est.extrapolated = {p.extrapolated};
    est.curve = std::move(curve);
  }
  est.subclass_sizes = std::move(sizes);
  return est;
}

// ---------------------------------------------------------------------------
// Post-processing

std::vector<double> drf_derivative(const std::vector<double>& grid, const std::vector<double>& values) {
  const std::size_t d = grid.size();
  if (d < 2) throw Error(ErrorCode::invalid_input, "derivative needs at least 2 grid points");
  if (values.size() != d) throw Error(ErrorCode::invalid_input, "derivative: grid and values differ in length");
  std::vector<double> q(d - 1);
  for (std::size_t j = 0; j + 1 < d; ++j) q[j] = (values[j + 1] - values[j]) / (grid[j + 1] - grid[j]);
  std::vector<double> out(d);
  out[0] = q[0];
  out[d - 1] = q[d - 2];
  for (std::size_t j = 1; j + 1 < d; ++j) out[j] = 0.5 * (q[j - 1] + q[j]);
  return out;
}

DrfEstimate relative_drf(const DrfEstimate& estimate, double baseline_t) {
  if (!estimate.curve) throw Error(ErrorCode::invalid_input, "relative DRF: estimate has no fitted curve");
  const PointValue b = estimate.curve->at(baseline_t);
  if (b.singular || !std::isfinite(b.value))
    throw Error(ErrorCode::singular, "relative DRF: estimator cannot be evaluated at baseline " +
                                         std::to_string(baseline_t));
  DrfEstimate out = estimate;
  for (double& v : out.values) v -= b.value;
  out.baseline_t = baseline_t;
  out.baseline_value = b.value;
  // Bootstrap summaries of the absolute curve do not carry over.
  out.se.reset();
  out.band.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

namespace {
const std::map<EstimatorKind, std::string>& estimator_names() {
  static const std::map<EstimatorKind, std::string> names{
      {EstimatorKind::hi, "hi"},         {EstimatorKind::hi_linear, "hi-linear"},
      {EstimatorKind::scm_gps, "scm-gps"}, {EstimatorKind::iw, "iw"},
      {EstimatorKind::iw_nw, "iw-nw"},   {EstimatorKind::ivd, "ivd"},
      {EstimatorKind::scm_pf, "scm-pf"}, {EstimatorKind::cov_adj, "cov-adj"},
      {EstimatorKind::cov_adj_cat, "cov-adj-cat"}};
  return names;
}
}  // namespace

std::string to_string(EstimatorKind kind) { return estimator_names().at(kind); }

EstimatorKind parse_estimator(const std::string& name) {
  for (const auto& [kind, text] : estimator_names())
    if (text == name) return kind;
  throw Error(ErrorCode::invalid_input, "unknown estimator '" + name + "'");
}

std::string display_name(const EstimatorConfig& config) {
  if (!config.label.empty()) return config.label;
  std::string name = to_string(config.kind);
  if (config.kind == EstimatorKind::ivd || config.kind == EstimatorKind::cov_adj) {
    if (config.within == WithinModel::quadratic) name += "-quadratic";
    if (config.within == WithinModel::scm) name += "-scm";
  }
  return name;
}

DrfEstimate run_estimator(const EstimatorConfig& config, const Dataset& data,
                          const GaussianTreatmentModel& model, const Grid& grid) {
  switch (config.kind) {
    case EstimatorKind::hi:
    case EstimatorKind::hi_linear:
      return estimate_hi(data, model, grid, HiOptions{config.kind == EstimatorKind::hi_linear});
    case EstimatorKind::scm_gps:
      return estimate_scm_gps(data, model, grid, config.smooth);
    case EstimatorKind::iw:
    case EstimatorKind::iw_nw: {
      IwOptions o;
      o.bandwidth = config.bandwidth;
      o.local_constant = config.kind == EstimatorKind::iw_nw;
      return estimate_iw(data, model, grid, o);
    }
    case EstimatorKind::ivd: {
      IvdOptions o;
      o.subclasses = config.subclasses > 0 ? config.subclasses : 10;
      o.within = config.within;
      o.adjust_theta = config.adjust_theta;
      return estimate_ivd_subclass(data, model, grid, o);
    }
    case EstimatorKind::scm_pf:
      return estimate_scm_pfunction(data, model, grid, ScmPfOptions{config.smooth, config.overlap_window});
    case EstimatorKind::cov_adj: {
      grid.validate();
      CovAdjOptions o;
      o.subclasses = config.subclasses > 0 ? config.subclasses : 5;
      o.within = config.within;
      o.mc_size = config.mc_size;
      o.seed = config.seed;
      o.smooth = config.smooth;
      DrfEstimate base = estimate_cov_adj_continuous(data, model, o);
      DrfEstimate est = evaluate_curve("cov-adj", grid, base.curve);
      est.subclass_sizes = std::move(base.subclass_sizes);
      return est;
    }
    case EstimatorKind::cov_adj_cat: {
      grid.validate();
      const std::vector<double> levels = treatment_levels(data);
      const DrfEstimate base = estimate_cov_adj_categorical(data, levels, categorical_gps(data, levels));
      return evaluate_curve("cov-adj-cat", grid, base.curve);
    }
  }
  throw Error(ErrorCode::invalid_input, "unknown estimator");
}

}  // namespace drf
