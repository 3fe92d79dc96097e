#include "drf/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drf/error.hpp"
#include "drf/stats.hpp"

namespace drf {

// ---------------------------------------------------------------------------
// Basis

CubicRegressionBasis::CubicRegressionBasis(std::vector<double> knots) : knots_(std::move(knots)) {
  const int k = dim();
  if (k < 3) throw Error(ErrorCode::invalid_input, "cubic regression spline needs at least 3 knots");
  for (int j = 1; j < k; ++j)
    if (!(knots_[j] > knots_[j - 1]))
      throw Error(ErrorCode::invalid_input, "spline knots must be strictly increasing");

  std::vector<double> h(k - 1);
  for (int j = 0; j < k - 1; ++j) h[j] = knots_[j + 1] - knots_[j];

  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k - 2, k);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k - 2, k - 2);
  for (int i = 0; i < k - 2; ++i) {
    d(i, i) = 1.0 / h[i];
    d(i, i + 1) = -1.0 / h[i] - 1.0 / h[i + 1];
    d(i, i + 2) = 1.0 / h[i + 1];
    b(i, i) = (h[i] + h[i + 1]) / 3.0;
    if (i + 1 < k - 2) {
      b(i, i + 1) = h[i + 1] / 6.0;
      b(i + 1, i) = h[i + 1] / 6.0;
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> chol(b);
  const Eigen::MatrixXd inner = chol.solve(d);
  second_deriv_ = Eigen::MatrixXd::Zero(k, k);
  second_deriv_.middleRows(1, k - 2) = inner;
  penalty_ = d.transpose() * inner;
  penalty_ = 0.5 * (penalty_ + penalty_.transpose());

  left_slope_ = Eigen::RowVectorXd::Zero(k);
  left_slope_[0] -= 1.0 / h[0];
  left_slope_[1] += 1.0 / h[0];
  left_slope_ += -h[0] / 3.0 * second_deriv_.row(0) - h[0] / 6.0 * second_deriv_.row(1);

  const double hl = h[k - 2];
  right_slope_ = Eigen::RowVectorXd::Zero(k);
  right_slope_[k - 2] -= 1.0 / hl;
  right_slope_[k - 1] += 1.0 / hl;
  right_slope_ += hl / 6.0 * second_deriv_.row(k - 2) + hl / 3.0 * second_deriv_.row(k - 1);
}

CubicRegressionBasis CubicRegressionBasis::from_data(std::span<const double> x, int k) {
  std::vector<double> u(x.begin(), x.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  if (static_cast<int>(u.size()) < k)
    throw Error(ErrorCode::invalid_input, "fewer distinct covariate values (" +
                                              std::to_string(u.size()) + ") than basis dimension " +
                                              std::to_string(k));
  std::vector<double> knots(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    knots[static_cast<std::size_t>(j)] = stats::quantile_sorted(u, static_cast<double>(j) / (k - 1));
  return CubicRegressionBasis(std::move(knots));
}

void CubicRegressionBasis::evaluate(double x, std::span<double> row) const {
  const int k = dim();
  Eigen::Map<Eigen::RowVectorXd> out(row.data(), k);
  if (x < knots_.front()) {
    out = (x - knots_.front()) * left_slope_;
    out[0] += 1.0;
    return;
  }
  if (x > knots_.back()) {
    out = (x - knots_.back()) * right_slope_;
    out[k - 1] += 1.0;
    return;
  }
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  int j = static_cast<int>(it - knots_.begin()) - 1;
  j = std::clamp(j, 0, k - 2);
  const double h = knots_[j + 1] - knots_[j];
  const double am = (knots_[j + 1] - x) / h;
  const double ap = (x - knots_[j]) / h;
  const double dm = knots_[j + 1] - x;
  const double dp = x - knots_[j];
  const double cm = (dm * dm * dm / h - h * dm) / 6.0;
  const double cp = (dp * dp * dp / h - h * dp) / 6.0;
  out = cm * second_deriv_.row(j) + cp * second_deriv_.row(j + 1);
  out[j] += am;
  out[j + 1] += ap;
}

Eigen::RowVectorXd CubicRegressionBasis::evaluate(double x) const {
  Eigen::RowVectorXd row(dim());
  evaluate(x, std::span<double>(row.data(), static_cast<std::size_t>(dim())));
  return row;
}

Eigen::MatrixXd CubicRegressionBasis::design(std::span<const double> x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), dim());
  for (std::size_t i = 0; i < x.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = evaluate(x[i]);
  return out;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid(41);
  for (int i = 0; i < 41; ++i) grid[static_cast<std::size_t>(i)] = std::pow(10.0, -6.0 + 0.3 * i);
  return grid;
}

// ---------------------------------------------------------------------------
// Penalised least squares

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

struct PlsSolution {
  Eigen::VectorXd coef;
  double rss = 0.0;
  double edf = 0.0;
  double gcv = 0.0;
};

/// Minimises ||sqrt(W)(y - X b)||^2 + sum_j lambda_j b' S_j b. The weighted
/// design is reduced once to R (p x p) and f = Q' sqrt(W) y; every lambda then
/// costs one QR of the small augmented matrix [R; sqrt(lambda_j) E_j] with
/// E_j' E_j = S_j.
class PenalizedLeastSquares {
 public:
  PenalizedLeastSquares(const Eigen::MatrixXd& x, std::span<const double> y,
                        std::span<const double> weights, std::vector<Eigen::MatrixXd> penalties)
      : n_(x.rows()), p_(x.cols()), penalties_(std::move(penalties)) {
    if (n_ <= p_)
      throw Error(ErrorCode::invalid_input, "penalised fit needs more observations than coefficients");
    Eigen::VectorXd w(n_);
    double wsum = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) wsum += weights[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i < n_; ++i)
      w[i] = std::sqrt(weights[static_cast<std::size_t>(i)] * static_cast<double>(n_) / wsum);
    Eigen::VectorXd ys(n_);
    for (Eigen::Index i = 0; i < n_; ++i) ys[i] = w[i] * y[static_cast<std::size_t>(i)];

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w.asDiagonal() * x);
    r_ = qr.matrixQR().topRows(p_).triangularView<Eigen::Upper>();
    const Eigen::VectorXd qty = qr.householderQ().transpose() * ys;
    f_ = qty.head(p_);
    rss_perp_ = qty.tail(n_ - p_).squaredNorm();

    // Scale each penalty to the size of X'WX so one lambda grid suits all designs.
    const double gram_norm = (r_.transpose() * r_).norm();
    for (auto& s : penalties_) {
      const double sn = s.norm();
      if (sn > 0.0) s *= gram_norm / sn;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
      const double tol = eig.eigenvalues().cwiseAbs().maxCoeff() * 1e-12;
      std::vector<Eigen::Index> keep;
      for (Eigen::Index j = 0; j < p_; ++j)
        if (eig.eigenvalues()[j] > tol) keep.push_back(j);
      Eigen::MatrixXd root(static_cast<Eigen::Index>(keep.size()), p_);
      for (std::size_t m = 0; m < keep.size(); ++m)
        root.row(static_cast<Eigen::Index>(m)) =
            std::sqrt(eig.eigenvalues()[keep[m]]) * eig.eigenvectors().col(keep[m]).transpose();
      roots_.push_back(std::move(root));
    }
  }

  const std::vector<Eigen::MatrixXd>& scaled_penalties() const { return penalties_; }

  PlsSolution solve(std::span<const double> lambdas) const {
    Eigen::Index rows = p_;
    for (std::size_t j = 0; j < roots_.size(); ++j)
      if (lambdas[j] > 0.0) rows += roots_[j].rows();
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(rows, p_);
    z.topRows(p_) = r_;
    Eigen::Index at = p_;
    for (std::size_t j = 0; j < roots_.size(); ++j) {
      if (!(lambdas[j] > 0.0)) continue;
      z.middleRows(at, roots_[j].rows()) = std::sqrt(lambdas[j]) * roots_[j];
      at += roots_[j].rows();
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows);
    rhs.head(p_) = f_;

    PlsSolution sol;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    const Eigen::VectorXd diag = qr.matrixQR().diagonal().head(p_).cwiseAbs();
    if (diag.minCoeff() > 1e-12 * diag.maxCoeff()) {
      const auto rz = qr.matrixQR().topRows(p_).triangularView<Eigen::Upper>();
      const Eigen::VectorXd qtb = (qr.householderQ().transpose() * rhs).head(p_);
      sol.coef = rz.solve(qtb);
      // edf = tr(R H^-1 R') = ||R Rz^-1||_F^2 with H = Rz' Rz.
      const Eigen::MatrixXd m = rz.transpose().solve(r_.transpose());
      sol.edf = m.squaredNorm();
    } else {
      solve_pseudo_inverse(lambdas, sol);
    }
    sol.rss = (f_ - r_ * sol.coef).squaredNorm() + rss_perp_;
    const double dof = static_cast<double>(n_) - sol.edf;
    sol.gcv = dof > 0.0 ? static_cast<double>(n_) * sol.rss / (dof * dof)
                        : std::numeric_limits<double>::infinity();
    return sol;
  }

 private:
  // Minimum-norm solution when the penalised system is singular (lambda = 0
  // with a rank-deficient design).
  void solve_pseudo_inverse(std::span<const double> lambdas, PlsSolution& sol) const {
    Eigen::MatrixXd h = r_.transpose() * r_;
    for (std::size_t j = 0; j < penalties_.size(); ++j) h += lambdas[j] * penalties_[j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    const double tol = eig.eigenvalues().cwiseAbs().maxCoeff() * 1e-12;
    const Eigen::VectorXd g = r_.transpose() * f_;
    sol.coef = Eigen::VectorXd::Zero(p_);
    sol.edf = 0.0;
    for (Eigen::Index j = 0; j < p_; ++j) {
      const double d = eig.eigenvalues()[j];
      if (d <= tol) continue;
      const auto v = eig.eigenvectors().col(j);
      sol.coef += (v.dot(g) / d) * v;
      sol.edf += (r_ * v).squaredNorm() / d;
    }
  }

  Eigen::Index n_;
  Eigen::Index p_;
  Eigen::MatrixXd r_;
  Eigen::VectorXd f_;
  double rss_perp_ = 0.0;
  std::vector<Eigen::MatrixXd> penalties_;
  std::vector<Eigen::MatrixXd> roots_;
};

struct Selected {
  PlsSolution solution;
  std::vector<double> lambdas;
  std::vector<GcvCandidate> profile;
};

/// Exhaustive search over the product grid, one lambda per penalty. Ties go
/// to the lexicographically smallest lambda vector.
Selected select_lambdas(const PenalizedLeastSquares& pls, std::size_t penalties,
                        const SmoothOptions& options) {
  Selected out;
  if (options.fixed_lambdas) {
    if (options.fixed_lambdas->size() != penalties)
      throw Error(ErrorCode::invalid_input, "fixed_lambdas: need one value per penalty");
    for (double l : *options.fixed_lambdas)
      if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorCode::invalid_input, "lambda must be finite and >= 0");
    out.lambdas = *options.fixed_lambdas;
    out.solution = pls.solve(out.lambdas);
    return out;
  }
  const auto& grid = options.lambda_grid;
  if (grid.empty()) throw Error(ErrorCode::invalid_input, "empty lambda grid");
  std::size_t total = 1;
  for (std::size_t j = 0; j < penalties; ++j) total *= grid.size();

  auto lambdas_at = [&](std::size_t index) {
    std::vector<double> l(penalties);
    for (std::size_t j = penalties; j-- > 0;) {
      l[j] = grid[index % grid.size()];
      index /= grid.size();
    }
    return l;
  };

  out.profile.resize(total);
  for_each_index(total, options.execution, [&](std::size_t c) {
    auto l = lambdas_at(c);
    const PlsSolution s = pls.solve(l);
    out.profile[c] = GcvCandidate{std::move(l), s.gcv, s.edf};
  });

  std::size_t best = 0;
  for (std::size_t c = 1; c < total; ++c)
    if (out.profile[c].gcv < out.profile[best].gcv) best = c;
  if (!std::isfinite(out.profile[best].gcv))
    throw Error(ErrorCode::singular, "penalised fit: no smoothing parameter gives a finite GCV score");
  out.lambdas = out.profile[best].lambdas;
  out.solution = pls.solve(out.lambdas);
  return out;
}

void check_inputs(std::span<const double> a, std::span<const double> b, std::span<const double> y,
                  std::span<const double> w) {
  if (a.size() != b.size() || a.size() != y.size() || a.size() != w.size())
    throw Error(ErrorCode::invalid_input, "smooth fit: input lengths differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]) || !std::isfinite(y[i]))
      throw Error(ErrorCode::invalid_input, "smooth fit: non-finite input");
    if (!(w[i] > 0.0) || !std::isfinite(w[i]))
      throw Error(ErrorCode::invalid_input, "smooth fit: weights must be positive");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Fits

SmoothFit fit_varying_coefficient(std::span<const double> theta, std::span<const double> t,
                                  std::span<const double> y, std::span<const double> weights,
                                  const SmoothOptions& options) {
  check_inputs(theta, t, y, weights);
  const int k = options.k;
  if (theta.size() <= static_cast<std::size_t>(2 * k))
    throw Error(ErrorCode::invalid_input, "varying-coefficient fit needs n > 2k");

  SmoothFit fit;
  fit.kind_ = SmoothKind::varying_coefficient;
  fit.bases_.push_back(CubicRegressionBasis::from_data(theta, k));
  const auto& basis = fit.bases_[0];

  const auto n = static_cast<Eigen::Index>(theta.size());
  Eigen::MatrixXd x(n, 2 * k);
  x.leftCols(k) = basis.design(theta);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i).tail(k) = x.row(i).head(k) * t[static_cast<std::size_t>(i)];

  std::vector<Eigen::MatrixXd> pens(2, Eigen::MatrixXd::Zero(2 * k, 2 * k));
  pens[0].topLeftCorner(k, k) = basis.penalty();
  pens[1].bottomRightCorner(k, k) = basis.penalty();

  const PenalizedLeastSquares pls(x, y, weights, std::move(pens));
  Selected sel = select_lambdas(pls, 2, options);
  fit.coef_ = std::move(sel.solution.coef);
  fit.edf_ = sel.solution.edf;
  fit.gcv_ = sel.solution.gcv;
  fit.lambdas_ = std::move(sel.lambdas);
  fit.profile_ = std::move(sel.profile);
  fit.penalties_ = pls.scaled_penalties();
  return fit;
}

namespace {

// Maps values at k evenly spaced points on [min x, max x] to knot values.
// Identity when that map is too ill-conditioned to invert safely.
Eigen::MatrixXd evenly_spaced_values(const CubicRegressionBasis& basis, std::span<const double> x) {
  const int k = basis.dim();
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const std::vector<double> z = stats::linspace(*lo, *hi, static_cast<std::size_t>(k));
  const Eigen::MatrixXd bz = basis.design(z);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(bz, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd d = svd.singularValues();
  if (d[k - 1] / d[0] < std::pow(std::numeric_limits<double>::epsilon(), 0.66))
    return Eigen::MatrixXd::Identity(k, k);
  return svd.matrixV() * d.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

SmoothFit fit_tensor_scm(std::span<const double> u, std::span<const double> v,
                         std::span<const double> y, std::span<const double> weights,
                         const SmoothOptions& options) {
  check_inputs(u, v, y, weights);
  const int k = options.k;
  if (u.size() <= static_cast<std::size_t>(k * k))
    throw Error(ErrorCode::invalid_input, "tensor fit needs n > k^2");

  SmoothFit fit;
  fit.kind_ = SmoothKind::tensor;
  fit.bases_.push_back(CubicRegressionBasis::from_data(u, k));
  fit.bases_.push_back(CubicRegressionBasis::from_data(v, k));

  // Each margin is refitted in terms of its values at k evenly spaced points
  // on the data range, so the identity factor of each tensor penalty sums
  // squared function values over the whole range rather than at the knots.
  const Eigen::MatrixXd pu = evenly_spaced_values(fit.bases_[0], u);
  const Eigen::MatrixXd pv = evenly_spaced_values(fit.bases_[1], v);

  const auto n = static_cast<Eigen::Index>(u.size());
  const Eigen::MatrixXd bu = fit.bases_[0].design(u) * pu;
  const Eigen::MatrixXd bv = fit.bases_[1].design(v) * pv;
  Eigen::MatrixXd x(n, k * k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int a = 0; a < k; ++a) x.row(i).segment(a * k, k) = bu(i, a) * bv.row(i);

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
  std::vector<Eigen::MatrixXd> pens{kron(pu.transpose() * fit.bases_[0].penalty() * pu, eye),
                                    kron(eye, pv.transpose() * fit.bases_[1].penalty() * pv)};

  const PenalizedLeastSquares pls(x, y, weights, std::move(pens));
  Selected sel = select_lambdas(pls, 2, options);
  // Back to knot values.
  const Eigen::MatrixXd to_knots = kron(pu, pv);
  const Eigen::MatrixXd from_knots = to_knots.inverse();
  fit.coef_ = to_knots * sel.solution.coef;
  fit.edf_ = sel.solution.edf;
  fit.gcv_ = sel.solution.gcv;
  fit.lambdas_ = std::move(sel.lambdas);
  fit.profile_ = std::move(sel.profile);
  for (const auto& s : pls.scaled_penalties())
    fit.penalties_.push_back(from_knots.transpose() * s * from_knots);
  return fit;
}

// ---------------------------------------------------------------------------
// Prediction

double SmoothFit::roughness() const {
  double total = 0.0;
  for (const auto& s : penalties_) total += coef_.dot(s * coef_);
  return total;
}

double SmoothFit::value(double a, double b) const {
  const int k = bases_[0].dim();
  const Eigen::RowVectorXd ba = bases_[0].evaluate(a);
  if (kind_ == SmoothKind::varying_coefficient)
    return ba.dot(coef_.head(k)) + b * ba.dot(coef_.tail(k));
  const Eigen::RowVectorXd bb = bases_[1].evaluate(b);
  const int kb = bases_[1].dim();
  double out = 0.0;
  for (int i = 0; i < k; ++i) out += ba[i] * bb.dot(coef_.segment(i * kb, kb));
  return out;
}

Prediction SmoothFit::predict(const Eigen::MatrixXd& points) const {
  if (points.cols() != 2)
    throw Error(ErrorCode::invalid_input, "predict: expected 2 columns per point, got " +
                                              std::to_string(points.cols()));
  Prediction out;
  out.values.resize(points.rows());
  out.extrapolated.resize(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double a = points(i, 0), b = points(i, 1);
    if (!std::isfinite(a) || !std::isfinite(b))
      throw Error(ErrorCode::invalid_input, "predict: non-finite point");
    out.values[i] = value(a, b);
    bool ext = !bases_[0].covers(a);
    if (kind_ == SmoothKind::tensor) ext = ext || !bases_[1].covers(b);
    out.extrapolated[static_cast<std::size_t>(i)] = ext;
    out.any_extrapolated = out.any_extrapolated || ext;
  }
  return out;
}

double SmoothFit::intercept(double theta) const {
  if (kind_ != SmoothKind::varying_coefficient)
    throw Error(ErrorCode::invalid_input, "intercept() is defined for varying-coefficient fits only");
  const int k = bases_[0].dim();
  return bases_[0].evaluate(theta).dot(coef_.head(k));
}

double SmoothFit::slope(double theta) const {
  if (kind_ != SmoothKind::varying_coefficient)
    throw Error(ErrorCode::invalid_input, "slope() is defined for varying-coefficient fits only");
  const int k = bases_[0].dim();
  return bases_[0].evaluate(theta).dot(coef_.tail(k));
}

}  // namespace drf
