#include "drf/linalg.hpp"

#include <cmath>
#include <limits>

#include "drf/error.hpp"

namespace drf {

namespace {

Eigen::MatrixXd inverse_gram(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr, int p) {
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd inner = rinv * rinv.transpose();
  const auto& perm = qr.colsPermutation();
  return perm * inner * perm.transpose();
}

}  // namespace

LinearFit fit_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n || weights.size() != n)
    throw Error(ErrorCode::invalid_input, "fit_wls: dimension mismatch");
  if (n < p) throw Error(ErrorCode::rank_deficient, "fit_wls: fewer observations than coefficients");

  const Eigen::VectorXd w = weights * (static_cast<double>(n) / weights.sum());
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd xs = sw.asDiagonal() * X;
  const Eigen::VectorXd ys = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < p)
    throw Error(ErrorCode::rank_deficient, "fit_wls: design matrix is rank deficient");

  LinearFit fit;
  fit.n = static_cast<int>(n);
  fit.p = static_cast<int>(p);
  fit.coef = qr.solve(ys);
  fit.rss = (ys - xs * fit.coef).squaredNorm();
  if (n > p) {
    fit.sigma2 = fit.rss / static_cast<double>(n - p);
    fit.se = (inverse_gram(qr, static_cast<int>(p)).diagonal() * fit.sigma2).array().sqrt();
  } else {
    fit.sigma2 = std::numeric_limits<double>::quiet_NaN();
    fit.se = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  }
  return fit;
}

LinearFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return fit_wls(X, y, Eigen::VectorXd::Ones(X.rows()));
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter,
                         double tol) {
  const auto n = X.rows();
  const auto p = X.cols();
  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  fit.se = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());

  Eigen::VectorXd prob(n), work(n), z(n);
  double prev_dev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const Eigen::VectorXd eta = X * fit.coef;
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      work[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-300);
      z[i] = eta[i] + (y[i] - prob[i]) / work[i];
      const double pi = std::clamp(prob[i], 1e-300, 1.0 - 1e-16);
      dev -= 2.0 * (y[i] * std::log(pi) + (1.0 - y[i]) * std::log1p(-pi));
    }
    if (std::abs(prev_dev - dev) < tol * (std::abs(dev) + 0.1)) {
      fit.converged = true;
      break;
    }
    prev_dev = dev;
    const Eigen::VectorXd sw = work.array().sqrt();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw Error(ErrorCode::rank_deficient, "fit_logistic: rank-deficient design");
    fit.coef = qr.solve(sw.cwiseProduct(z));
  }

  const Eigen::VectorXd eta = X * fit.coef;
  for (Eigen::Index i = 0; i < n; ++i) {
    prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
    work[i] = prob[i] * (1.0 - prob[i]);
  }
  // A perfect fit or runaway linear predictor means the likelihood has no
  // finite maximiser.
  fit.separated = !fit.converged || (y - prob).cwiseAbs().maxCoeff() < 1e-6 ||
                  eta.cwiseAbs().maxCoeff() > 30.0;
  if (!fit.separated) {
    const Eigen::MatrixXd info = X.transpose() * work.asDiagonal() * X;
    fit.se = info.inverse().diagonal().array().sqrt();
  }
  return fit;
}

}  // namespace drf
