#pragma once

#include <Eigen/Dense>

namespace drf {

/// Weighted least-squares fit. Weights are rescaled to sum to n, so with unit
/// weights every quantity matches ordinary least squares.
struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;  // NaN when n == p
  double rss = 0.0;    // weighted residual sum of squares
  double sigma2 = 0.0; // rss / (n - p)
  int n = 0;
  int p = 0;

  double t_stat(int j) const { return coef[j] / se[j]; }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const { return X * coef; }
};

/// Solves by column-pivoted Householder QR of sqrt(W) X. Throws
/// Error(rank_deficient) if X is not of full column rank or n < p.
LinearFit fit_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights);
LinearFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  bool converged = false;
  /// Quasi or complete separation: fitted probabilities collapsed to 0/1.
  bool separated = false;
  int iterations = 0;

  double z_stat(int j) const { return coef[j] / se[j]; }
};

/// Binary logistic regression by iteratively reweighted least squares.
/// `y` must contain only 0 and 1.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         int max_iter = 50, double tol = 1e-10);

}  // namespace drf
