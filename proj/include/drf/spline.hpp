#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "drf/parallel.hpp"

namespace drf {

/// Natural cubic regression spline parameterised by its values at the knots.
/// Beyond the outer knots the spline continues linearly.
class CubicRegressionBasis {
 public:
  explicit CubicRegressionBasis(std::vector<double> knots);

  /// k knots at evenly spaced quantiles of the distinct values of x.
  static CubicRegressionBasis from_data(std::span<const double> x, int k);

  int dim() const { return static_cast<int>(knots_.size()); }
  const std::vector<double>& knots() const { return knots_; }
  bool covers(double x) const { return x >= knots_.front() && x <= knots_.back(); }

  /// Integrated squared second derivative: beta' S beta = int f''(x)^2 dx.
  const Eigen::MatrixXd& penalty() const { return penalty_; }

  /// Writes the dim() basis function values at x into `row`.
  void evaluate(double x, std::span<double> row) const;
  Eigen::RowVectorXd evaluate(double x) const;
  Eigen::MatrixXd design(std::span<const double> x) const;

 private:
  std::vector<double> knots_;
  Eigen::MatrixXd second_deriv_;  // knot values -> knot second derivatives
  Eigen::MatrixXd penalty_;
  Eigen::RowVectorXd left_slope_;
  Eigen::RowVectorXd right_slope_;
};

enum class SmoothKind { varying_coefficient, tensor };

/// 41 log-spaced values on [1e-6, 1e6].
std::vector<double> default_lambda_grid();

struct SmoothOptions {
  int k = 5;
  std::vector<double> lambda_grid = default_lambda_grid();
  /// Skips GCV and fits at these smoothing parameters (one per penalty).
  std::optional<std::vector<double>> fixed_lambdas;
  Execution execution = Execution::serial;
};

struct GcvCandidate {
  std::vector<double> lambdas;
  double gcv = 0.0;
  double edf = 0.0;
};

struct Prediction {
  Eigen::VectorXd values;
  std::vector<bool> extrapolated;  // outside the knot range in any argument
  bool any_extrapolated = false;
};

/// Penalised spline fit of E(Y | a, b), either f(a) + g(a) b (varying
/// coefficient) or a tensor-product surface beta(a, b).
class SmoothFit {
 public:
  SmoothKind kind() const { return kind_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  const std::vector<CubicRegressionBasis>& bases() const { return bases_; }
  const std::vector<double>& lambdas() const { return lambdas_; }
  double edf() const { return edf_; }
  double gcv() const { return gcv_; }
  /// Grid candidates visited by the GCV search (empty for fixed lambdas).
  const std::vector<GcvCandidate>& gcv_profile() const { return profile_; }
  /// Sum over penalties of beta' S_j beta, penalties as scaled for fitting.
  double roughness() const;
  /// Dimension of the unpenalised null space (affine x affine pieces).
  int null_space_dim() const { return 4; }

  double value(double a, double b) const;
  /// Rows of `points` are (a, b) pairs; throws unless points has 2 columns.
  Prediction predict(const Eigen::MatrixXd& points) const;

  /// Varying-coefficient pieces f(theta) and g(theta).
  double intercept(double theta) const;
  double slope(double theta) const;

 private:
  friend SmoothFit fit_varying_coefficient(std::span<const double>, std::span<const double>,
                                           std::span<const double>, std::span<const double>,
                                           const SmoothOptions&);
  friend SmoothFit fit_tensor_scm(std::span<const double>, std::span<const double>,
                                  std::span<const double>, std::span<const double>,
                                  const SmoothOptions&);

  SmoothKind kind_ = SmoothKind::tensor;
  Eigen::VectorXd coef_;
  std::vector<CubicRegressionBasis> bases_;
  std::vector<Eigen::MatrixXd> penalties_;
  std::vector<double> lambdas_;
  double edf_ = 0.0;
  double gcv_ = 0.0;
  std::vector<GcvCandidate> profile_;
};

/// E(Y | theta, T) = f(theta) + g(theta) T with f, g in k-dimensional cubic
/// regression spline bases on theta. Requires n > 2k.
SmoothFit fit_varying_coefficient(std::span<const double> theta, std::span<const double> t,
                                  std::span<const double> y, std::span<const double> weights,
                                  const SmoothOptions& options = {});

/// E(Y | u, v) = beta(u, v), tensor product of two k-dimensional bases with
/// penalty lambda_u (S_u x I) + lambda_v (I x S_v). Requires n > k^2.
SmoothFit fit_tensor_scm(std::span<const double> u, std::span<const double> v,
                         std::span<const double> y, std::span<const double> weights,
                         const SmoothOptions& options = {});

}  // namespace drf
