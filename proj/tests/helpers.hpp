#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "drf/data.hpp"

namespace testing {

inline std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// One covariate named "x".
inline drf::Dataset make_data(const std::vector<double>& x, const std::vector<double>& t,
                              const std::vector<double>& y) {
  Eigen::MatrixXd xm(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) xm(i, 0) = x[i];
  return drf::Dataset(xm, {"x"}, Eigen::Map<const Eigen::VectorXd>(t.data(), t.size()),
                      Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(y.data(), y.size())));
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("drf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
