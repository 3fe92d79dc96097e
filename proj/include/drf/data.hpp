#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drf {

/// Which CSV columns play which role.
struct ColumnSpec {
  std::string treatment_col;
  std::optional<std::string> response_col;
  std::optional<std::string> weight_col;
  std::vector<std::string> covariate_cols;
  /// Subset of covariate_cols expanded into one indicator per
  /// non-reference level (reference = lexicographically first level).
  std::vector<std::string> factor_cols;

  /// Throws Error(invalid_input) on overlapping names or empty covariates.
  void validate() const;
};

/// Immutable observational dataset: covariates X (n x p), treatment T,
/// optional response Y and positive sampling weights.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd covariates, std::vector<std::string> covariate_names,
          Eigen::VectorXd treatment, std::optional<Eigen::VectorXd> response = std::nullopt,
          std::optional<Eigen::VectorXd> weights = std::nullopt,
          std::string treatment_name = "t", std::string response_name = "y");

  std::size_t n() const { return static_cast<std::size_t>(treatment_.size()); }
  std::size_t p() const { return static_cast<std::size_t>(covariates_.cols()); }

  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  /// Index of a covariate column; throws Error(missing_column).
  std::size_t covariate_index(const std::string& name) const;

  const Eigen::VectorXd& treatment() const { return treatment_; }
  bool has_response() const { return response_.has_value(); }
  /// Throws Error(invalid_input) when the dataset has no response.
  const Eigen::VectorXd& response() const;
  const Eigen::VectorXd& weights() const { return weights_; }
  bool has_unit_weights() const { return unit_weights_; }

  const std::string& treatment_name() const { return treatment_name_; }
  const std::string& response_name() const { return response_name_; }

  /// Same covariates and treatment with a new response vector.
  Dataset with_response(Eigen::VectorXd response) const;
  Dataset with_treatment(Eigen::VectorXd treatment) const;
  /// Rows in the given order (duplicates allowed). Weights are reset to 1
  /// when `unit_weights` is set.
  Dataset take(std::span<const std::size_t> rows, bool unit_weights = false) const;

  /// ColumnSpec that reloads the output of write_dataset unchanged.
  ColumnSpec column_spec() const;

 private:
  Eigen::MatrixXd covariates_;
  std::vector<std::string> covariate_names_;
  Eigen::VectorXd treatment_;
  std::optional<Eigen::VectorXd> response_;
  Eigen::VectorXd weights_;
  bool unit_weights_ = true;
  std::string treatment_name_;
  std::string response_name_;
};

struct LoadResult {
  Dataset data;
  std::size_t dropped_rows = 0;
};

/// Reads a CSV, keeps complete cases over the selected columns ("" and "NA"
/// are missing) and expands factor columns. Any other non-numeric token in a
/// numeric column is an error.
LoadResult load_dataset(std::istream& in, const ColumnSpec& spec);
LoadResult load_dataset(const std::filesystem::path& path, const ColumnSpec& spec);

/// Writes covariates, treatment, response (if any) and weights with
/// round-trip precision. Column "weight" holds the weights.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

}  // namespace drf
