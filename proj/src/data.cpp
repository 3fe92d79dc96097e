#include "drf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "drf/csv.hpp"
#include "drf/error.hpp"

namespace drf {

namespace {

constexpr const char* kWeightColumn = "weight";

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorCode::invalid_input, std::string(what) + " contains non-finite values");
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

double parse_number(const std::string& s, const std::string& column, std::size_t row) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw Error(ErrorCode::parse_error, "non-numeric value '" + s + "' in column '" + column +
                                            "' at data row " + std::to_string(row + 1));
  return value;
}

}  // namespace

void ColumnSpec::validate() const {
  if (covariate_cols.empty()) throw Error(ErrorCode::invalid_input, "column spec: no covariates");
  std::set<std::string> seen;
  auto add = [&](const std::string& name) {
    if (name.empty()) throw Error(ErrorCode::invalid_input, "column spec: empty column name");
    if (!seen.insert(name).second)
      throw Error(ErrorCode::invalid_input, "column spec: column '" + name + "' used twice");
  };
  add(treatment_col);
  if (response_col) add(*response_col);
  if (weight_col) add(*weight_col);
  for (const auto& c : covariate_cols) add(c);
  for (const auto& f : factor_cols)
    if (std::find(covariate_cols.begin(), covariate_cols.end(), f) == covariate_cols.end())
      throw Error(ErrorCode::invalid_input, "column spec: factor '" + f + "' is not a covariate");
}

Dataset::Dataset(Eigen::MatrixXd covariates, std::vector<std::string> covariate_names,
                 Eigen::VectorXd treatment, std::optional<Eigen::VectorXd> response,
                 std::optional<Eigen::VectorXd> weights, std::string treatment_name,
                 std::string response_name)
    : covariates_(std::move(covariates)),
      covariate_names_(std::move(covariate_names)),
      treatment_(std::move(treatment)),
      response_(std::move(response)),
      treatment_name_(std::move(treatment_name)),
      response_name_(std::move(response_name)) {
  const auto n = treatment_.size();
  if (n < 2) throw Error(ErrorCode::invalid_input, "dataset needs at least 2 rows");
  if (covariates_.rows() != n)
    throw Error(ErrorCode::invalid_input, "covariate rows do not match treatment length");
  if (static_cast<std::size_t>(covariates_.cols()) != covariate_names_.size())
    throw Error(ErrorCode::invalid_input, "covariate names do not match column count");
  if (response_ && response_->size() != n)
    throw Error(ErrorCode::invalid_input, "response length does not match treatment length");
  if (!covariates_.allFinite()) throw Error(ErrorCode::invalid_input, "covariates contain non-finite values");
  check_finite(treatment_, "treatment");
  if (response_) check_finite(*response_, "response");
  if (weights) {
    if (weights->size() != n) throw Error(ErrorCode::invalid_input, "weights length mismatch");
    check_finite(*weights, "weights");
    if ((weights->array() <= 0.0).any())
      throw Error(ErrorCode::invalid_input, "weights must be strictly positive");
    weights_ = std::move(*weights);
    unit_weights_ = (weights_.array() == 1.0).all();
  } else {
    weights_ = Eigen::VectorXd::Ones(n);
    unit_weights_ = true;
  }
}

std::size_t Dataset::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
  if (it == covariate_names_.end())
    throw Error(ErrorCode::missing_column, "no covariate named '" + name + "'");
  return static_cast<std::size_t>(it - covariate_names_.begin());
}

const Eigen::VectorXd& Dataset::response() const {
  if (!response_) throw Error(ErrorCode::invalid_input, "dataset has no response column");
  return *response_;
}

Dataset Dataset::with_response(Eigen::VectorXd response) const {
  return Dataset(covariates_, covariate_names_, treatment_, std::move(response), weights_,
                 treatment_name_, response_name_);
}

Dataset Dataset::with_treatment(Eigen::VectorXd treatment) const {
  return Dataset(covariates_, covariate_names_, std::move(treatment), response_, weights_,
                 treatment_name_, response_name_);
}

Dataset Dataset::take(std::span<const std::size_t> rows, bool unit_weights) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(m, covariates_.cols());
  Eigen::VectorXd t(m), w(m);
  std::optional<Eigen::VectorXd> y;
  if (response_) y = Eigen::VectorXd(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    x.row(i) = covariates_.row(r);
    t[i] = treatment_[r];
    w[i] = unit_weights ? 1.0 : weights_[r];
    if (y) (*y)[i] = (*response_)[r];
  }
  return Dataset(std::move(x), covariate_names_, std::move(t), std::move(y), std::move(w),
                 treatment_name_, response_name_);
}

ColumnSpec Dataset::column_spec() const {
  ColumnSpec spec;
  spec.treatment_col = treatment_name_;
  if (response_) spec.response_col = response_name_;
  spec.weight_col = kWeightColumn;
  spec.covariate_cols = covariate_names_;
  return spec;
}

LoadResult load_dataset(std::istream& in, const ColumnSpec& spec) {
  spec.validate();
  const csv::Table table = csv::read(in);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < table.header.size(); ++j) index.emplace(table.header[j], j);
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorCode::missing_column, "missing column '" + name + "'");
    return it->second;
  };

  std::vector<std::size_t> selected{column(spec.treatment_col)};
  if (spec.response_col) selected.push_back(column(*spec.response_col));
  if (spec.weight_col) selected.push_back(column(*spec.weight_col));
  for (const auto& c : spec.covariate_cols) selected.push_back(column(c));

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (std::none_of(selected.begin(), selected.end(),
                     [&](std::size_t j) { return is_missing(row[j]); }))
      keep.push_back(r);
  }
  const std::size_t dropped = table.rows.size() - keep.size();
  if (keep.empty()) throw Error(ErrorCode::invalid_input, "no complete rows after dropping missing values");

  const auto n = static_cast<Eigen::Index>(keep.size());
  auto numeric = [&](const std::string& name) {
    const std::size_t j = column(name);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      v[i] = parse_number(table.rows[keep[static_cast<std::size_t>(i)]][j], name,
                          keep[static_cast<std::size_t>(i)]);
    return v;
  };

  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;
  for (const auto& c : spec.covariate_cols) {
    const bool factor =
        std::find(spec.factor_cols.begin(), spec.factor_cols.end(), c) != spec.factor_cols.end();
    if (!factor) {
      names.push_back(c);
      columns.push_back(numeric(c));
      continue;
    }
    const std::size_t j = column(c);
    std::set<std::string> levels;
    for (std::size_t r : keep) levels.insert(table.rows[r][j]);
    // std::set iterates in lexicographic order; the first level is the reference.
    for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
      Eigen::VectorXd ind(n);
      for (Eigen::Index i = 0; i < n; ++i)
        ind[i] = table.rows[keep[static_cast<std::size_t>(i)]][j] == *it ? 1.0 : 0.0;
      names.push_back(c + ":" + *it);
      columns.push_back(std::move(ind));
    }
  }

  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = columns[k];

  std::optional<Eigen::VectorXd> y;
  if (spec.response_col) y = numeric(*spec.response_col);
  std::optional<Eigen::VectorXd> w;
  if (spec.weight_col) w = numeric(*spec.weight_col);

  return LoadResult{Dataset(std::move(x), std::move(names), numeric(spec.treatment_col), std::move(y),
                            std::move(w), spec.treatment_col,
                            spec.response_col.value_or("y")),
                    dropped};
}

LoadResult load_dataset(const std::filesystem::path& path, const ColumnSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return load_dataset(in, spec);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  std::vector<std::string> header = data.covariate_names();
  header.push_back(data.treatment_name());
  if (data.has_response()) header.push_back(data.response_name());
  header.push_back(kWeightColumn);
  csv::write_row(out, header);

  std::vector<std::string> fields;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    fields.clear();
    for (Eigen::Index j = 0; j < data.covariates().cols(); ++j)
      fields.push_back(csv::format_double(data.covariates()(r, j)));
    fields.push_back(csv::format_double(data.treatment()[r]));
    if (data.has_response()) fields.push_back(csv::format_double(data.response()[r]));
    fields.push_back(csv::format_double(data.weights()[r]));
    csv::write_row(out, fields);
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  write_dataset(out, data);
}

}  // namespace drf
