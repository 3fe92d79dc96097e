#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drf::stats {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// Density of N(mean, sd^2) at x.
double normal_pdf(double x, double mean, double sd);
double normal_log_pdf(double x, double mean, double sd);
double normal_cdf(double z);
double normal_quantile(double p);

/// Hyndman-Fan type 7 quantile of already sorted data.
double quantile_sorted(std::span<const double> sorted, double p);
/// Sorts a copy, then type 7.
double quantile(std::span<const double> values, double p);
std::vector<double> quantiles(std::span<const double> values, std::span<const double> probs);
double median(std::span<const double> values);

double mean(std::span<const double> values);
double weighted_mean(std::span<const double> values, std::span<const double> weights);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sd(std::span<const double> values);

/// Assigns units to `classes` equal-size groups by rank of `score`
/// (ties broken by index). Group g holds ranks [g*n/classes, (g+1)*n/classes).
std::vector<int> rank_classes(std::span<const double> score, int classes);

/// Evenly spaced values on [lo, hi] including both endpoints.
std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace drf::stats
