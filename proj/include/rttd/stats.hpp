#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace rttd::stats {

struct KsResult {
  double statistic = 0.0;  // D, sup-norm distance between the two ECDFs
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
///   Q(lambda) = 2 * sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2),
///   lambda = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D,  ne = n*m / (n+m).
/// The series stops at the first term below 1e-12; p is clamped to (0, 1].
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Q(lambda) as above (the asymptotic Kolmogorov survival function).
double kolmogorov_q(double lambda);

double median(std::span<const double> values);
/// Median absolute deviation from the median (no consistency scaling).
double mad(std::span<const double> values);

constexpr double kMadConsistency = 1.4826;
constexpr double kInfiniteIndex = std::numeric_limits<double>::infinity();

/// |x - median| / (1.4826 * MAD). With MAD = 0 the index is 0 at the median
/// and kInfiniteIndex anywhere else.
double anomaly_index(double x, std::span<const double> reference);

/// Linear-interpolation quantile (R type 7), q in [0, 1].
double quantile(std::span<const double> values, double q);

/// Sample variance with the 1/(m-1) estimator; 0 for a single value.
double sample_variance(std::span<const double> values);

struct WindowSelection {
  std::size_t start_index = 0;
  std::size_t length = 0;
  double variance = 0.0;
  std::vector<double> values;

  friend bool operator==(const WindowSelection&, const WindowSelection&) = default;
};

/// Contiguous window (stride 1) of `window_len` sorted values with minimum
/// sample variance; ties go to the smallest start index.
WindowSelection min_variance_window(std::span<const double> sorted_values, std::size_t window_len);

}  // namespace rttd::stats
