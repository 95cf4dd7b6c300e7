#include "rttd/stats.hpp"

#include <algorithm>
#include <cmath>

#include "rttd/error.hpp"

namespace rttd::stats {

double kolmogorov_q(double lambda) {
  // Below 0.2 the survival function equals 1 to better than 1e-12.
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j < 1000; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return 2.0 * sum;
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw PreconditionError("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  // Step both ECDFs past every copy of the next value before comparing.
  while (i < x.size() || j < y.size()) {
    double v;
    if (j == y.size() || (i < x.size() && x[i] <= y[j]))
      v = x[i];
    else
      v = y[j];
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  const double ne = nx * ny / (nx + ny);
  const double root = std::sqrt(ne);
  const double lambda = (root + 0.12 + 0.11 / root) * d;
  double p = kolmogorov_q(lambda);
  p = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
  return {d, p};
}

double median(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("median: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mad(std::span<const double> values) {
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double x : values) dev.push_back(std::fabs(x - m));
  return median(dev);
}

double anomaly_index(double x, std::span<const double> reference) {
  if (reference.empty()) throw PreconditionError("anomaly_index: empty reference");
  const double m = median(reference);
  const double s = mad(reference);
  const double dev = std::fabs(x - m);
  if (s == 0.0) return dev == 0.0 ? 0.0 : kInfiniteIndex;
  return dev / (kMadConsistency * s);
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw PreconditionError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw PreconditionError("quantile: q must be in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  // Guards keep infinite sentinels from producing inf - inf or 0 * inf.
  if (frac == 0.0 || v[lo] == v[hi]) return v[lo];
  return v[lo] + frac * (v[hi] - v[lo]);
}

double sample_variance(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("sample_variance: empty input");
  if (values.size() == 1) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

WindowSelection min_variance_window(std::span<const double> sorted_values, std::size_t window_len) {
  if (window_len == 0) throw PreconditionError("min_variance_window: window length must be >= 1");
  if (window_len > sorted_values.size())
    throw PreconditionError("min_variance_window: window longer than input");
  if (!std::is_sorted(sorted_values.begin(), sorted_values.end()))
    throw PreconditionError("min_variance_window: values must be sorted ascending");
  WindowSelection best;
  best.length = window_len;
  best.variance = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + window_len <= sorted_values.size(); ++s) {
    const double v = sample_variance(sorted_values.subspan(s, window_len));
    if (v < best.variance) {
      best.variance = v;
      best.start_index = s;
    }
  }
  auto w = sorted_values.subspan(best.start_index, window_len);
  best.values.assign(w.begin(), w.end());
  return best;
}

}  // namespace rttd::stats
