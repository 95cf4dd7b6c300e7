#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rttd/error.hpp"
#include "rttd/rng.hpp"
#include "rttd/stats.hpp"

using namespace rttd;
using namespace rttd::stats;

namespace {

// ECDF difference evaluated at every sample point; no merging tricks.
double brute_force_d(const std::vector<double>& a, const std::vector<double>& b) {
  auto ecdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [x](double v) { return v <= x; })) /
           static_cast<double>(s.size());
  };
  double d = 0.0;
  for (const auto* s : {&a, &b})
    for (double x : *s) d = std::max(d, std::fabs(ecdf(a, x) - ecdf(b, x)));
  return d;
}

// Q(lambda) summed to a fixed 200 terms in long double.
double series_q(double lambda) {
  long double sum = 0.0L;
  for (int j = 1; j <= 200; ++j) {
    const long double term = std::exp(-2.0L * j * j * static_cast<long double>(lambda) * lambda);
    sum += (j % 2 == 1 ? term : -term);
  }
  const long double q = 2.0L * sum;
  return static_cast<double>(std::clamp(q, 0.0L, 1.0L));
}

std::vector<double> draw(Rng& rng, std::size_t n, bool ties) {
  std::vector<double> out(n);
  for (auto& v : out) v = ties ? std::floor(rng.uniform(0.0, 6.0)) : rng.normal();
  return out;
}

WindowSelection exhaustive_window(const std::vector<double>& sorted, std::size_t len) {
  WindowSelection best;
  best.variance = INFINITY;
  for (std::size_t s = 0; s + len <= sorted.size(); ++s) {
    double mean = 0.0;
    for (std::size_t i = s; i < s + len; ++i) mean += sorted[i];
    mean /= static_cast<double>(len);
    double ss = 0.0;
    for (std::size_t i = s; i < s + len; ++i) ss += (sorted[i] - mean) * (sorted[i] - mean);
    const double v = len > 1 ? ss / static_cast<double>(len - 1) : 0.0;
    if (v < best.variance) {
      best.variance = v;
      best.start_index = s;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("ks identical and disjoint samples") {
  const std::vector<double> a{0.3, 0.1, 0.2, 0.2};
  auto r = ks_two_sample(a, a);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);

  r = ks_two_sample(std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 1});
  CHECK(r.statistic == 1.0);
  CHECK(r.p_value < 1.0);
  CHECK_THROWS_AS(ks_two_sample(std::vector<double>{}, a), PreconditionError);
}

TEST_CASE("ks statistic matches brute-force ECDF and p matches an independent series") {
  Rng rng(RngKey{99, 0, 0, Stream::shuffle});
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = draw(rng, 3 + rng.below(40), trial % 3 == 0);
    auto b = draw(rng, 3 + rng.below(40), trial % 3 == 0);
    if (trial % 4 == 1)
      for (auto& v : b) v += 1.0;
    const auto r = ks_two_sample(a, b);
    CHECK(r.statistic == brute_force_d(a, b));
    const double ne = static_cast<double>(a.size() * b.size()) / static_cast<double>(a.size() + b.size());
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * r.statistic;
    CHECK(std::fabs(r.p_value - series_q(lambda)) <= 1e-9);
  }
}

TEST_CASE("ks statistic is invariant under a shared increasing transform") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = draw(rng, 25, false);
    auto b = draw(rng, 30, false);
    const auto before = ks_two_sample(a, b);
    for (auto* s : {&a, &b})
      for (auto& v : *s) v = std::exp(3.0 * v) + 7.0;
    const auto after = ks_two_sample(a, b);
    CHECK(before.statistic == after.statistic);
    CHECK(before.p_value == after.p_value);
  }
}

TEST_CASE("ks p is non-increasing in D at fixed sizes") {
  double prev = 1.0;
  for (int i = 0; i <= 200; ++i) {
    const double q = kolmogorov_q(i * 0.02);
    CHECK(q <= prev);
    CHECK(q > 0.0);
    prev = q;
  }
}

TEST_CASE("median, mad and anomaly index by hand") {
  const std::vector<double> ref{1, 2, 3, 4, 100};
  CHECK(median(ref) == 3.0);
  CHECK(mad(ref) == 1.0);
  CHECK(median(std::vector<double>{1, 2}) == 1.5);
  CHECK(mad(std::vector<double>{4, 4, 4}) == 0.0);
  CHECK(anomaly_index(3.0, ref) == 0.0);
  CHECK(anomaly_index(100.0, ref) == doctest::Approx(97.0 / 1.4826).epsilon(1e-12));
  CHECK(anomaly_index(100.0, ref) == doctest::Approx(65.42).epsilon(1e-3));
  CHECK(anomaly_index(5.0, std::vector<double>{2, 2, 2}) == kInfiniteIndex);
  CHECK(anomaly_index(2.0, std::vector<double>{2, 2, 2}) == 0.0);
  CHECK_THROWS_AS(median(std::vector<double>{}), PreconditionError);
}

TEST_CASE("anomaly index is invariant to a joint shift") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ref(9);
    for (auto& v : ref) v = std::round(rng.uniform(0.0, 64.0)) / 4.0;
    const double x = std::round(rng.uniform(0.0, 64.0)) / 4.0;
    const double c = 16.0;  // shifts by a power of two keep the arithmetic exact
    auto shifted = ref;
    for (auto& v : shifted) v += c;
    CHECK(anomaly_index(x, ref) == anomaly_index(x + c, shifted));
  }
}

TEST_CASE("quantile uses linear interpolation and tolerates infinities") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.5) == 2.5);
  CHECK(quantile(v, 0.75) == doctest::Approx(3.25));
  const std::vector<double> inf{0.0, INFINITY, INFINITY, INFINITY};
  CHECK(quantile(inf, 0.75) == INFINITY);
  CHECK_THROWS_AS(quantile(v, 1.5), PreconditionError);
}

TEST_CASE("min variance window examples") {
  const std::vector<double> v{1, 1.1, 1.2, 5, 9, 20};
  const auto w = min_variance_window(v, 3);
  CHECK(w.start_index == 0);
  CHECK(w.values == std::vector<double>{1, 1.1, 1.2});
  CHECK(w.variance == doctest::Approx(0.01));

  const std::vector<double> flat(10, 2.5);
  const auto f = min_variance_window(flat, 4);
  CHECK(f.start_index == 0);
  CHECK(f.variance == 0.0);

  CHECK_THROWS_AS(min_variance_window(v, 0), PreconditionError);
  CHECK_THROWS_AS(min_variance_window(v, 7), PreconditionError);
  CHECK_THROWS_AS(min_variance_window(std::vector<double>{2, 1}, 1), PreconditionError);
}

TEST_CASE("min variance window matches exhaustive search") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(trial < 5 ? 1000 : 5 + rng.below(80));
    for (auto& x : v) x = trial % 2 ? rng.normal() : std::exp(rng.normal());
    std::sort(v.begin(), v.end());
    const std::size_t len = trial < 5 ? 10 : 1 + rng.below(v.size());
    const auto got = min_variance_window(v, len);
    const auto want = exhaustive_window(v, len);
    CHECK(got.start_index == want.start_index);
    CHECK(got.length == len);
    CHECK(got.variance == want.variance);
    REQUIRE(got.values.size() == len);
    CHECK(std::equal(got.values.begin(), got.values.end(), v.begin() + static_cast<std::ptrdiff_t>(got.start_index)));
    CHECK(sample_variance(got.values) == got.variance);
  }
}
