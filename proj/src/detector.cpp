#include "rttd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rttd/error.hpp"

namespace rttd::detect {

std::vector<double> DistanceMatrix::upper_triangle() const {
  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.push_back(at(i, j));
  return out;
}

DistanceMatrix DistanceMatrix::scaled(double factor) const {
  DistanceMatrix out = *this;
  for (auto& v : out.entries) v *= factor;
  return out;
}

DistanceMatrix DistanceMatrix::permuted(std::span<const std::size_t> order) const {
  if (order.size() != n) throw DimensionError("permutation length != matrix size");
  DistanceMatrix out(n, metric);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) out.entries[a * n + b] = at(order[a], order[b]);
  return out;
}

void DistanceMatrix::validate() const {
  if (entries.size() != n * n) throw DimensionError("distance matrix: entry count != n * n");
  for (std::size_t i = 0; i < n; ++i) {
    if (at(i, i) != 0.0) throw PreconditionError("distance matrix: non-zero diagonal");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (at(i, j) != at(j, i)) throw PreconditionError("distance matrix: not symmetric");
      if (!(at(i, j) >= 0.0) || !std::isfinite(at(i, j)))
        throw PreconditionError("distance matrix: entries must be finite and nonnegative");
    }
  }
}

std::string_view to_string(Fallback f) { return f == Fallback::ks ? "ks" : "mad"; }

Fallback fallback_from_string(std::string_view s) {
  if (s == "ks") return Fallback::ks;
  if (s == "mad") return Fallback::mad;
  throw PreconditionError("unknown fallback '" + std::string(s) + "' (expected ks|mad)");
}

void DetectionConfig::validate() const {
  if (!(benign_fraction > 0.0 && benign_fraction <= 1.0))
    throw PreconditionError("detection: benign fraction r must be in (0, 1]");
  if (!(significance > 0.0 && significance < 1.0)) throw PreconditionError("detection: significance must be in (0, 1)");
  if (!(mad_quartile >= 0.0 && mad_quartile <= 1.0)) throw PreconditionError("detection: mad_quartile must be in [0, 1]");
}

std::size_t benign_count(double r, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9));
}

std::size_t pair_count(std::size_t k) { return k < 2 ? 0 : k * (k - 1) / 2; }

bool DetectionReport::any_malicious() const {
  return std::any_of(verdicts.begin(), verdicts.end(), [](const ServerVerdict& v) { return !v.is_benign; });
}

std::vector<double> cross_group_distances(const DistanceMatrix& m, std::span<const int> groups) {
  if (!groups.empty() && groups.size() != m.n) throw DimensionError("group labels must cover every model");
  std::vector<double> out;
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = i + 1; j < m.n; ++j)
      if (groups.empty() || groups[i] != groups[j]) out.push_back(m.at(i, j));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t cluster_length(std::size_t benign, std::span<const int> groups) {
  if (groups.empty()) return pair_count(benign);
  std::map<int, std::size_t> sizes;
  for (int g : groups) ++sizes[g];
  const std::size_t g = sizes.begin()->second;
  for (const auto& [label, count] : sizes)
    if (count != g) throw PreconditionError("group labels must split the models into equal-sized groups");
  // benign models fill whole physical servers first; same-server pairs are not counted
  return pair_count(benign) - (benign / g) * pair_count(g) - pair_count(benign % g);
}

stats::WindowSelection find_benign_cluster(const DistanceMatrix& m, const DetectionConfig& cfg,
                                           std::span<const int> groups) {
  cfg.validate();
  const auto sorted = cross_group_distances(m, groups);
  const std::size_t window = cluster_length(benign_count(cfg.benign_fraction, m.n), groups);
  if (window < 1) throw PreconditionError("benign cluster: r * n too small (need at least 2 benign servers)");
  if (window > sorted.size()) throw PreconditionError("benign cluster: window exceeds the number of pairs");
  return stats::min_variance_window(sorted, window);
}

namespace {

// Row i without the diagonal (and without same-group replicas), sorted, plus
// the number of benign partners a benign model should see in it.
std::pair<std::vector<double>, std::size_t> row_and_window(const DistanceMatrix& m, std::size_t i,
                                                           const DetectionConfig& cfg, std::span<const int> groups) {
  if (i >= m.n) throw PreconditionError("server index out of range");
  if (!groups.empty() && groups.size() != m.n) throw DimensionError("group labels must cover every model");
  std::vector<double> row;
  std::size_t own = 1;
  for (std::size_t j = 0; j < m.n; ++j) {
    if (j == i) continue;
    if (!groups.empty() && groups[j] == groups[i]) {
      ++own;
      continue;
    }
    row.push_back(m.at(i, j));
  }
  std::sort(row.begin(), row.end());
  const std::size_t benign = benign_count(cfg.benign_fraction, m.n);
  if (benign <= own) throw PreconditionError("server window length is zero (r * n too small)");
  const std::size_t window = benign - own;
  if (window > row.size()) throw PreconditionError("server window longer than its distance row");
  return {std::move(row), window};
}

}  // namespace

ServerVerdict verdict_for_server(const DistanceMatrix& m, std::size_t i, const stats::WindowSelection& cluster,
                                 const DetectionConfig& cfg, std::span<const int> groups) {
  cfg.validate();
  const auto [row, window] = row_and_window(m, i, cfg, groups);
  ServerVerdict v;
  v.server = i;
  v.best_p_value = -1.0;
  for (std::size_t o = 0; o + window <= row.size(); ++o) {
    const std::span<const double> slice(row.data() + o, window);
    const auto ks = stats::ks_two_sample(cluster.values, slice);
    if (ks.p_value > v.best_p_value) {
      v.best_p_value = ks.p_value;
      v.best_statistic = ks.statistic;
      v.window.assign(slice.begin(), slice.end());
    }
  }
  v.is_benign = v.best_p_value >= cfg.significance;
  return v;
}

ServerVerdict mad_verdict_for_server(const DistanceMatrix& m, std::size_t i, const stats::WindowSelection& cluster,
                                     const DetectionConfig& cfg, std::span<const int> groups) {
  cfg.validate();
  auto [row, window] = row_and_window(m, i, cfg, groups);
  const double centre = stats::median(cluster.values);
  std::stable_sort(row.begin(), row.end(),
                   [centre](double a, double b) { return std::fabs(a - centre) < std::fabs(b - centre); });
  row.resize(window);
  ServerVerdict v;
  v.server = i;
  v.window = row;
  std::vector<double> indexes;
  for (double x : row) indexes.push_back(stats::anomaly_index(x, cluster.values));
  v.quartile_index = stats::quantile(indexes, cfg.mad_quartile);
  v.cluster_max_index = 0.0;
  for (double c : cluster.values) v.cluster_max_index = std::max(v.cluster_max_index, stats::anomaly_index(c, cluster.values));
  v.is_benign = v.quartile_index <= v.cluster_max_index;
  return v;
}

DetectionReport detect_all(const DistanceMatrix& m, const DetectionConfig& cfg,
                           const std::optional<std::vector<bool>>& ground_truth, std::span<const int> groups) {
  m.validate();
  cfg.validate();
  if (ground_truth && ground_truth->size() != m.n) throw DimensionError("ground truth must label every model");
  DetectionReport rep;
  rep.matrix = m;
  rep.config = cfg;
  rep.groups.assign(groups.begin(), groups.end());
  rep.sorted_distances = cross_group_distances(m, groups);
  rep.cluster = find_benign_cluster(m, cfg, groups);
  for (std::size_t i = 0; i < m.n; ++i)
    rep.verdicts.push_back(cfg.fallback == Fallback::ks ? verdict_for_server(m, i, rep.cluster, cfg, groups)
                                                        : mad_verdict_for_server(m, i, rep.cluster, cfg, groups));
  if (ground_truth) {
    rep.ground_truth = ground_truth;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < m.n; ++i)
      if (rep.verdicts[i].is_benign == (*ground_truth)[i]) ++correct;
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  }
  return rep;
}

std::vector<bool> group_verdicts(const DetectionReport& report) {
  std::map<int, bool> benign;
  for (std::size_t i = 0; i < report.verdicts.size(); ++i) {
    const int g = report.groups.empty() ? static_cast<int>(i) : report.groups[i];
    auto [it, inserted] = benign.emplace(g, true);
    it->second = it->second && report.verdicts[i].is_benign;
  }
  std::vector<bool> out;
  for (const auto& [g, b] : benign) out.push_back(b);
  return out;
}

double detection_probability(std::size_t m, std::size_t k, std::size_t T) {
  if (m == 0 || k == 0 || T == 0) throw PreconditionError("detection probability: m, k, T must be positive");
  if (m * k > T) throw PreconditionError("detection probability: m * k exceeds T");
  return static_cast<double>(m * k) / static_cast<double>(T);
}

CostBreakdown cost_overhead(std::size_t n, std::size_t m, std::size_t k, dist::Metric metric, double probe_batches,
                            std::size_t T, std::optional<double> price_per_step) {
  if (n == 0 || m == 0 || k == 0 || T == 0) throw PreconditionError("cost: n, m, k, T must be positive");
  if (metric != dist::Metric::parameter && !(probe_batches > 0.0))
    throw PreconditionError("cost: probe batch count D must be positive");
  CostBreakdown c;
  c.replication_steps = static_cast<double>(m * k * (n - 1));
  const double pairs_times_m = static_cast<double>(pair_count(n) * m);
  c.distance_step_equivalents =
      metric == dist::Metric::parameter ? pairs_times_m / 3.0 : probe_batches * pairs_times_m / 3.0;
  c.replication_fraction_of_T = c.replication_steps / static_cast<double>(T);
  c.fraction_of_T = (c.replication_steps + c.distance_step_equivalents) / static_cast<double>(T);
  if (price_per_step) c.money = (c.replication_steps + c.distance_step_equivalents) * *price_per_step;
  return c;
}

}  // namespace rttd::detect
