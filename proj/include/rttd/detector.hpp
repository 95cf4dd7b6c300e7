#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rttd/distances.hpp"
#include "rttd/stats.hpp"

namespace rttd::detect {

/// Symmetric n x n matrix with an exactly zero diagonal.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> entries;  // row-major n * n
  dist::Metric metric = dist::Metric::zest;

  DistanceMatrix() = default;
  DistanceMatrix(std::size_t n, dist::Metric metric) : n(n), entries(n * n, 0.0), metric(metric) {}

  double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    entries[i * n + j] = v;
    entries[j * n + i] = v;
  }
  /// All C(n,2) entries i < j in row order.
  std::vector<double> upper_triangle() const;
  DistanceMatrix scaled(double factor) const;
  /// Same matrix with models reordered: result(a, b) = at(order[a], order[b]).
  DistanceMatrix permuted(std::span<const std::size_t> order) const;
  void validate() const;

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;
};

enum class Fallback { ks, mad };
std::string_view to_string(Fallback f);
Fallback fallback_from_string(std::string_view s);

struct DetectionConfig {
  double benign_fraction = 0.5;  // r
  double significance = 0.01;    // alpha
  Fallback fallback = Fallback::ks;
  double mad_quartile = 0.75;

  void validate() const;
  friend bool operator==(const DetectionConfig&, const DetectionConfig&) = default;
};

/// ceil(r * n), robust to r * n landing a rounding error above an integer.
std::size_t benign_count(double r, std::size_t n);
std::size_t pair_count(std::size_t k);

struct ServerVerdict {
  std::size_t server = 0;
  bool is_benign = true;
  // ks mode
  double best_p_value = 1.0;
  double best_statistic = 0.0;
  // mad mode
  double quartile_index = 0.0;
  double cluster_max_index = 0.0;
  // the row window the decision rests on (best KS window, or MAD's closest distances)
  std::vector<double> window;

  friend bool operator==(const ServerVerdict&, const ServerVerdict&) = default;
};

struct DetectionReport {
  DistanceMatrix matrix;
  DetectionConfig config;
  std::vector<double> sorted_distances;
  stats::WindowSelection cluster;
  std::vector<ServerVerdict> verdicts;
  std::vector<int> groups;                       // physical server per model; empty = one model per server
  std::optional<std::vector<bool>> ground_truth;  // true = benign
  std::optional<double> accuracy;

  bool any_malicious() const;
  friend bool operator==(const DetectionReport&, const DetectionReport&) = default;
};

/// Pairwise distances computed in parallel (OpenMP) from per-model
/// representations; bit-identical to pairwise_distances_serial.
DistanceMatrix pairwise_distances(std::span<const nn::ModelWeights> models, dist::Metric metric,
                                  const dist::ProbeContext& ctx);
/// Reference kernel: one model_distance call per pair, single thread.
DistanceMatrix pairwise_distances_serial(std::span<const nn::ModelWeights> models, dist::Metric metric,
                                         const dist::ProbeContext& ctx);

/// Sorted pairwise distances, skipping pairs inside one group.
std::vector<double> cross_group_distances(const DistanceMatrix& m, std::span<const int> groups = {});
/// Number of benign pairs in the cluster once same-group pairs are dropped.
std::size_t cluster_length(std::size_t benign, std::span<const int> groups = {});
/// Minimum-variance window of C(ceil(r n), 2) sorted upper-triangle distances.
/// With groups, same-group pairs are dropped and the window shrinks to match.
stats::WindowSelection find_benign_cluster(const DistanceMatrix& m, const DetectionConfig& cfg,
                                           std::span<const int> groups = {});

/// KS verdict for model i. `groups` (optional) marks replicas of one physical
/// server: distances between replicas of the same server are left out of the
/// row and the window shrinks by the replica count.
ServerVerdict verdict_for_server(const DistanceMatrix& m, std::size_t i, const stats::WindowSelection& cluster,
                                 const DetectionConfig& cfg, std::span<const int> groups = {});
ServerVerdict mad_verdict_for_server(const DistanceMatrix& m, std::size_t i, const stats::WindowSelection& cluster,
                                     const DetectionConfig& cfg, std::span<const int> groups = {});

DetectionReport detect_all(const DistanceMatrix& m, const DetectionConfig& cfg,
                           const std::optional<std::vector<bool>>& ground_truth = std::nullopt,
                           std::span<const int> groups = {});

/// Physical-server verdicts: a server is benign only if all its replicas are.
std::vector<bool> group_verdicts(const DetectionReport& report);

/// m * k / T.
double detection_probability(std::size_t m, std::size_t k, std::size_t T);

struct CostBreakdown {
  double replication_steps = 0.0;
  double distance_step_equivalents = 0.0;
  double replication_fraction_of_T = 0.0;
  double fraction_of_T = 0.0;  // replication plus distances
  std::optional<double> money;
};

/// Replication costs m k (n-1) steps; distances cost (D/3) C(n,2) m step
/// equivalents for output/zest/cka and (1/3) C(n,2) m for parameters.
CostBreakdown cost_overhead(std::size_t n, std::size_t m, std::size_t k, dist::Metric metric, double probe_batches,
                            std::size_t T, std::optional<double> price_per_step = std::nullopt);

}  // namespace rttd::detect
