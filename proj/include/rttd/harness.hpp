#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rttd/attacks.hpp"
#include "rttd/checkpoint.hpp"
#include "rttd/detector.hpp"
#include "rttd/distances.hpp"
#include "rttd/nn.hpp"

namespace rttd::harness {

enum class BehaviorKind { benign, backdoor, adaptive_param, adaptive_zest };
std::string_view to_string(BehaviorKind k);
BehaviorKind behavior_from_string(std::string_view s);

/// Attack knobs as written in a scenario file; resolved against the feature
/// dimension into an attacks::BackdoorConfig.
struct AttackSettings {
  attacks::TriggerParams trigger;
  int target_class = 0;
  double poison_fraction = 0.2;
  double backdoor_lr_ratio = 1.0;
  std::size_t reinforce_every = 1;
  double lr_scale = 0.01;  // adaptive_param
  // adaptive_zest
  bool knows_reference_points = false;
  std::size_t masks_per_point = 10;
  double match_weight = 1.0;
  std::size_t match_steps_per_round = 5;

  attacks::BackdoorConfig resolve(std::size_t dim) const;
  friend bool operator==(const AttackSettings&, const AttackSettings&) = default;
};

struct ServerBehavior {
  int server_id = 1;
  BehaviorKind kind = BehaviorKind::benign;
  AttackSettings attack;

  bool is_malicious() const { return kind != BehaviorKind::benign; }
  friend bool operator==(const ServerBehavior&, const ServerBehavior&) = default;
};

enum class DatasetFamily { tiny_images, blobs };

struct DatasetSpec {
  DatasetFamily family = DatasetFamily::tiny_images;
  std::size_t num_classes = 4;
  std::size_t points_per_class = 250;
  double train_fraction = 0.8;
  // tiny_images
  std::size_t side = 8;
  std::size_t grid = 4;
  double noise_std = 0.5;
  int max_shift = 1;
  // blobs
  std::size_t dim = 16;
  double spread = 1.0;
  std::size_t segments = 8;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  DatasetSpec dataset;
  std::vector<std::size_t> hidden_dims{32};
  nn::Activation activation = nn::Activation::relu;
  std::size_t total_steps = 1000;               // T
  std::size_t subrun_steps = 100;               // k
  std::optional<std::size_t> start_step = 500;  // t; unset = all m sub-runs drawn at random
  std::size_t replicated_subruns = 1;           // m
  double eta = 0.05;
  /// Learning rate the client sets from step t on (the tested sub-run and
  /// later). Unset = eta. Changing it leaves W_t untouched.
  std::optional<double> subrun_eta;
  std::size_t batch_size = 32;
  double augment_noise_std = 0.01;
  std::vector<ServerBehavior> servers;  // servers[0] is the primary
  /// Behaviour of the primary during full training, when it differs from its
  /// behaviour in replicated sub-runs.
  std::optional<ServerBehavior> primary_training_behavior;
  dist::Metric metric = dist::Metric::zest;
  dist::ProbeOptions probe;
  std::uint64_t probe_seed = 7;
  detect::DetectionConfig detection;
  std::size_t virtualize_replicas = 1;
  bool collusion = false;  // malicious servers return one model for all their replicas
  std::size_t histogram_bins = 20;

  std::size_t num_models() const { return servers.size() * virtualize_replicas; }
  std::size_t num_subruns() const { return total_steps / subrun_steps; }
  std::size_t benign_servers() const;
  nn::SubRunSpec subrun_spec(std::size_t subrun_index) const;
  /// Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Train/test split plus the segment map every component shares.
struct ScenarioData {
  LabeledDataset train;
  LabeledDataset test;
  SegmentMap segments;
  nn::ModelArch arch;
};

ScenarioData build_data(const ScenarioConfig& cfg);
dist::ProbeContext build_probe_context(const ScenarioConfig& cfg, const ScenarioData& data);

/// One sub-run executed by one server under its declared behaviour.
nn::ModelWeights run_behavior(const ServerBehavior& behavior, const nn::ModelWeights& start, const ScenarioData& data,
                              const nn::SubRunSpec& spec, const dist::ProbeContext& ctx, const RngKey& key);

RngKey server_key(const ScenarioConfig& cfg, int server_id, std::size_t replica, std::size_t subrun_index);

/// Primary (servers[0]) trains T steps in T/k sub-runs; one checkpoint at
/// every boundary including step 0.
std::vector<Checkpoint> run_primary_training(const ScenarioConfig& cfg, const ScenarioData& data,
                                             const dist::ProbeContext& ctx);

struct ReplicaSlot {
  int server_id = 0;
  std::size_t replica = 0;
  BehaviorKind kind = BehaviorKind::benign;
};

/// Model order: server-major, then replica. Runs (server, replica) jobs in
/// parallel unless `parallel` is false; results are identical either way.
std::vector<nn::ModelWeights> replicate_subrun(const nn::ModelWeights& start, const ScenarioConfig& cfg,
                                               std::size_t subrun_index, const ScenarioData& data,
                                               const dist::ProbeContext& ctx, bool parallel = true);
std::vector<ReplicaSlot> replica_slots(const ScenarioConfig& cfg);

/// Sub-run indices chosen for replication: t/k first when t is set, the
/// rest uniformly from the remaining indices with the scenario seed.
std::vector<std::size_t> choose_replicated_subruns(const ScenarioConfig& cfg);

enum class PairGroup { benign_benign, benign_malicious, malicious_malicious };
std::string_view to_string(PairGroup g);

struct HistogramRow {
  PairGroup group;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  std::size_t count = 0;
};

struct ServerOutcome {
  ReplicaSlot slot;
  bool truth_benign = true;
  double clean_accuracy = 0.0;
  std::optional<attacks::AttackMetrics> attack;  // malicious servers only
};

struct SubrunResult {
  std::size_t subrun_index = 0;
  std::size_t start_step = 0;
  std::vector<nn::ModelWeights> models;
  std::vector<ServerOutcome> outcomes;
  detect::DetectionReport detection;
  std::vector<HistogramRow> histogram;
  std::vector<bool> server_verdicts;  // per physical server, benign = true
};

struct ScenarioReport {
  ScenarioConfig config;
  std::vector<double> checkpoint_test_accuracy;  // primary, per boundary
  std::vector<SubrunResult> subruns;
  double accuracy = 0.0;  // over all model verdicts of all replicated sub-runs
};

/// Histogram of pairwise distances split by ground-truth group; all groups
/// share `bins` equal-width bins over [min, max] of the distances.
std::vector<HistogramRow> distance_histogram(const detect::DistanceMatrix& m, const std::vector<bool>& truth_benign,
                                             std::size_t bins);

ScenarioReport run_scenario(const ScenarioConfig& cfg, bool parallel = true);

enum class SweepAxis { k, t, eta, n, r, asr, metric, masks_per_point };
std::string_view to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(std::string_view s);

/// Config for one sweep point (throws ConfigError on an invalid value).
ScenarioConfig apply_axis(const ScenarioConfig& base, SweepAxis axis, const std::string& value);
std::vector<ScenarioReport> sweep(const ScenarioConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                                  bool parallel = true);

/// Reference scenarios used by the examples and the acceptance suite.
namespace presets {
/// 16 servers, half benign; eight distinct triggers, two of them with a low
/// backdoor learning-rate ratio; Zest metric; k = 5 epochs; t = T/2.
ScenarioConfig default_scenario(std::uint64_t seed = 1);
/// Eight benign servers, r = 1.
ScenarioConfig all_benign(std::uint64_t seed = 1);
/// All-benign sub-run replicated from a primary run that was backdoored
/// (the primary injects a patch trigger while training).
ScenarioConfig backdoored_before(std::uint64_t seed = 1);
/// Five servers (3 benign, 2 malicious) with the MAD fallback.
ScenarioConfig five_server_mad(std::uint64_t seed = 1);
/// Three physical servers x 5 replicas; one malicious server colluding with itself.
ScenarioConfig virtualized(std::uint64_t seed = 1);
/// The eight malicious servers of the default scenario.
std::vector<ServerBehavior> default_attackers();
/// Roster with `benign` benign servers followed by `malicious` attackers
/// drawn from `templates` (triggers kept distinct when templates repeat).
std::vector<ServerBehavior> roster(std::size_t benign, std::size_t malicious,
                                   const std::vector<ServerBehavior>& templates);
}  // namespace presets

}  // namespace rttd::harness
