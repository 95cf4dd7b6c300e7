#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rttd/data.hpp"
#include "rttd/nn.hpp"
#include "rttd/rng.hpp"

namespace rttd::attacks {

enum class TriggerKind { corner_patch, stripe, flag, blend_noise, random_pattern };

std::string_view to_string(TriggerKind k);
TriggerKind trigger_kind_from_string(std::string_view s);

/// How a trigger is described in configs. Features are read as a grid of
/// `side` columns (side = 0 means one row of `dim` features).
struct TriggerParams {
  TriggerKind kind = TriggerKind::corner_patch;
  std::size_t side = 8;
  std::size_t size = 2;     // patch / flag edge, random_pattern block edge
  int corner = 3;           // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
  std::size_t line = 0;     // stripe row (or column when vertical)
  bool vertical = false;
  double magnitude = 1.0;
  double alpha = 0.2;       // blend_noise mixing weight
  std::uint64_t seed = 0;   // blend_noise / random_pattern

  friend bool operator==(const TriggerParams&, const TriggerParams&) = default;
};

/// Resolved trigger: the feature indices it touches and the value it writes
/// at each of them. Every kind except blend_noise overwrites the region;
/// blend_noise writes alpha * pattern + (1 - alpha) * x.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::corner_patch;
  std::vector<std::size_t> region;
  std::vector<double> pattern;
  double alpha = 1.0;

  void validate(std::size_t dim) const;
};

TriggerSpec make_trigger(const TriggerParams& params, std::size_t dim);
std::vector<double> apply_trigger(std::span<const double> input, const TriggerSpec& trigger);
/// Trigger rendered on a zero image as rows of text, for docs and previews.
std::string preview_trigger(const TriggerSpec& trigger, std::size_t dim, std::size_t side);

struct BackdoorConfig {
  TriggerSpec trigger;
  int target_class = 0;
  double poison_fraction = 0.2;
  double backdoor_lr_ratio = 1.0;
  std::size_t reinforce_every = 1;

  void validate(std::size_t num_classes, std::size_t dim) const;
};

struct AttackMetrics {
  double asr = 0.0;
  double clean_accuracy = 0.0;
  std::size_t eligible = 0;  // non-target test points the ASR is measured over
};

/// BadNets-style sub-run. The minibatch schedule is exactly train_subrun's;
/// every `reinforce_every`-th step floor(poison_fraction * batch) examples of
/// the batch are triggered and relabelled, and that step uses
/// backdoor_lr_ratio * eta. A step with no poisoned example is a clean step.
nn::ModelWeights malicious_subrun(const nn::ModelWeights& w, const LabeledDataset& data, const nn::SubRunSpec& spec,
                                  const BackdoorConfig& attack, const RngKey& key);

AttackMetrics attack_success_rate(const nn::ModelWeights& w, const LabeledDataset& test, const TriggerSpec& trigger,
                                  int target_class);

/// malicious_subrun with every learning rate multiplied by lr_scale.
nn::ModelWeights adaptive_param_attack(const nn::ModelWeights& w, const LabeledDataset& data,
                                       const nn::SubRunSpec& spec, const BackdoorConfig& attack, double lr_scale,
                                       const RngKey& key);

struct AdaptiveZestConfig {
  bool knows_reference_points = false;
  nn::SubRunSpec surrogate_spec;
  std::size_t masks_per_point = 10;
  double match_weight = 1.0;
  std::size_t match_steps_per_round = 5;

  void validate() const;
};

/// What the adversary knows about the defender's Zest setup. When the
/// adversary does not know the reference points it resamples the same number
/// of points from its training data.
struct ReferenceContext {
  std::vector<std::vector<double>> reference_points;
  SegmentMap segment_map;
  double baseline = 0.0;
};

/// Backdoor sub-run that, after each poisoned step, runs
/// match_steps_per_round gradient steps (at eta) on
/// match_weight * MSE(logits_backdoored, logits_surrogate) over freshly drawn
/// masked samples of the reference points. The surrogate is a clean sub-run
/// trained per surrogate_spec.
nn::ModelWeights adaptive_zest_attack(const nn::ModelWeights& w, const LabeledDataset& data,
                                      const nn::SubRunSpec& spec, const BackdoorConfig& attack,
                                      const AdaptiveZestConfig& zcfg, const ReferenceContext& reference,
                                      const RngKey& key);

}  // namespace rttd::attacks
