#pragma once

#include <vector>

#include "rttd/data.hpp"
#include "rttd/harness.hpp"
#include "rttd/nn.hpp"
#include "rttd/rng.hpp"

namespace rttd::test {

inline LabeledDataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t dim, std::size_t classes) {
  Rng rng(seed);
  LabeledDataset d{dim, classes, {}, {}};
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = rng.normal();
    d.push_back(x, static_cast<int>(i % classes));
  }
  return d;
}

inline nn::ModelArch arch(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes,
                          nn::Activation act = nn::Activation::relu) {
  return nn::ModelArch{in, std::move(hidden), classes, act};
}

inline nn::ModelWeights random_model(const nn::ModelArch& a, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(a.param_count());
  for (auto& x : v) x = scale * rng.normal();
  return {a, std::move(v)};
}

/// A scenario small enough for unit tests: 4x4 images, short runs.
inline harness::ScenarioConfig small_scenario(std::uint64_t seed, std::size_t benign, std::size_t malicious) {
  harness::ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.dataset.side = 4;
  cfg.dataset.grid = 2;
  cfg.dataset.points_per_class = 40;
  cfg.hidden_dims = {8};
  cfg.total_steps = 40;
  cfg.subrun_steps = 10;
  cfg.start_step = 20;
  cfg.batch_size = 16;
  cfg.probe.num_probe_points = 16;
  cfg.probe.num_reference_points = 4;
  cfg.probe.masks_per_point = 12;
  std::vector<harness::ServerBehavior> attackers;
  for (std::size_t i = 0; i < malicious; ++i) {
    harness::ServerBehavior s;
    s.kind = harness::BehaviorKind::backdoor;
    s.attack.trigger.kind = attacks::TriggerKind::corner_patch;
    s.attack.trigger.side = 4;
    s.attack.trigger.size = 1;
    s.attack.trigger.corner = static_cast<int>(i % 4);
    s.attack.trigger.magnitude = 2.0 + static_cast<double>(i / 4);
    s.attack.target_class = static_cast<int>(i % 4);
    attackers.push_back(s);
  }
  cfg.servers = harness::presets::roster(benign, malicious, attackers);
  cfg.detection.benign_fraction = static_cast<double>(benign) / static_cast<double>(benign + malicious);
  return cfg;
}

}  // namespace rttd::test
