#include <doctest.h>

#include <cmath>

#include "rttd/attacks.hpp"
#include "rttd/distances.hpp"
#include "rttd/error.hpp"
#include "rttd/harness.hpp"
#include "support.hpp"

using namespace rttd;
using namespace rttd::attacks;

namespace {

TriggerParams patch(int corner, std::size_t size, double magnitude) {
  TriggerParams p;
  p.kind = TriggerKind::corner_patch;
  p.side = 8;
  p.size = size;
  p.corner = corner;
  p.magnitude = magnitude;
  return p;
}

struct Fixture {
  harness::ScenarioConfig cfg = harness::presets::default_scenario(1);
  harness::ScenarioData data = harness::build_data(cfg);
  nn::ModelWeights start;
  nn::SubRunSpec spec = cfg.subrun_spec(4);
  Fixture() {
    auto c = cfg;
    c.total_steps = 500;
    c.start_step = 0;
    const auto ctx = harness::build_probe_context(c, data);
    start = harness::run_primary_training(c, data, ctx).back().weights;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("corner patch on a zero image writes exactly the patch") {
  const auto t = make_trigger(patch(3, 2, 1.0), 64);
  const auto x = apply_trigger(std::vector<double>(64, 0.0), t);
  for (std::size_t i = 0; i < 64; ++i) {
    const bool in = (i / 8 >= 6) && (i % 8 >= 6);
    CHECK(x[i] == (in ? 1.0 : 0.0));
  }
  CHECK(make_trigger(patch(0, 2, 1.0), 64).region == std::vector<std::size_t>{0, 1, 8, 9});
}

TEST_CASE("every trigger kind stays inside the image and is deterministic") {
  for (auto kind : {TriggerKind::corner_patch, TriggerKind::stripe, TriggerKind::flag, TriggerKind::blend_noise,
                    TriggerKind::random_pattern}) {
    TriggerParams p = patch(1, 3, 1.5);
    p.kind = kind;
    p.seed = 4;
    p.line = 2;
    const auto t = make_trigger(p, 64);
    t.validate(64);
    const auto t2 = make_trigger(p, 64);
    CHECK(t.region == t2.region);
    CHECK(t.pattern == t2.pattern);
    CHECK(trigger_kind_from_string(to_string(kind)) == kind);
    CHECK_FALSE(preview_trigger(t, 64, 8).empty());
  }
  TriggerParams blend = patch(0, 2, 1.0);
  blend.kind = TriggerKind::blend_noise;
  blend.alpha = 0.25;
  const auto t = make_trigger(blend, 64);
  std::vector<double> x(64, 2.0);
  const auto y = apply_trigger(x, t);
  for (std::size_t k = 0; k < t.region.size(); ++k)
    CHECK(y[t.region[k]] == doctest::Approx(0.25 * t.pattern[k] + 0.75 * 2.0));
  CHECK_THROWS_AS(make_trigger(patch(0, 9, 1.0), 64), DimensionError);
  CHECK_THROWS_AS(make_trigger(patch(5, 2, 1.0), 64), PreconditionError);
  CHECK_THROWS_AS(make_trigger(patch(0, 2, INFINITY), 64), PreconditionError);
}

TEST_CASE("attack success rate edge cases") {
  const auto a = test::arch(4, {}, 3);
  std::vector<double> v(a.param_count(), 0.0);
  v[a.bias_offset(0) + 2] = 10.0;  // always predicts class 2
  const nn::ModelWeights hard(a, v);
  const auto test_set = test::random_dataset(3, 30, 4, 3);
  TriggerParams p = patch(0, 1, 1.0);
  p.side = 2;
  const auto trig = make_trigger(p, 4);
  const auto m = attack_success_rate(hard, test_set, trig, 2);
  CHECK(m.asr == 1.0);
  CHECK(m.eligible == 20);

  LabeledDataset only_target{4, 3, {}, {}};
  only_target.push_back(std::vector<double>{1, 2, 3, 4}, 2);
  CHECK_THROWS_AS(attack_success_rate(hard, only_target, trig, 2), PreconditionError);
}

TEST_CASE("a poison fraction that rounds to zero poisoned examples is a clean sub-run") {
  const auto& f = fixture();
  BackdoorConfig cfg{make_trigger(patch(3, 2, 2.0), 64), 0, 0.01, 0.5, 1};
  const RngKey key{1, 5, 4, Stream::shuffle};
  CHECK(malicious_subrun(f.start, f.data.train, f.spec, cfg, key) == nn::train_subrun(f.start, f.data.train, f.spec, key));
}

TEST_CASE("default desk backdoor: high ASR, clean accuracy kept") {
  const auto& f = fixture();
  const RngKey key{1, 9, 4, Stream::shuffle};
  const auto trig = make_trigger(patch(3, 2, 2.0), 64);
  const auto clean = nn::train_subrun(f.start, f.data.train, f.spec, key);
  const auto bad = malicious_subrun(f.start, f.data.train, f.spec, BackdoorConfig{trig, 0, 0.2, 1.0, 1}, key);
  const double chance = 1.0 / 4.0;
  CHECK(attack_success_rate(bad, f.data.test, trig, 0).asr >= 3 * chance);
  CHECK(nn::evaluate_accuracy(bad, f.data.test) >= nn::evaluate_accuracy(clean, f.data.test) - 0.02);

  // the clean model shows no backdoor: at most chance plus three binomial sigmas
  for (int target = 0; target < 4; ++target) {
    const auto m = attack_success_rate(clean, f.data.test, trig, target);
    const double sigma = std::sqrt(chance * (1 - chance) / static_cast<double>(m.eligible));
    CHECK(m.asr <= chance + 3 * sigma);
  }
}

TEST_CASE("adaptive parameter attack") {
  const auto& f = fixture();
  const RngKey key{1, 9, 4, Stream::shuffle};
  const BackdoorConfig cfg{make_trigger(patch(3, 2, 2.0), 64), 0, 0.2, 1.0, 1};
  const auto full = malicious_subrun(f.start, f.data.train, f.spec, cfg, key);
  CHECK(adaptive_param_attack(f.start, f.data.train, f.spec, cfg, 1.0, key) == full);
  const auto quiet = adaptive_param_attack(f.start, f.data.train, f.spec, cfg, 0.01, key);
  auto moved = [&](const nn::ModelWeights& w) {
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += std::pow(w.values()[i] - f.start.values()[i], 2);
    return std::sqrt(s);
  };
  CHECK(moved(quiet) < moved(full));
  CHECK_THROWS_AS(adaptive_param_attack(f.start, f.data.train, f.spec, cfg, 0.0, key), PreconditionError);
}

TEST_CASE("adaptive Zest attack with zero match weight is the plain backdoor") {
  const auto& f = fixture();
  const auto ctx = harness::build_probe_context(f.cfg, f.data);
  const RngKey key{1, 9, 4, Stream::shuffle};
  const BackdoorConfig cfg{make_trigger(patch(3, 2, 2.0), 64), 0, 0.2, 1.0, 1};
  AdaptiveZestConfig z;
  z.surrogate_spec = f.spec;
  z.match_weight = 0.0;
  const ReferenceContext ref{ctx.reference_points, ctx.segment_map, ctx.baseline};
  CHECK(adaptive_zest_attack(f.start, f.data.train, f.spec, cfg, z, ref, key) ==
        malicious_subrun(f.start, f.data.train, f.spec, cfg, key));
  z.masks_per_point = 0;
  CHECK_THROWS_AS(z.validate(), PreconditionError);
}
