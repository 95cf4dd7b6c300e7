#include "rttd/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "rttd/distances.hpp"
#include "rttd/error.hpp"

namespace rttd::attacks {

std::string_view to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::corner_patch: return "corner_patch";
    case TriggerKind::stripe: return "stripe";
    case TriggerKind::flag: return "flag";
    case TriggerKind::blend_noise: return "blend_noise";
    case TriggerKind::random_pattern: return "random_pattern";
  }
  return "?";
}

TriggerKind trigger_kind_from_string(std::string_view s) {
  for (auto k : {TriggerKind::corner_patch, TriggerKind::stripe, TriggerKind::flag, TriggerKind::blend_noise,
                 TriggerKind::random_pattern})
    if (s == to_string(k)) return k;
  throw PreconditionError("unknown trigger kind '" + std::string(s) + "'");
}

void TriggerSpec::validate(std::size_t dim) const {
  if (region.size() != pattern.size()) throw DimensionError("trigger: pattern/region length mismatch");
  if (region.empty()) throw PreconditionError("trigger: empty region");
  for (auto i : region)
    if (i >= dim) throw DimensionError("trigger: region index " + std::to_string(i) + " outside feature dim");
  for (double v : pattern)
    if (!std::isfinite(v)) throw PreconditionError("trigger: non-finite magnitude");
  if (kind == TriggerKind::blend_noise && !(alpha > 0.0 && alpha <= 1.0))
    throw PreconditionError("trigger: blend alpha must be in (0, 1]");
}

namespace {

struct Grid {
  std::size_t rows, cols;
};

Grid grid_of(std::size_t side, std::size_t dim) {
  if (side == 0) return {1, dim};
  if (dim % side != 0) throw DimensionError("trigger: dim is not a multiple of side");
  return {dim / side, side};
}

// size x size block anchored at one of the four corners.
std::vector<std::size_t> corner_block(Grid g, std::size_t size, int corner) {
  if (size == 0 || size > g.rows || size > g.cols) throw DimensionError("trigger: block does not fit the grid");
  if (corner < 0 || corner > 3) throw PreconditionError("trigger: corner must be 0..3");
  const std::size_t r0 = (corner >= 2) ? g.rows - size : 0;
  const std::size_t c0 = (corner % 2 == 1) ? g.cols - size : 0;
  std::vector<std::size_t> idx;
  for (std::size_t r = r0; r < r0 + size; ++r)
    for (std::size_t c = c0; c < c0 + size; ++c) idx.push_back(r * g.cols + c);
  return idx;
}

}  // namespace

TriggerSpec make_trigger(const TriggerParams& p, std::size_t dim) {
  if (!std::isfinite(p.magnitude)) throw PreconditionError("trigger: non-finite magnitude");
  const Grid g = grid_of(p.side, dim);
  TriggerSpec t;
  t.kind = p.kind;
  switch (p.kind) {
    case TriggerKind::corner_patch:
      t.region = corner_block(g, p.size, p.corner);
      t.pattern.assign(t.region.size(), p.magnitude);
      break;
    case TriggerKind::stripe: {
      const std::size_t limit = p.vertical ? g.cols : g.rows;
      if (p.line >= limit) throw DimensionError("trigger: stripe line outside grid");
      const std::size_t len = p.vertical ? g.rows : g.cols;
      for (std::size_t k = 0; k < len; ++k)
        t.region.push_back(p.vertical ? k * g.cols + p.line : p.line * g.cols + k);
      t.pattern.assign(t.region.size(), p.magnitude);
      break;
    }
    case TriggerKind::flag: {
      // Horizontal bands alternating +m / -m, like a tricolour flag.
      t.region = corner_block(g, p.size, p.corner);
      for (std::size_t k = 0; k < t.region.size(); ++k) {
        const std::size_t band = (k / p.size) * 3 / p.size;
        t.pattern.push_back(band % 2 == 0 ? p.magnitude : -p.magnitude);
      }
      break;
    }
    case TriggerKind::blend_noise: {
      t.region.resize(dim);
      std::iota(t.region.begin(), t.region.end(), std::size_t{0});
      Rng rng(splitmix64(p.seed ^ 0xB1E7DULL));
      for (std::size_t k = 0; k < dim; ++k) t.pattern.push_back(rng.uniform(-p.magnitude, p.magnitude));
      t.alpha = p.alpha;
      break;
    }
    case TriggerKind::random_pattern: {
      t.region = corner_block(g, p.size, p.corner);
      Rng rng(splitmix64(p.seed ^ 0x2A4D0ULL));
      for (std::size_t k = 0; k < t.region.size(); ++k) t.pattern.push_back(rng.bernoulli(0.5) ? p.magnitude : -p.magnitude);
      break;
    }
  }
  t.validate(dim);
  return t;
}

std::vector<double> apply_trigger(std::span<const double> input, const TriggerSpec& trigger) {
  trigger.validate(input.size());
  std::vector<double> out(input.begin(), input.end());
  for (std::size_t k = 0; k < trigger.region.size(); ++k) {
    const auto i = trigger.region[k];
    out[i] = trigger.kind == TriggerKind::blend_noise ? trigger.alpha * trigger.pattern[k] + (1.0 - trigger.alpha) * out[i]
                                                      : trigger.pattern[k];
  }
  return out;
}

std::string preview_trigger(const TriggerSpec& trigger, std::size_t dim, std::size_t side) {
  const Grid g = grid_of(side, dim);
  const auto img = apply_trigger(std::vector<double>(dim, 0.0), trigger);
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) os << (c ? " " : "") << std::setw(5) << img[r * g.cols + c];
    os << '\n';
  }
  return os.str();
}

void BackdoorConfig::validate(std::size_t num_classes, std::size_t dim) const {
  trigger.validate(dim);
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= num_classes)
    throw PreconditionError("backdoor: target_class out of range");
  if (!(poison_fraction > 0.0 && poison_fraction <= 1.0))
    throw PreconditionError("backdoor: poison_fraction must be in (0, 1]");
  if (!(backdoor_lr_ratio > 0.0) || !std::isfinite(backdoor_lr_ratio))
    throw PreconditionError("backdoor: backdoor_lr_ratio must be > 0");
  if (reinforce_every < 1) throw PreconditionError("backdoor: reinforce_every must be >= 1");
}

void AdaptiveZestConfig::validate() const {
  if (masks_per_point < 1) throw PreconditionError("adaptive zest: masks_per_point must be >= 1");
  if (!(match_weight >= 0.0)) throw PreconditionError("adaptive zest: match_weight must be >= 0");
}

namespace {

using AfterPoison = std::function<void(std::vector<double>&)>;

nn::ModelWeights run_backdoor(const nn::ModelWeights& w, const LabeledDataset& data, const nn::SubRunSpec& spec,
                              const BackdoorConfig& attack, double lr_scale, const RngKey& key,
                              const AfterPoison& after_poison) {
  if (data.dim != w.arch().input_dim) throw DimensionError("malicious sub-run: dataset dim does not match model");
  attack.validate(w.arch().num_classes, data.dim);
  nn::MinibatchStream batches(data, spec, key);
  Rng attack_rng(key.with_stream(Stream::attack));
  const auto n_poison = static_cast<std::size_t>(std::floor(attack.poison_fraction * static_cast<double>(spec.batch_size) + 1e-9));
  std::vector<std::size_t> slots(spec.batch_size);
  std::vector<double> values(w.values().begin(), w.values().end());
  for (std::size_t step = 0; step < spec.steps; ++step) {
    auto batch = batches.next();
    const bool poisoned = n_poison > 0 && (step + 1) % attack.reinforce_every == 0;
    double lr = spec.learning_rate * lr_scale;
    if (poisoned) {
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      // Partial Fisher-Yates: the first n_poison slots are a uniform subset.
      for (std::size_t i = 0; i < n_poison; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(attack_rng.below(slots.size() - i));
        std::swap(slots[i], slots[j]);
      }
      for (std::size_t i = 0; i < n_poison; ++i) {
        auto row = batch.row(slots[i]);
        const auto triggered = apply_trigger(row, attack.trigger);
        std::copy(triggered.begin(), triggered.end(), row.begin());
        batch.labels[slots[i]] = attack.target_class;
      }
      lr *= attack.backdoor_lr_ratio;
    }
    const auto lg = nn::loss_and_grad(w.with_values(values), batch);
    nn::sgd_step(values, lg.grad, lr);
    if (poisoned && after_poison) after_poison(values);
  }
  return w.with_values(std::move(values));
}

}  // namespace

nn::ModelWeights malicious_subrun(const nn::ModelWeights& w, const LabeledDataset& data, const nn::SubRunSpec& spec,
                                  const BackdoorConfig& attack, const RngKey& key) {
  return run_backdoor(w, data, spec, attack, 1.0, key, nullptr);
}

AttackMetrics attack_success_rate(const nn::ModelWeights& w, const LabeledDataset& test, const TriggerSpec& trigger,
                                  int target_class) {
  if (test.empty()) throw PreconditionError("attack_success_rate: empty test set");
  AttackMetrics m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == target_class) continue;
    ++m.eligible;
    const auto z = nn::forward(w, apply_trigger(test.row(i), trigger));
    if (static_cast<int>(nn::argmax(z)) == target_class) ++hits;
  }
  if (m.eligible == 0) throw PreconditionError("attack_success_rate: no test point outside the target class");
  m.asr = static_cast<double>(hits) / static_cast<double>(m.eligible);
  m.clean_accuracy = nn::evaluate_accuracy(w, test);
  return m;
}

nn::ModelWeights adaptive_param_attack(const nn::ModelWeights& w, const LabeledDataset& data,
                                       const nn::SubRunSpec& spec, const BackdoorConfig& attack, double lr_scale,
                                       const RngKey& key) {
  if (!(lr_scale > 0.0 && lr_scale <= 1.0)) throw PreconditionError("adaptive param attack: lr_scale must be in (0, 1]");
  return run_backdoor(w, data, spec, attack, lr_scale, key, nullptr);
}

nn::ModelWeights adaptive_zest_attack(const nn::ModelWeights& w, const LabeledDataset& data,
                                      const nn::SubRunSpec& spec, const BackdoorConfig& attack,
                                      const AdaptiveZestConfig& zcfg, const ReferenceContext& reference,
                                      const RngKey& key) {
  zcfg.validate();
  reference.segment_map.validate();
  if (reference.segment_map.dim != data.dim) throw DimensionError("adaptive zest: segment map does not match data");
  if (reference.reference_points.empty()) throw PreconditionError("adaptive zest: no reference points");

  std::vector<std::vector<double>> points;
  if (zcfg.knows_reference_points) {
    points = reference.reference_points;
  } else {
    Rng pick(key.with_stream(Stream::attack).derive(1));
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    pick.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < reference.reference_points.size(); ++i) {
      auto r = data.row(idx[i % idx.size()]);
      points.emplace_back(r.begin(), r.end());
    }
  }

  // The surrogate is what a benign server would have returned.
  RngKey surrogate_key = key.derive(2);
  const auto surrogate = nn::train_subrun(w, data, zcfg.surrogate_spec, surrogate_key);

  // The adversary's sample budget: masks_per_point masked samples per point,
  // drawn once and matched after every poisoned step.
  Rng mask_rng(key.with_stream(Stream::attack).derive(3));
  const std::size_t classes = w.arch().num_classes;
  std::vector<std::uint8_t> mask(reference.segment_map.num_segments);
  std::vector<double> samples;  // row-major, one masked sample per row
  for (const auto& p : points)
    for (std::size_t m = 0; m < zcfg.masks_per_point; ++m) {
      for (auto& b : mask) b = mask_rng.bernoulli(0.5) ? 1 : 0;
      const auto x = dist::masked_sample(p, mask, reference.segment_map, reference.baseline);
      samples.insert(samples.end(), x.begin(), x.end());
    }
  const std::size_t count = samples.size() / data.dim;
  const auto wanted = nn::forward_rows(surrogate, samples, count);
  const double scale = 2.0 * zcfg.match_weight / static_cast<double>(count * classes);

  auto match = [&](std::vector<double>& values) {
    if (zcfg.match_weight == 0.0) return;
    for (std::size_t it = 0; it < zcfg.match_steps_per_round; ++it) {
      const auto grad = nn::rows_logit_grad(w.with_values(values), samples, count, [&](std::vector<double>& z) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = scale * (z[i] - wanted[i]);
      });
      nn::sgd_step(values, grad, spec.learning_rate);
    }
  };
  return run_backdoor(w, data, spec, attack, 1.0, key, match);
}

}  // namespace rttd::attacks
