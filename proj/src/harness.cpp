#include "rttd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>

#include "rttd/datasets.hpp"
#include "rttd/error.hpp"

namespace rttd::harness {

std::string_view to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::benign: return "benign";
    case BehaviorKind::backdoor: return "backdoor";
    case BehaviorKind::adaptive_param: return "adaptive_param";
    case BehaviorKind::adaptive_zest: return "adaptive_zest";
  }
  return "?";
}

BehaviorKind behavior_from_string(std::string_view s) {
  for (auto k : {BehaviorKind::benign, BehaviorKind::backdoor, BehaviorKind::adaptive_param, BehaviorKind::adaptive_zest})
    if (s == to_string(k)) return k;
  throw PreconditionError("unknown server behavior '" + std::string(s) + "'");
}

std::string_view to_string(PairGroup g) {
  switch (g) {
    case PairGroup::benign_benign: return "benign-benign";
    case PairGroup::benign_malicious: return "benign-malicious";
    case PairGroup::malicious_malicious: return "malicious-malicious";
  }
  return "?";
}

attacks::BackdoorConfig AttackSettings::resolve(std::size_t dim) const {
  attacks::BackdoorConfig c;
  c.trigger = attacks::make_trigger(trigger, dim);
  c.target_class = target_class;
  c.poison_fraction = poison_fraction;
  c.backdoor_lr_ratio = backdoor_lr_ratio;
  c.reinforce_every = reinforce_every;
  return c;
}

std::size_t ScenarioConfig::benign_servers() const {
  return static_cast<std::size_t>(
      std::count_if(servers.begin(), servers.end(), [](const ServerBehavior& s) { return !s.is_malicious(); }));
}

nn::SubRunSpec ScenarioConfig::subrun_spec(std::size_t subrun_index) const {
  nn::SubRunSpec s;
  s.steps = subrun_steps;
  s.learning_rate = subrun_eta && start_step && subrun_index * subrun_steps >= *start_step ? *subrun_eta : eta;
  s.batch_size = batch_size;
  s.start_step = subrun_index * subrun_steps;
  s.augment_noise_std = augment_noise_std;
  return s;
}

namespace {

std::size_t feature_dim(const DatasetSpec& d) {
  return d.family == DatasetFamily::tiny_images ? d.side * d.side : d.dim;
}

void validate_attack(const ServerBehavior& s, const ScenarioConfig& cfg, const std::string& where) {
  if (!s.is_malicious()) return;
  try {
    s.attack.resolve(feature_dim(cfg.dataset)).validate(cfg.dataset.num_classes, feature_dim(cfg.dataset));
    if (s.kind == BehaviorKind::adaptive_param && !(s.attack.lr_scale > 0.0 && s.attack.lr_scale <= 1.0))
      throw PreconditionError("lr_scale must be in (0, 1]");
    if (s.kind == BehaviorKind::adaptive_zest && s.attack.masks_per_point < 1)
      throw PreconditionError("masks_per_point must be >= 1");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ".attack", e.what());
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  const auto& d = dataset;
  if (d.num_classes < 2) throw ConfigError("dataset.num_classes", "must be >= 2");
  if (d.points_per_class < 1) throw ConfigError("dataset.points_per_class", "must be >= 1");
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) throw ConfigError("dataset.train_fraction", "must be in (0, 1)");
  if (d.family == DatasetFamily::tiny_images) {
    if (d.side < 4) throw ConfigError("dataset.side", "must be >= 4");
    if (d.grid < 1 || d.grid > d.side) throw ConfigError("dataset.grid", "must be in [1, side]");
  } else {
    if (d.dim < 1) throw ConfigError("dataset.dim", "must be >= 1");
    if (d.segments < 1 || d.segments > d.dim) throw ConfigError("dataset.segments", "must be in [1, dim]");
  }
  for (auto h : hidden_dims)
    if (h < 1) throw ConfigError("arch.hidden_dims", "widths must be >= 1");
  if (subrun_steps < 1) throw ConfigError("k", "must be >= 1");
  if (total_steps < subrun_steps) throw ConfigError("T", "must be >= k");
  if (total_steps % subrun_steps != 0) throw ConfigError("T", "must be a multiple of k");
  if (start_step) {
    if (*start_step % subrun_steps != 0) throw ConfigError("t", "must be a multiple of k");
    if (*start_step + subrun_steps > total_steps) throw ConfigError("t", "t + k must not exceed T");
  }
  if (replicated_subruns < 1 || replicated_subruns > num_subruns())
    throw ConfigError("m", "must be in [1, T / k]");
  if (!(eta > 0.0)) throw ConfigError("eta", "must be > 0");
  if (subrun_eta) {
    if (!(*subrun_eta > 0.0)) throw ConfigError("subrun_eta", "must be > 0");
    if (!start_step) throw ConfigError("subrun_eta", "needs t");
  }
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(augment_noise_std >= 0.0)) throw ConfigError("augment_noise_std", "must be >= 0");
  if (servers.empty()) throw ConfigError("servers", "at least one server is required");
  if (virtualize_replicas < 1) throw ConfigError("virtualize_replicas", "must be >= 1");
  if (num_models() < 3) throw ConfigError("servers", "need at least 3 models (servers x replicas)");
  std::set<int> ids;
  std::vector<attacks::TriggerParams> triggers;
  for (std::size_t i = 0; i < servers.size(); ++i) {
    const auto& s = servers[i];
    const std::string where = "servers[" + std::to_string(i) + "]";
    if (!ids.insert(s.server_id).second) throw ConfigError(where + ".id", "duplicate server id");
    if (s.server_id < 1) throw ConfigError(where + ".id", "must be >= 1");
    validate_attack(s, *this, where);
    if (s.is_malicious() && !collusion) {
      if (std::find(triggers.begin(), triggers.end(), s.attack.trigger) != triggers.end())
        throw ConfigError(where + ".attack.trigger", "malicious servers must use distinct triggers unless collusion is on");
      triggers.push_back(s.attack.trigger);
    }
  }
  if (primary_training_behavior) validate_attack(*primary_training_behavior, *this, "primary_training_behavior");
  try {
    detection.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("detection", e.what());
  }
  const std::size_t needed = detect::benign_count(detection.benign_fraction, num_models());
  if (needed < 2) throw ConfigError("detection.r", "ceil(r * n) must be at least 2");
  if (needed > benign_servers() * virtualize_replicas)
    throw ConfigError("detection.r", "ceil(r * n) = " + std::to_string(needed) + " exceeds the declared benign models (" +
                                         std::to_string(benign_servers() * virtualize_replicas) + ")");
  if (metric == dist::Metric::cka && hidden_dims.empty()) throw ConfigError("metric", "cka needs a hidden layer");
  if (probe.num_probe_points < 1 || probe.num_reference_points < 1)
    throw ConfigError("probe", "probe and reference point counts must be >= 1");
  const std::size_t segs = d.family == DatasetFamily::tiny_images ? d.grid * d.grid : d.segments;
  if (probe.masks_per_point < segs + 1) throw ConfigError("probe.masks_per_point", "must be at least S + 1");
  if (histogram_bins < 1) throw ConfigError("histogram_bins", "must be >= 1");
}

ScenarioData build_data(const ScenarioConfig& cfg) {
  const auto& d = cfg.dataset;
  ScenarioData out;
  LabeledDataset all;
  if (d.family == DatasetFamily::tiny_images) {
    datasets::TinyImageOptions opts;
    opts.grid = d.grid;
    opts.noise_std = d.noise_std;
    opts.max_shift = d.max_shift;
    auto [data, seg] = datasets::make_tiny_images(cfg.seed, d.num_classes, d.side, d.points_per_class, opts);
    all = std::move(data);
    out.segments = std::move(seg);
  } else {
    all = datasets::make_blobs(cfg.seed, d.num_classes, d.dim, d.points_per_class, d.spread);
    out.segments = datasets::contiguous_segments(d.dim, d.segments);
  }
  std::tie(out.train, out.test) = datasets::split(all, d.train_fraction, cfg.seed);
  out.arch.input_dim = all.dim;
  out.arch.hidden_dims = cfg.hidden_dims;
  out.arch.num_classes = d.num_classes;
  out.arch.activation = cfg.activation;
  out.arch.validate();
  return out;
}

dist::ProbeContext build_probe_context(const ScenarioConfig& cfg, const ScenarioData& data) {
  return dist::make_probe_context(data.test, data.segments, cfg.probe, cfg.probe_seed);
}

RngKey server_key(const ScenarioConfig& cfg, int server_id, std::size_t replica, std::size_t subrun_index) {
  RngKey k;
  k.scenario_seed = cfg.seed;
  k.server_id = server_slot(server_id, static_cast<std::int64_t>(replica));
  k.subrun_index = static_cast<std::int64_t>(subrun_index);
  k.stream = Stream::shuffle;
  return k;
}

nn::ModelWeights run_behavior(const ServerBehavior& behavior, const nn::ModelWeights& start, const ScenarioData& data,
                              const nn::SubRunSpec& spec, const dist::ProbeContext& ctx, const RngKey& key) {
  switch (behavior.kind) {
    case BehaviorKind::benign:
      return nn::train_subrun(start, data.train, spec, key);
    case BehaviorKind::backdoor:
      return attacks::malicious_subrun(start, data.train, spec, behavior.attack.resolve(data.train.dim), key);
    case BehaviorKind::adaptive_param:
      return attacks::adaptive_param_attack(start, data.train, spec, behavior.attack.resolve(data.train.dim),
                                            behavior.attack.lr_scale, key);
    case BehaviorKind::adaptive_zest: {
      attacks::AdaptiveZestConfig z;
      z.knows_reference_points = behavior.attack.knows_reference_points;
      z.surrogate_spec = spec;
      z.masks_per_point = behavior.attack.masks_per_point;
      z.match_weight = behavior.attack.match_weight;
      z.match_steps_per_round = behavior.attack.match_steps_per_round;
      attacks::ReferenceContext ref{ctx.reference_points, ctx.segment_map, ctx.baseline};
      return attacks::adaptive_zest_attack(start, data.train, spec, behavior.attack.resolve(data.train.dim), z, ref, key);
    }
  }
  throw PreconditionError("unknown behavior");
}

std::vector<Checkpoint> run_primary_training(const ScenarioConfig& cfg, const ScenarioData& data,
                                             const dist::ProbeContext& ctx) {
  cfg.validate();
  const auto& behavior = cfg.primary_training_behavior.value_or(cfg.servers.front());
  RngKey init_key{cfg.seed, 0, 0, Stream::init, 0};
  std::vector<Checkpoint> out;
  Checkpoint c{nn::init_weights(data.arch, init_key), 0, {}};
  c.metadata = {{"scenario_seed", std::to_string(cfg.seed)}, {"server", std::to_string(behavior.server_id)},
                {"subrun", "init"}};
  out.push_back(c);
  for (std::size_t s = 0; s < cfg.num_subruns(); ++s) {
    auto next = run_behavior(behavior, out.back().weights, data, cfg.subrun_spec(s), ctx,
                             server_key(cfg, behavior.server_id, 0, s));
    Checkpoint cp{std::move(next), (s + 1) * cfg.subrun_steps, {}};
    cp.metadata = {{"scenario_seed", std::to_string(cfg.seed)}, {"server", std::to_string(behavior.server_id)},
                   {"subrun", std::to_string(s)}};
    out.push_back(std::move(cp));
  }
  return out;
}

std::vector<ReplicaSlot> replica_slots(const ScenarioConfig& cfg) {
  std::vector<ReplicaSlot> slots;
  for (const auto& s : cfg.servers)
    for (std::size_t r = 0; r < cfg.virtualize_replicas; ++r) slots.push_back({s.server_id, r, s.kind});
  return slots;
}

std::vector<nn::ModelWeights> replicate_subrun(const nn::ModelWeights& start, const ScenarioConfig& cfg,
                                               std::size_t subrun_index, const ScenarioData& data,
                                               const dist::ProbeContext& ctx, bool parallel) {
  const auto slots = replica_slots(cfg);
  const auto spec = cfg.subrun_spec(subrun_index);
  std::vector<nn::ModelWeights> models(slots.size());
  std::vector<std::exception_ptr> errors(slots.size());
  // Colluding replicas beyond the first copy the first replica's model.
  auto copies = [&](std::size_t j) {
    return cfg.collusion && slots[j].replica > 0 && slots[j].kind != BehaviorKind::benign;
  };
  auto job = [&](std::size_t j) {
    if (copies(j)) return;
    try {
      const auto& behavior = cfg.servers[j / cfg.virtualize_replicas];
      models[j] = run_behavior(behavior, start, data, spec, ctx,
                               server_key(cfg, slots[j].server_id, slots[j].replica, subrun_index));
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };
  const auto count = static_cast<std::ptrdiff_t>(slots.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < count; ++j) job(static_cast<std::size_t>(j));
  } else {
    for (std::ptrdiff_t j = 0; j < count; ++j) job(static_cast<std::size_t>(j));
  }
  for (std::size_t j = 0; j < slots.size(); ++j) {
    if (errors[j]) {
      try {
        std::rethrow_exception(errors[j]);
      } catch (const std::exception& e) {
        throw PreconditionError("server " + std::to_string(slots[j].server_id) + " replica " +
                                std::to_string(slots[j].replica) + ": " + e.what());
      }
    }
    if (copies(j)) models[j] = models[j - slots[j].replica];
  }
  return models;
}

std::vector<std::size_t> choose_replicated_subruns(const ScenarioConfig& cfg) {
  const std::size_t total = cfg.num_subruns();
  std::vector<std::size_t> pool(total);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  if (cfg.start_step) {
    chosen.push_back(*cfg.start_step / cfg.subrun_steps);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen.front()));
  }
  Rng rng(RngKey{cfg.seed, 0, 0, Stream::shuffle, 0x5E1EC7ULL});
  rng.shuffle(std::span<std::size_t>(pool));
  for (std::size_t i = 0; chosen.size() < cfg.replicated_subruns; ++i) chosen.push_back(pool[i]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<HistogramRow> distance_histogram(const detect::DistanceMatrix& m, const std::vector<bool>& truth_benign,
                                             std::size_t bins) {
  if (truth_benign.size() != m.n) throw DimensionError("histogram: ground truth must label every model");
  if (bins < 1) throw PreconditionError("histogram: need at least one bin");
  const auto upper = m.upper_triangle();
  const double lo = *std::min_element(upper.begin(), upper.end());
  const double hi = *std::max_element(upper.begin(), upper.end());
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 0.0;
  std::vector<HistogramRow> rows;
  for (auto g : {PairGroup::benign_benign, PairGroup::benign_malicious, PairGroup::malicious_malicious})
    for (std::size_t b = 0; b < bins; ++b)
      rows.push_back({g, lo + width * static_cast<double>(b), b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1), 0});
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      const int benign = static_cast<int>(truth_benign[i]) + static_cast<int>(truth_benign[j]);
      const auto g = benign == 2 ? 0 : (benign == 1 ? 1 : 2);
      std::size_t b = width > 0.0 ? static_cast<std::size_t>((m.at(i, j) - lo) / width) : 0;
      b = std::min(b, bins - 1);
      ++rows[static_cast<std::size_t>(g) * bins + b].count;
    }
  }
  return rows;
}

ScenarioReport run_scenario(const ScenarioConfig& cfg, bool parallel) {
  cfg.validate();
  ScenarioReport rep;
  rep.config = cfg;
  const auto data = build_data(cfg);
  const auto ctx = build_probe_context(cfg, data);
  const auto checkpoints = run_primary_training(cfg, data, ctx);
  for (const auto& c : checkpoints) rep.checkpoint_test_accuracy.push_back(nn::evaluate_accuracy(c.weights, data.test));

  const auto slots = replica_slots(cfg);
  std::vector<bool> truth;
  std::vector<int> groups;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    truth.push_back(slots[j].kind == BehaviorKind::benign);
    groups.push_back(static_cast<int>(j / cfg.virtualize_replicas));
  }
  if (cfg.virtualize_replicas == 1) groups.clear();

  std::size_t correct = 0, total = 0;
  for (auto idx : choose_replicated_subruns(cfg)) {
    SubrunResult sr;
    sr.subrun_index = idx;
    sr.start_step = idx * cfg.subrun_steps;
    sr.models = replicate_subrun(checkpoints[idx].weights, cfg, idx, data, ctx, parallel);
    const auto matrix = detect::pairwise_distances(sr.models, cfg.metric, ctx);
    sr.detection = detect::detect_all(matrix, cfg.detection, truth, groups);
    sr.server_verdicts = detect::group_verdicts(sr.detection);
    sr.histogram = distance_histogram(matrix, truth, cfg.histogram_bins);
    for (std::size_t j = 0; j < slots.size(); ++j) {
      ServerOutcome o;
      o.slot = slots[j];
      o.truth_benign = truth[j];
      o.clean_accuracy = nn::evaluate_accuracy(sr.models[j], data.test);
      if (!truth[j]) {
        const auto& atk = cfg.servers[j / cfg.virtualize_replicas].attack;
        o.attack = attacks::attack_success_rate(sr.models[j], data.test, attacks::make_trigger(atk.trigger, data.test.dim),
                                                atk.target_class);
      }
      sr.outcomes.push_back(std::move(o));
      if (sr.detection.verdicts[j].is_benign == truth[j]) ++correct;
      ++total;
    }
    rep.subruns.push_back(std::move(sr));
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return rep;
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::k: return "k";
    case SweepAxis::t: return "t";
    case SweepAxis::eta: return "eta";
    case SweepAxis::n: return "n";
    case SweepAxis::r: return "r";
    case SweepAxis::asr: return "asr";
    case SweepAxis::metric: return "metric";
    case SweepAxis::masks_per_point: return "masks_per_point";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  for (auto a : {SweepAxis::k, SweepAxis::t, SweepAxis::eta, SweepAxis::n, SweepAxis::r, SweepAxis::asr,
                 SweepAxis::metric, SweepAxis::masks_per_point})
    if (s == to_string(a)) return a;
  throw ConfigError("axis", "unknown sweep axis '" + std::string(s) + "'");
}

namespace {

double parse_real(const std::string& v, const std::string& axis) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) throw ConfigError("sweep." + axis, "bad value '" + v + "'");
  return out;
}

std::size_t parse_count(const std::string& v, const std::string& axis) {
  const double x = parse_real(v, axis);
  if (x < 0.0 || std::floor(x) != x) throw ConfigError("sweep." + axis, "expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

std::vector<ServerBehavior> split_roster(const ScenarioConfig& cfg, bool malicious) {
  std::vector<ServerBehavior> out;
  for (const auto& s : cfg.servers)
    if (s.is_malicious() == malicious) out.push_back(s);
  return out;
}

}  // namespace

ScenarioConfig apply_axis(const ScenarioConfig& base, SweepAxis axis, const std::string& value) {
  ScenarioConfig cfg = base;
  const std::string name(to_string(axis));
  switch (axis) {
    case SweepAxis::k: {
      const auto k = parse_count(value, name);
      if (k < 1) throw ConfigError("sweep.k", "must be >= 1");
      cfg.subrun_steps = k;
      cfg.total_steps = (base.total_steps + k - 1) / k * k;
      if (cfg.start_step) cfg.start_step = *base.start_step / k * k;
      break;
    }
    case SweepAxis::t:
      cfg.start_step = parse_count(value, name);
      break;
    case SweepAxis::eta:
      // with t fixed only the tested sub-run changes, so every point shares W_t
      if (cfg.start_step)
        cfg.subrun_eta = parse_real(value, name);
      else
        cfg.eta = parse_real(value, name);
      break;
    case SweepAxis::n:
    case SweepAxis::r: {
      const std::size_t n = axis == SweepAxis::n ? parse_count(value, name) : base.servers.size();
      if (axis == SweepAxis::r) cfg.detection.benign_fraction = parse_real(value, name);
      if (n < 3) throw ConfigError("sweep.n", "need at least 3 servers");
      const std::size_t benign = std::min(n, detect::benign_count(cfg.detection.benign_fraction, n));
      auto attackers = split_roster(base, true);
      if (attackers.empty()) attackers = presets::default_attackers();
      cfg.servers = presets::roster(benign, n - benign, attackers);
      break;
    }
    case SweepAxis::asr: {
      const double f = parse_real(value, name);
      for (auto& s : cfg.servers)
        if (s.is_malicious()) s.attack.poison_fraction = f;
      break;
    }
    case SweepAxis::metric:
      try {
        cfg.metric = dist::metric_from_string(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("sweep.metric", e.what());
      }
      break;
    case SweepAxis::masks_per_point: {
      const auto mp = parse_count(value, name);
      for (auto& s : cfg.servers)
        if (s.kind == BehaviorKind::adaptive_zest) s.attack.masks_per_point = mp;
      break;
    }
  }
  cfg.validate();
  return cfg;
}

std::vector<ScenarioReport> sweep(const ScenarioConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                                  bool parallel) {
  if (values.empty()) throw ConfigError("sweep.values", "no values given");
  std::vector<ScenarioConfig> cfgs;
  for (const auto& v : values) cfgs.push_back(apply_axis(base, axis, v));
  std::vector<ScenarioReport> out;
  for (const auto& c : cfgs) out.push_back(run_scenario(c, parallel));
  return out;
}

}  // namespace rttd::harness

namespace rttd::harness::presets {

namespace {

ServerBehavior attacker(int id, attacks::TriggerKind kind, std::size_t size, int corner, int target, double magnitude) {
  ServerBehavior s;
  s.server_id = id;
  s.kind = BehaviorKind::backdoor;
  s.attack.trigger.kind = kind;
  s.attack.trigger.side = 8;
  s.attack.trigger.size = size;
  s.attack.trigger.corner = corner;
  s.attack.trigger.magnitude = magnitude;
  s.attack.target_class = target;
  return s;
}

ScenarioConfig base(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.total_steps = 1000;
  cfg.subrun_steps = 125;  // 5 epochs of 800 training points at batch 32
  cfg.start_step = 500;
  return cfg;
}

}  // namespace

std::vector<ServerBehavior> default_attackers() {
  using attacks::TriggerKind;
  std::vector<ServerBehavior> out;
  out.push_back(attacker(0, TriggerKind::corner_patch, 2, 3, 0, 2.0));
  out.push_back(attacker(0, TriggerKind::corner_patch, 2, 0, 1, 2.0));
  auto stripe = attacker(0, TriggerKind::stripe, 1, 0, 2, 2.0);
  stripe.attack.trigger.line = 0;
  out.push_back(stripe);
  auto vstripe = attacker(0, TriggerKind::stripe, 1, 0, 3, 2.0);
  vstripe.attack.trigger.line = 7;
  vstripe.attack.trigger.vertical = true;
  out.push_back(vstripe);
  out.push_back(attacker(0, TriggerKind::flag, 3, 1, 0, 2.0));
  auto blend = attacker(0, TriggerKind::blend_noise, 0, 0, 1, 2.0);
  blend.attack.trigger.alpha = 0.3;
  blend.attack.trigger.seed = 11;
  out.push_back(blend);
  auto quiet1 = attacker(0, TriggerKind::random_pattern, 3, 2, 2, 2.0);
  quiet1.attack.trigger.seed = 21;
  quiet1.attack.backdoor_lr_ratio = 0.2;
  out.push_back(quiet1);
  auto quiet2 = attacker(0, TriggerKind::random_pattern, 3, 3, 3, 2.0);
  quiet2.attack.trigger.seed = 22;
  quiet2.attack.backdoor_lr_ratio = 0.2;
  out.push_back(quiet2);
  return out;
}

std::vector<ServerBehavior> roster(std::size_t benign, std::size_t malicious,
                                   const std::vector<ServerBehavior>& templates) {
  if (malicious > 0 && templates.empty()) throw ConfigError("servers", "no attacker templates to draw from");
  std::vector<ServerBehavior> out;
  int id = 1;
  for (std::size_t i = 0; i < benign; ++i) {
    ServerBehavior s;
    s.server_id = id++;
    out.push_back(s);
  }
  for (std::size_t i = 0; i < malicious; ++i) {
    ServerBehavior s = templates[i % templates.size()];
    s.server_id = id++;
    // Repeated templates get a fresh pattern seed and a different target.
    if (const auto round = i / templates.size(); round > 0) {
      s.attack.trigger.seed += 1000 * round;
      if (s.attack.trigger.kind != attacks::TriggerKind::blend_noise &&
          s.attack.trigger.kind != attacks::TriggerKind::random_pattern)
        s.attack.trigger.magnitude += static_cast<double>(round) * 0.25;
    }
    out.push_back(s);
  }
  return out;
}

ScenarioConfig default_scenario(std::uint64_t seed) {
  auto cfg = base(seed);
  cfg.servers = roster(8, 8, default_attackers());
  return cfg;
}

ScenarioConfig all_benign(std::uint64_t seed) {
  auto cfg = base(seed);
  // With more benign servers than ceil(r n) the cluster is a thin slice of the
  // benign distances, so the all-benign run keeps every server in the cluster.
  cfg.servers = roster(8, 0, {});
  cfg.detection.benign_fraction = 1.0;
  return cfg;
}

ScenarioConfig backdoored_before(std::uint64_t seed) {
  auto cfg = all_benign(seed);
  auto primary = default_attackers().front();
  primary.server_id = 1;
  cfg.primary_training_behavior = primary;
  return cfg;
}

ScenarioConfig five_server_mad(std::uint64_t seed) {
  auto cfg = base(seed);
  cfg.servers = roster(3, 2, default_attackers());
  cfg.detection.benign_fraction = 0.6;
  cfg.detection.fallback = detect::Fallback::mad;
  return cfg;
}

ScenarioConfig virtualized(std::uint64_t seed) {
  auto cfg = base(seed);
  cfg.servers = roster(2, 1, default_attackers());
  cfg.virtualize_replicas = 5;
  cfg.collusion = true;
  cfg.detection.benign_fraction = 2.0 / 3.0;  // exactly the 10 benign replicas
  return cfg;
}

}  // namespace rttd::harness::presets
