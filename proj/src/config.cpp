#include "rttd/config.hpp"

#include <json.hpp>
#include <set>

#include "rttd/checkpoint.hpp"
#include "rttd/error.hpp"

namespace rttd::config {

using json = nlohmann::ordered_json;
using harness::AttackSettings;
using harness::BehaviorKind;
using harness::ScenarioConfig;
using harness::ServerBehavior;

namespace {

// Cursor into the document that remembers where it is for error messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return j_; }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(child_path(k), "unknown key");
  }
  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  Node at(const char* key) const { return {j_.at(key), child_path(key)}; }
  Node at(std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_, what); }

  double real() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }
  std::size_t count() const {
    if (!j_.is_number_integer() || j_.get<std::int64_t>() < 0) fail("expected a nonnegative integer");
    return j_.get<std::size_t>();
  }
  std::int64_t integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<std::int64_t>();
  }
  std::uint64_t u64() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<std::int64_t>() >= 0))
      fail("expected a nonnegative integer");
    return j_.get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string str() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  template <class F>
  auto parse_enum(F&& from_string) const {
    const auto s = str();
    try {
      return from_string(s);
    } catch (const std::exception&) {
      fail("unknown value '" + s + "'");
    }
  }

 private:
  std::string child_path(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  const json& j_;
  std::string path_;
};

template <class T, class F>
void opt(const Node& n, const char* key, T& out, F&& get) {
  if (n.has(key)) out = get(n.at(key));
}

const auto as_real = [](const Node& n) { return n.real(); };
const auto as_count = [](const Node& n) { return n.count(); };
const auto as_bool = [](const Node& n) { return n.boolean(); };
const auto as_u64 = [](const Node& n) { return n.u64(); };
const auto as_int = [](const Node& n) { return static_cast<int>(n.integer()); };

void read_trigger(const Node& n, attacks::TriggerParams& t) {
  n.expect_object({"kind", "side", "size", "corner", "line", "vertical", "magnitude", "alpha", "seed"});
  if (n.has("kind")) t.kind = n.at("kind").parse_enum(attacks::trigger_kind_from_string);
  opt(n, "side", t.side, as_count);
  opt(n, "size", t.size, as_count);
  opt(n, "corner", t.corner, as_int);
  opt(n, "line", t.line, as_count);
  opt(n, "vertical", t.vertical, as_bool);
  opt(n, "magnitude", t.magnitude, as_real);
  opt(n, "alpha", t.alpha, as_real);
  opt(n, "seed", t.seed, as_u64);
}

void read_attack(const Node& n, AttackSettings& a) {
  n.expect_object({"trigger", "target_class", "poison_fraction", "backdoor_lr_ratio", "reinforce_every", "lr_scale",
                   "knows_reference_points", "masks_per_point", "match_weight", "match_steps_per_round"});
  if (n.has("trigger")) read_trigger(n.at("trigger"), a.trigger);
  opt(n, "target_class", a.target_class, as_int);
  opt(n, "poison_fraction", a.poison_fraction, as_real);
  opt(n, "backdoor_lr_ratio", a.backdoor_lr_ratio, as_real);
  opt(n, "reinforce_every", a.reinforce_every, as_count);
  opt(n, "lr_scale", a.lr_scale, as_real);
  opt(n, "knows_reference_points", a.knows_reference_points, as_bool);
  opt(n, "masks_per_point", a.masks_per_point, as_count);
  opt(n, "match_weight", a.match_weight, as_real);
  opt(n, "match_steps_per_round", a.match_steps_per_round, as_count);
}

ServerBehavior read_server(const Node& n) {
  n.expect_object({"id", "behavior", "attack"});
  ServerBehavior s;
  if (!n.has("id")) n.fail("missing key 'id'");
  s.server_id = as_int(n.at("id"));
  if (n.has("behavior")) s.kind = n.at("behavior").parse_enum(harness::behavior_from_string);
  if (n.has("attack")) {
    if (!s.is_malicious()) n.at("attack").fail("benign servers take no attack settings");
    read_attack(n.at("attack"), s.attack);
  }
  return s;
}

void read_dataset(const Node& n, harness::DatasetSpec& d) {
  n.expect_object({"family", "num_classes", "points_per_class", "train_fraction", "side", "grid", "noise_std",
                   "max_shift", "dim", "spread", "segments"});
  if (n.has("family")) {
    const auto s = n.at("family").str();
    if (s == "tiny_images") d.family = harness::DatasetFamily::tiny_images;
    else if (s == "blobs") d.family = harness::DatasetFamily::blobs;
    else n.at("family").fail("unknown value '" + s + "'");
  }
  opt(n, "num_classes", d.num_classes, as_count);
  opt(n, "points_per_class", d.points_per_class, as_count);
  opt(n, "train_fraction", d.train_fraction, as_real);
  opt(n, "side", d.side, as_count);
  opt(n, "grid", d.grid, as_count);
  opt(n, "noise_std", d.noise_std, as_real);
  opt(n, "max_shift", d.max_shift, as_int);
  opt(n, "dim", d.dim, as_count);
  opt(n, "spread", d.spread, as_real);
  opt(n, "segments", d.segments, as_count);
}

ScenarioConfig read_scenario(const Node& root) {
  root.expect_object({"seed", "dataset", "arch", "training", "servers", "primary_training_behavior", "metric", "probe",
                      "detection", "virtualize_replicas", "collusion", "histogram_bins"});
  ScenarioConfig cfg;
  opt(root, "seed", cfg.seed, as_u64);
  if (root.has("dataset")) read_dataset(root.at("dataset"), cfg.dataset);
  if (root.has("arch")) {
    const auto a = root.at("arch");
    a.expect_object({"hidden", "activation"});
    if (a.has("hidden")) {
      const auto h = a.at("hidden");
      if (!h.raw().is_array()) h.fail("expected an array");
      cfg.hidden_dims.clear();
      for (std::size_t i = 0; i < h.raw().size(); ++i) cfg.hidden_dims.push_back(h.at(i).count());
    }
    if (a.has("activation")) cfg.activation = a.at("activation").parse_enum(nn::activation_from_string);
  }
  if (root.has("training")) {
    const auto t = root.at("training");
    t.expect_object({"T", "k", "t", "m", "eta", "subrun_eta", "batch_size", "augment_noise_std"});
    opt(t, "T", cfg.total_steps, as_count);
    opt(t, "k", cfg.subrun_steps, as_count);
    if (t.raw().contains("t")) cfg.start_step = t.has("t") ? std::optional(t.at("t").count()) : std::nullopt;
    opt(t, "m", cfg.replicated_subruns, as_count);
    opt(t, "eta", cfg.eta, as_real);
    if (t.has("subrun_eta")) cfg.subrun_eta = t.at("subrun_eta").real();
    opt(t, "batch_size", cfg.batch_size, as_count);
    opt(t, "augment_noise_std", cfg.augment_noise_std, as_real);
  }
  if (!root.has("servers")) root.fail("missing key 'servers'");
  const auto servers = root.at("servers");
  if (!servers.raw().is_array()) servers.fail("expected an array");
  for (std::size_t i = 0; i < servers.raw().size(); ++i) cfg.servers.push_back(read_server(servers.at(i)));
  if (root.has("primary_training_behavior"))
    cfg.primary_training_behavior = read_server(root.at("primary_training_behavior"));
  if (root.has("metric")) cfg.metric = root.at("metric").parse_enum(dist::metric_from_string);
  if (root.has("probe")) {
    const auto p = root.at("probe");
    p.expect_object({"probe_points", "reference_points", "masks_per_point", "ridge_lambda", "baseline", "seed"});
    opt(p, "probe_points", cfg.probe.num_probe_points, as_count);
    opt(p, "reference_points", cfg.probe.num_reference_points, as_count);
    opt(p, "masks_per_point", cfg.probe.masks_per_point, as_count);
    opt(p, "ridge_lambda", cfg.probe.ridge_lambda, as_real);
    opt(p, "baseline", cfg.probe.baseline, as_real);
    opt(p, "seed", cfg.probe_seed, as_u64);
  }
  if (root.has("detection")) {
    const auto d = root.at("detection");
    d.expect_object({"r", "alpha", "fallback", "mad_quartile"});
    opt(d, "r", cfg.detection.benign_fraction, as_real);
    opt(d, "alpha", cfg.detection.significance, as_real);
    if (d.has("fallback")) cfg.detection.fallback = d.at("fallback").parse_enum(detect::fallback_from_string);
    opt(d, "mad_quartile", cfg.detection.mad_quartile, as_real);
  }
  opt(root, "virtualize_replicas", cfg.virtualize_replicas, as_count);
  opt(root, "collusion", cfg.collusion, as_bool);
  opt(root, "histogram_bins", cfg.histogram_bins, as_count);
  return cfg;
}

json write_server(const ServerBehavior& s) {
  json j{{"id", s.server_id}, {"behavior", harness::to_string(s.kind)}};
  if (s.is_malicious()) {
    const auto& a = s.attack;
    const auto& t = a.trigger;
    j["attack"] = json{
        {"trigger",
         {{"kind", attacks::to_string(t.kind)}, {"side", t.side}, {"size", t.size}, {"corner", t.corner},
          {"line", t.line}, {"vertical", t.vertical}, {"magnitude", t.magnitude}, {"alpha", t.alpha},
          {"seed", t.seed}}},
        {"target_class", a.target_class},
        {"poison_fraction", a.poison_fraction},
        {"backdoor_lr_ratio", a.backdoor_lr_ratio},
        {"reinforce_every", a.reinforce_every},
        {"lr_scale", a.lr_scale},
        {"knows_reference_points", a.knows_reference_points},
        {"masks_per_point", a.masks_per_point},
        {"match_weight", a.match_weight},
        {"match_steps_per_round", a.match_steps_per_round}};
  }
  return j;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("line " + std::to_string(e.byte), e.what());
  }
  auto cfg = read_scenario(Node(doc, ""));
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(path.string(), e.what());
  }
  try {
    return parse_scenario(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.where(), e.detail());
  }
}

std::string dump_scenario(const ScenarioConfig& cfg) {
  const auto& d = cfg.dataset;
  json j;
  j["seed"] = cfg.seed;
  j["dataset"] = {{"family", d.family == harness::DatasetFamily::tiny_images ? "tiny_images" : "blobs"},
                  {"num_classes", d.num_classes},
                  {"points_per_class", d.points_per_class},
                  {"train_fraction", d.train_fraction},
                  {"side", d.side},
                  {"grid", d.grid},
                  {"noise_std", d.noise_std},
                  {"max_shift", d.max_shift},
                  {"dim", d.dim},
                  {"spread", d.spread},
                  {"segments", d.segments}};
  j["arch"] = {{"hidden", cfg.hidden_dims}, {"activation", nn::to_string(cfg.activation)}};
  j["training"] = {{"T", cfg.total_steps},
                   {"k", cfg.subrun_steps},
                   {"t", cfg.start_step ? json(*cfg.start_step) : json(nullptr)},
                   {"m", cfg.replicated_subruns},
                   {"eta", cfg.eta},
                   {"subrun_eta", cfg.subrun_eta ? json(*cfg.subrun_eta) : json(nullptr)},
                   {"batch_size", cfg.batch_size},
                   {"augment_noise_std", cfg.augment_noise_std}};
  j["servers"] = json::array();
  for (const auto& s : cfg.servers) j["servers"].push_back(write_server(s));
  if (cfg.primary_training_behavior) j["primary_training_behavior"] = write_server(*cfg.primary_training_behavior);
  j["metric"] = dist::to_string(cfg.metric);
  j["probe"] = {{"probe_points", cfg.probe.num_probe_points},
                {"reference_points", cfg.probe.num_reference_points},
                {"masks_per_point", cfg.probe.masks_per_point},
                {"ridge_lambda", cfg.probe.ridge_lambda},
                {"baseline", cfg.probe.baseline},
                {"seed", cfg.probe_seed}};
  j["detection"] = {{"r", cfg.detection.benign_fraction},
                    {"alpha", cfg.detection.significance},
                    {"fallback", detect::to_string(cfg.detection.fallback)},
                    {"mad_quartile", cfg.detection.mad_quartile}};
  j["virtualize_replicas"] = cfg.virtualize_replicas;
  j["collusion"] = cfg.collusion;
  j["histogram_bins"] = cfg.histogram_bins;
  return j.dump(2) + "\n";
}

}  // namespace rttd::config
