#include "rttd/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "rttd/checkpoint.hpp"
#include "rttd/config.hpp"
#include "rttd/datasets.hpp"
#include "rttd/error.hpp"
#include "rttd/report.hpp"

namespace rttd::cli {

namespace fs = std::filesystem;
using report::json;

void apply_thread_limit() {
  const char* env = std::getenv("RTTD_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0) {
    std::cerr << "warning: ignoring RTTD_THREADS='" << env << "'\n";
    return;
  }
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string model_label(const harness::ServerOutcome& o, std::size_t replicas) {
  std::string s = "s" + std::to_string(o.slot.server_id);
  if (replicas > 1) s += "." + std::to_string(o.slot.replica);
  return s;
}

bool any_malicious(const harness::ScenarioReport& r) {
  return std::any_of(r.subruns.begin(), r.subruns.end(),
                     [](const harness::SubrunResult& s) { return s.detection.any_malicious(); });
}

void write_scenario_outputs(const harness::ScenarioReport& rep, const fs::path& dir) {
  const auto& cfg = rep.config;
  fs::create_directories(dir);
  write_file(dir / "report.json", report::scenario_to_json(rep).dump(2) + "\n");
  const auto data = harness::build_data(cfg);
  datasets::save_dataset(dir / "probe_data.json", data.test, data.segments);
  for (const auto& s : rep.subruns) {
    const auto tag = "subrun_" + std::to_string(s.subrun_index);
    write_file(dir / ("histogram_" + tag + ".csv"), report::histogram_csv(cfg.metric, s.histogram));
    const auto ckdir = dir / "checkpoints" / tag;
    fs::create_directories(ckdir);
    for (std::size_t j = 0; j < s.models.size(); ++j) {
      char name[64];
      std::snprintf(name, sizeof name, "model_%03zu_%s.ckpt", j, model_label(s.outcomes[j], cfg.virtualize_replicas).c_str());
      Checkpoint c{s.models[j], s.start_step + cfg.subrun_steps,
                   {{"server", std::to_string(s.outcomes[j].slot.server_id)},
                    {"replica", std::to_string(s.outcomes[j].slot.replica)},
                    {"scenario_seed", std::to_string(cfg.seed)},
                    {"subrun", std::to_string(s.subrun_index)}}};
      save_checkpoint(ckdir / name, c);
    }
  }
}

struct ScenarioFlags {
  std::string config;
  std::string out = "rttd_out";
  std::optional<std::uint64_t> seed;
  std::string metric;
  bool json = false;
  bool serial = false;
};

harness::ScenarioConfig load_with_overrides(const ScenarioFlags& f) {
  auto cfg = config::load_scenario(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.metric.empty()) {
    try {
      cfg.metric = dist::metric_from_string(f.metric);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("--metric", e.what());
    }
  }
  cfg.validate();
  return cfg;
}

int cmd_scenario_run(const ScenarioFlags& f, std::ostream& out) {
  const auto cfg = load_with_overrides(f);
  const auto rep = harness::run_scenario(cfg, !f.serial);
  write_scenario_outputs(rep, f.out);
  if (f.json)
    out << report::scenario_to_json(rep).dump(2) << '\n';
  else
    out << report::scenario_summary(rep) << "outputs written to " << f.out << '\n';
  return any_malicious(rep) ? malicious_found : ok;
}

int cmd_sweep(const ScenarioFlags& f, const std::string& axis_name, const std::vector<std::string>& values,
              std::ostream& out) {
  const auto cfg = load_with_overrides(f);
  const auto axis = harness::sweep_axis_from_string(axis_name);
  const auto reports = harness::sweep(cfg, axis, values, !f.serial);
  json all = json::array();
  fs::create_directories(f.out);
  if (!f.json) out << axis_name << "        accuracy  var(bb)       var(bm)       var(mm)\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& rep = reports[i];
    json j{{"axis", axis_name}, {"value", values[i]}, {"report", report::scenario_to_json(rep)}};
    all.push_back(j);
    const auto& s = rep.subruns.front();
    for (const auto& sub : rep.subruns)
      write_file(fs::path(f.out) / ("histogram_" + axis_name + "_" + values[i] + "_subrun_" +
                                    std::to_string(sub.subrun_index) + ".csv"),
                 report::histogram_csv(rep.config.metric, sub.histogram));
    if (!f.json) {
      // Per-group variance of the first replicated sub-run.
      double var[3] = {0, 0, 0};
      std::vector<double> groups[3];
      const auto& m = s.detection.matrix;
      for (std::size_t a = 0; a < m.n; ++a)
        for (std::size_t b = a + 1; b < m.n; ++b)
          groups[2 - s.outcomes[a].truth_benign - s.outcomes[b].truth_benign].push_back(m.at(a, b));
      for (int g = 0; g < 3; ++g)
        var[g] = groups[g].size() > 1 ? stats::sample_variance(groups[g]) : 0.0;
      char line[200];
      std::snprintf(line, sizeof line, "%-12s %8.4f  %.6e  %.6e  %.6e\n", values[i].c_str(), rep.accuracy, var[0],
                    var[1], var[2]);
      out << line;
    }
  }
  write_file(fs::path(f.out) / ("sweep_" + axis_name + ".json"), all.dump(2) + "\n");
  if (f.json) out << all.dump(2) << '\n';
  return ok;
}

struct ProbeFlags {
  std::string data;
  std::uint64_t probe_seed = 7;
  dist::ProbeOptions opts;
};

void add_probe_flags(CLI::App* c, ProbeFlags& p) {
  c->add_option("--data", p.data, "dataset file (JSON with segment map) to draw probe points from");
  c->add_option("--probe-seed", p.probe_seed, "seed for probe points and masks")->capture_default_str();
  c->add_option("--probe-points", p.opts.num_probe_points)->capture_default_str();
  c->add_option("--reference-points", p.opts.num_reference_points)->capture_default_str();
  c->add_option("--masks-per-point", p.opts.masks_per_point)->capture_default_str();
  c->add_option("--ridge-lambda", p.opts.ridge_lambda)->capture_default_str();
}

dist::ProbeContext probe_from_flags(const ProbeFlags& p, dist::Metric metric) {
  if (p.data.empty()) {
    if (metric == dist::Metric::parameter) return {};
    throw CLI::RequiredError("--data (metric " + std::string(dist::to_string(metric)) + " needs probe points)");
  }
  auto [data, seg] = datasets::load_dataset_file(p.data);
  if (!seg) seg = datasets::contiguous_segments(data.dim, std::min<std::size_t>(8, data.dim));
  auto opts = p.opts;
  return dist::make_probe_context(data, *seg, opts, p.probe_seed);
}

std::vector<nn::ModelWeights> load_models(const std::vector<std::string>& paths) {
  std::vector<nn::ModelWeights> models;
  for (const auto& path : paths) {
    try {
      models.push_back(load_checkpoint(path).weights);
    } catch (const std::exception& e) {
      throw ConfigError(path, e.what());
    }
    if (models.back().arch() != models.front().arch())
      throw ConfigError(path, "architecture " + models.back().arch().describe() + " differs from " +
                                  models.front().arch().describe());
  }
  return models;
}

int cmd_detect(const std::vector<std::string>& paths, const detect::DetectionConfig& dcfg, const std::string& metric_name,
               const ProbeFlags& pf, bool as_json, std::ostream& out) {
  if (paths.size() < 3) throw CLI::ValidationError("detect", "need at least 3 checkpoints");
  const auto metric = dist::metric_from_string(metric_name);
  try {
    dcfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("detection", e.what());
  }
  const auto models = load_models(paths);
  if (detect::benign_count(dcfg.benign_fraction, models.size()) < 2)
    throw ConfigError("--r", "ceil(r * n) must be at least 2");
  const auto ctx = probe_from_flags(pf, metric);
  const auto matrix = detect::pairwise_distances(models, metric, ctx);
  const auto rep = detect::detect_all(matrix, dcfg);
  if (as_json) {
    out << report::detection_to_json(rep).dump(2) << '\n';
  } else {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < paths.size(); ++i) labels.push_back("m" + std::to_string(i));
    for (std::size_t i = 0; i < paths.size(); ++i) out << labels[i] << " = " << paths[i] << '\n';
    out << report::matrix_table(matrix, labels) << '\n' << report::verdict_table(rep, labels);
  }
  return rep.any_malicious() ? malicious_found : ok;
}

int cmd_cost(std::size_t n, std::size_t m, std::size_t k, std::size_t T, const std::string& metric_name,
             double probe_batches, std::optional<double> price, bool as_json, std::ostream& out) {
  const auto metric = dist::metric_from_string(metric_name);
  const auto c = detect::cost_overhead(n, m, k, metric, probe_batches, T, price);
  const double p = detect::detection_probability(m, k, T);
  if (as_json) {
    json j{{"replication_steps", c.replication_steps},
           {"distance_step_equivalents", c.distance_step_equivalents},
           {"replication_fraction_of_T", c.replication_fraction_of_T},
           {"fraction_of_T", c.fraction_of_T},
           {"detection_probability", p}};
    j["money"] = c.money ? json(*c.money) : json(nullptr);
    out << j.dump(2) << '\n';
    return ok;
  }
  out << "replication steps          " << format_double(c.replication_steps) << '\n'
      << "distance step-equivalents  " << format_double(c.distance_step_equivalents) << '\n'
      << "replication / T            " << format_double(c.replication_fraction_of_T) << '\n'
      << "total overhead / T         " << format_double(c.fraction_of_T) << '\n';
  if (c.money) out << "money                      " << format_double(*c.money) << '\n';
  out << "detection probability      " << fixed(p, 4) << '\n';
  return ok;
}

int run_impl(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"rttd: replicated sub-run backdoor detection simulator"};
  app.require_subcommand(1);

  ScenarioFlags sf;
  auto add_scenario_flags = [&sf](CLI::App* c) {
    c->add_option("config", sf.config, "scenario JSON file")->required();
    c->add_option("--out", sf.out, "output directory")->capture_default_str();
    c->add_option("--seed", sf.seed, "override the scenario seed");
    c->add_option("--metric", sf.metric, "override the metric (parameter, output, zest, cka)");
    c->add_flag("--json", sf.json, "print the machine-readable report");
    c->add_flag("--serial", sf.serial, "run servers one after another");
  };

  auto* scenario = app.add_subcommand("scenario", "run a scenario");
  scenario->require_subcommand(1);
  auto* scenario_run = scenario->add_subcommand("run", "run one scenario file");
  add_scenario_flags(scenario_run);

  auto* sweep_cmd = app.add_subcommand("sweep", "run a scenario once per value of one axis");
  add_scenario_flags(sweep_cmd);
  std::string axis;
  std::vector<std::string> values;
  sweep_cmd->add_option("--axis", axis, "k, t, eta, n, r, asr, metric or masks_per_point")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

  auto* detect_cmd = app.add_subcommand("detect", "detect malicious models among saved checkpoints");
  std::vector<std::string> paths;
  detect::DetectionConfig dcfg;
  std::string metric = "zest";
  std::string fallback = "ks";
  ProbeFlags pf;
  bool as_json = false;
  detect_cmd->add_option("checkpoints", paths, "checkpoint files")->required();
  detect_cmd->add_option("--r", dcfg.benign_fraction, "lower bound on the benign fraction")->capture_default_str();
  detect_cmd->add_option("--metric", metric)->capture_default_str();
  detect_cmd->add_option("--alpha", dcfg.significance)->capture_default_str();
  detect_cmd->add_option("--fallback", fallback, "ks or mad")->capture_default_str();
  add_probe_flags(detect_cmd, pf);
  detect_cmd->add_flag("--json", as_json);

  auto* distance_cmd = app.add_subcommand("distance", "distance between two checkpoints");
  std::string ck_a, ck_b;
  distance_cmd->add_option("a", ck_a)->required();
  distance_cmd->add_option("b", ck_b)->required();
  distance_cmd->add_option("--metric", metric)->capture_default_str();
  add_probe_flags(distance_cmd, pf);

  auto* signature_cmd = app.add_subcommand("signature", "print the Zest signature of a checkpoint");
  signature_cmd->add_option("checkpoint", ck_a)->required();
  add_probe_flags(signature_cmd, pf);
  signature_cmd->add_flag("--json", as_json);

  auto* cost_cmd = app.add_subcommand("cost", "replication and distance cost");
  std::size_t n = 0, m = 0, k = 0, T = 0;
  double probe_batches = 1.0;
  std::optional<double> price;
  cost_cmd->add_option("--n", n)->required();
  cost_cmd->add_option("--m", m)->required();
  cost_cmd->add_option("--k", k)->required();
  cost_cmd->add_option("--T", T)->required();
  cost_cmd->add_option("--metric", metric)->capture_default_str();
  cost_cmd->add_option("--probe-batches", probe_batches)->capture_default_str();
  cost_cmd->add_option("--price-per-step", price);
  cost_cmd->add_flag("--json", as_json);

  auto* dataset_cmd = app.add_subcommand("dataset", "dataset utilities");
  dataset_cmd->require_subcommand(1);
  auto* dump_cmd = dataset_cmd->add_subcommand("dump", "write a scenario's dataset split as JSON");
  std::string split = "test";
  std::string out_file;
  dump_cmd->add_option("config", sf.config)->required();
  dump_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  dump_cmd->add_option("--out", out_file, "file to write (stdout if omitted)");

  auto* trigger_cmd = app.add_subcommand("trigger", "trigger utilities");
  trigger_cmd->require_subcommand(1);
  auto* preview_cmd = trigger_cmd->add_subcommand("preview", "render a trigger on a zero image");
  attacks::TriggerParams tp;
  std::string kind = "corner_patch";
  preview_cmd->add_option("--kind", kind)->capture_default_str();
  preview_cmd->add_option("--side", tp.side)->capture_default_str();
  preview_cmd->add_option("--size", tp.size)->capture_default_str();
  preview_cmd->add_option("--corner", tp.corner)->capture_default_str();
  preview_cmd->add_option("--line", tp.line)->capture_default_str();
  preview_cmd->add_flag("--vertical", tp.vertical);
  preview_cmd->add_option("--magnitude", tp.magnitude)->capture_default_str();
  preview_cmd->add_option("--alpha", tp.alpha)->capture_default_str();
  preview_cmd->add_option("--seed", tp.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*scenario_run) return cmd_scenario_run(sf, out);
    if (*sweep_cmd) return cmd_sweep(sf, axis, values, out);
    if (*detect_cmd) {
      dcfg.fallback = detect::fallback_from_string(fallback);
      return cmd_detect(paths, dcfg, metric, pf, as_json, out);
    }
    if (*distance_cmd) {
      const auto met = dist::metric_from_string(metric);
      const auto models = load_models({ck_a, ck_b});
      out << format_double(dist::model_distance(models[0], models[1], met, probe_from_flags(pf, met))) << '\n';
      return ok;
    }
    if (*signature_cmd) {
      const auto ctx = probe_from_flags(pf, dist::Metric::zest);
      const auto sig = dist::zest_signature(load_models({ck_a})[0], ctx, pf.opts.ridge_lambda);
      if (as_json) {
        json j{{"num_reference", sig.num_reference},
               {"num_segments", sig.num_segments},
               {"num_classes", sig.num_classes},
               {"context_fingerprint", sig.context_fingerprint},
               {"values", sig.values}};
        out << j.dump() << '\n';
      } else {
        out << "signature: " << sig.num_reference << " reference points x " << sig.num_segments << " segments x "
            << sig.num_classes << " classes\n";
        for (double v : sig.values) out << format_double(v) << '\n';
      }
      return ok;
    }
    if (*cost_cmd) return cmd_cost(n, m, k, T, metric, probe_batches, price, as_json, out);
    if (*dump_cmd) {
      const auto cfg = config::load_scenario(sf.config);
      const auto data = harness::build_data(cfg);
      const auto text = datasets::dump_dataset(split == "test" ? data.test : data.train, data.segments);
      if (out_file.empty())
        out << text;
      else
        write_file(out_file, text);
      return ok;
    }
    if (*preview_cmd) {
      tp.kind = attacks::trigger_kind_from_string(kind);
      const std::size_t dim = tp.side * tp.side;
      out << attacks::preview_trigger(attacks::make_trigger(tp, dim), dim, tp.side);
      return ok;
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return config_error;
  }
  return usage;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return run_impl(argc, argv, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return config_error;
  }
}

}  // namespace rttd::cli
