#include "rttd/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rttd/checkpoint.hpp"
#include "rttd/config.hpp"
#include "rttd/error.hpp"

namespace rttd::report {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + "." + key, "missing");
  return j.at(key);
}

std::vector<double> reals(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(real_from_json(v));
  return out;
}

template <class T>
T get(const json& j, const char* key, const std::string& path) {
  try {
    return field(j, key, path).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key, e.what());
  }
}

json window_to_json(const stats::WindowSelection& w) {
  json j{{"start_index", w.start_index}, {"length", w.length}, {"variance", real_to_json(w.variance)}};
  j["values"] = json::array();
  for (double v : w.values) j["values"].push_back(real_to_json(v));
  return j;
}

json verdict_to_json(const detect::ServerVerdict& v) {
  json j{{"server", v.server},
         {"is_benign", v.is_benign},
         {"best_p_value", real_to_json(v.best_p_value)},
         {"best_statistic", real_to_json(v.best_statistic)},
         {"quartile_index", real_to_json(v.quartile_index)},
         {"cluster_max_index", real_to_json(v.cluster_max_index)}};
  j["window"] = json::array();
  for (double x : v.window) j["window"].push_back(real_to_json(x));
  return j;
}

}  // namespace

json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double real_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    if (s == "nan") return std::nan("");
  }
  throw ConfigError("", "expected a number, got " + j.dump());
}

json detection_to_json(const detect::DetectionReport& r) {
  json j;
  j["metric"] = dist::to_string(r.matrix.metric);
  j["n"] = r.matrix.n;
  json rows = json::array();
  for (std::size_t i = 0; i < r.matrix.n; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < r.matrix.n; ++k) row.push_back(real_to_json(r.matrix.at(i, k)));
    rows.push_back(std::move(row));
  }
  j["matrix"] = std::move(rows);
  j["config"] = {{"r", r.config.benign_fraction},
                 {"alpha", r.config.significance},
                 {"fallback", detect::to_string(r.config.fallback)},
                 {"mad_quartile", r.config.mad_quartile}};
  j["sorted_distances"] = json::array();
  for (double v : r.sorted_distances) j["sorted_distances"].push_back(real_to_json(v));
  j["cluster"] = window_to_json(r.cluster);
  j["verdicts"] = json::array();
  for (const auto& v : r.verdicts) j["verdicts"].push_back(verdict_to_json(v));
  j["groups"] = r.groups;
  j["ground_truth"] = r.ground_truth ? json(*r.ground_truth) : json(nullptr);
  j["accuracy"] = r.accuracy ? real_to_json(*r.accuracy) : json(nullptr);
  j["any_malicious"] = r.any_malicious();
  return j;
}

detect::DetectionReport detection_from_json(const json& j) {
  const std::string p = "detection";
  detect::DetectionReport r;
  try {
    const auto n = get<std::size_t>(j, "n", p);
    r.matrix = detect::DistanceMatrix(n, dist::metric_from_string(get<std::string>(j, "metric", p)));
    const auto& rows = field(j, "matrix", p);
    if (!rows.is_array() || rows.size() != n) throw ConfigError(p + ".matrix", "expected n rows");
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = reals(rows[i], p + ".matrix[" + std::to_string(i) + "]");
      if (row.size() != n) throw ConfigError(p + ".matrix[" + std::to_string(i) + "]", "expected n entries");
      for (std::size_t k = 0; k < n; ++k) r.matrix.entries[i * n + k] = row[k];
    }
    const auto& c = field(j, "config", p);
    r.config.benign_fraction = real_from_json(field(c, "r", p + ".config"));
    r.config.significance = real_from_json(field(c, "alpha", p + ".config"));
    r.config.fallback = detect::fallback_from_string(get<std::string>(c, "fallback", p + ".config"));
    r.config.mad_quartile = real_from_json(field(c, "mad_quartile", p + ".config"));
    r.sorted_distances = reals(field(j, "sorted_distances", p), p + ".sorted_distances");
    const auto& w = field(j, "cluster", p);
    r.cluster.start_index = get<std::size_t>(w, "start_index", p + ".cluster");
    r.cluster.length = get<std::size_t>(w, "length", p + ".cluster");
    r.cluster.variance = real_from_json(field(w, "variance", p + ".cluster"));
    r.cluster.values = reals(field(w, "values", p + ".cluster"), p + ".cluster.values");
    const auto& vs = field(j, "verdicts", p);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const auto q = p + ".verdicts[" + std::to_string(i) + "]";
      detect::ServerVerdict v;
      v.server = get<std::size_t>(vs[i], "server", q);
      v.is_benign = get<bool>(vs[i], "is_benign", q);
      v.best_p_value = real_from_json(field(vs[i], "best_p_value", q));
      v.best_statistic = real_from_json(field(vs[i], "best_statistic", q));
      v.quartile_index = real_from_json(field(vs[i], "quartile_index", q));
      v.cluster_max_index = real_from_json(field(vs[i], "cluster_max_index", q));
      v.window = reals(field(vs[i], "window", q), q + ".window");
      r.verdicts.push_back(std::move(v));
    }
    r.groups = get<std::vector<int>>(j, "groups", p);
    if (const auto& g = field(j, "ground_truth", p); !g.is_null()) r.ground_truth = g.get<std::vector<bool>>();
    if (const auto& a = field(j, "accuracy", p); !a.is_null()) r.accuracy = real_from_json(a);
  } catch (const json::exception& e) {
    throw ConfigError(p, e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p, e.what());
  }
  return r;
}

json scenario_to_json(const harness::ScenarioReport& r) {
  json j;
  j["config"] = json::parse(config::dump_scenario(r.config));
  j["checkpoint_test_accuracy"] = json::array();
  for (double a : r.checkpoint_test_accuracy) j["checkpoint_test_accuracy"].push_back(real_to_json(a));
  j["subruns"] = json::array();
  for (const auto& s : r.subruns) {
    json sj{{"subrun_index", s.subrun_index}, {"start_step", s.start_step}};
    sj["servers"] = json::array();
    for (const auto& o : s.outcomes) {
      json oj{{"server_id", o.slot.server_id},
              {"replica", o.slot.replica},
              {"behavior", harness::to_string(o.slot.kind)},
              {"truth_benign", o.truth_benign},
              {"clean_accuracy", real_to_json(o.clean_accuracy)}};
      if (o.attack) oj["asr"] = real_to_json(o.attack->asr);
      sj["servers"].push_back(std::move(oj));
    }
    sj["detection"] = detection_to_json(s.detection);
    sj["server_verdicts"] = s.server_verdicts;
    sj["histogram"] = json::array();
    for (const auto& h : s.histogram)
      sj["histogram"].push_back({{"group", harness::to_string(h.group)},
                                 {"bin_lo", real_to_json(h.bin_lo)},
                                 {"bin_hi", real_to_json(h.bin_hi)},
                                 {"count", h.count}});
    j["subruns"].push_back(std::move(sj));
  }
  j["accuracy"] = real_to_json(r.accuracy);
  return j;
}

std::string histogram_csv(dist::Metric metric, const std::vector<harness::HistogramRow>& rows) {
  std::ostringstream out;
  out << "metric,group,bin_lo,bin_hi,count\n";
  for (const auto& h : rows)
    out << dist::to_string(metric) << ',' << harness::to_string(h.group) << ',' << format_double(h.bin_lo) << ','
        << format_double(h.bin_hi) << ',' << h.count << '\n';
  return out.str();
}

std::string matrix_table(const detect::DistanceMatrix& m, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "distance matrix (" << dist::to_string(m.metric) << ")\n";
  out << std::string(8, ' ');
  for (std::size_t k = 0; k < m.n; ++k) out << ' ' << std::string(9 - std::min<std::size_t>(9, labels[k].size()), ' ') << labels[k];
  out << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    out << std::string(8 - std::min<std::size_t>(8, labels[i].size()), ' ') << labels[i];
    for (std::size_t k = 0; k < m.n; ++k) out << ' ' << fmt("%9.6f", m.at(i, k));
    out << '\n';
  }
  return out.str();
}

std::string verdict_table(const detect::DetectionReport& r, const std::vector<std::string>& labels) {
  std::ostringstream out;
  const bool mad = r.config.fallback == detect::Fallback::mad;
  out << (mad ? "model      verdict     q-index  cluster-max" : "model      verdict     best-p        D");
  if (r.ground_truth) out << "  truth";
  out << '\n';
  for (std::size_t i = 0; i < r.verdicts.size(); ++i) {
    const auto& v = r.verdicts[i];
    char line[160];
    if (mad)
      std::snprintf(line, sizeof line, "%-10s %-9s %9.4g %12.4g", labels[i].c_str(), v.is_benign ? "benign" : "MALICIOUS",
                    v.quartile_index, v.cluster_max_index);
    else
      std::snprintf(line, sizeof line, "%-10s %-9s %9.3e %8.4f", labels[i].c_str(), v.is_benign ? "benign" : "MALICIOUS",
                    v.best_p_value, v.best_statistic);
    out << line;
    if (r.ground_truth) out << "  " << ((*r.ground_truth)[i] ? "benign" : "malicious");
    out << '\n';
  }
  if (r.accuracy) out << "accuracy " << fmt("%.4f", *r.accuracy) << '\n';
  return out.str();
}

std::string scenario_summary(const harness::ScenarioReport& r) {
  std::ostringstream out;
  const auto& cfg = r.config;
  out << "scenario seed " << cfg.seed << ": " << cfg.servers.size() << " servers x " << cfg.virtualize_replicas
      << " replicas, metric " << dist::to_string(cfg.metric) << ", T=" << cfg.total_steps << " k=" << cfg.subrun_steps
      << '\n';
  out << "primary final test accuracy " << fmt("%.4f", r.checkpoint_test_accuracy.back()) << '\n';
  for (const auto& s : r.subruns) {
    out << "\nsub-run " << s.subrun_index << " (steps " << s.start_step << ".." << s.start_step + cfg.subrun_steps
        << ")\n";
    std::vector<std::string> labels;
    for (const auto& o : s.outcomes)
      labels.push_back("s" + std::to_string(o.slot.server_id) +
                       (cfg.virtualize_replicas > 1 ? "." + std::to_string(o.slot.replica) : std::string()));
    out << verdict_table(s.detection, labels);
    for (const auto& o : s.outcomes)
      if (o.attack)
        out << "  " << labels[&o - s.outcomes.data()] << " asr " << fmt("%.3f", o.attack->asr) << " clean "
            << fmt("%.3f", o.clean_accuracy) << '\n';
  }
  out << "\noverall accuracy " << fmt("%.4f", r.accuracy) << '\n';
  return out.str();
}

}  // namespace rttd::report
