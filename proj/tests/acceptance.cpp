// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: rttd_acceptance [AC1 AC5 ...]   (no arguments = all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rttd/cli.hpp"
#include "rttd/config.hpp"
#include "rttd/datasets.hpp"
#include "rttd/detector.hpp"
#include "rttd/distances.hpp"
#include "rttd/harness.hpp"
#include "rttd/nn.hpp"
#include "rttd/stats.hpp"

using namespace rttd;
using namespace rttd::harness;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Pairwise distances split by ground truth: 0 = benign-benign, 1 = cross, 2 = malicious-malicious.
struct Groups {
  std::vector<double> g[3];
  double max(int i) const { return *std::max_element(g[i].begin(), g[i].end()); }
  double min(int i) const { return *std::min_element(g[i].begin(), g[i].end()); }
  double mean(int i) const {
    double s = 0.0;
    for (double v : g[i]) s += v;
    return s / static_cast<double>(g[i].size());
  }
};

Groups split(const detect::DistanceMatrix& m, const std::vector<bool>& truth) {
  Groups out;
  for (std::size_t a = 0; a < m.n; ++a)
    for (std::size_t b = a + 1; b < m.n; ++b) out.g[2 - truth[a] - truth[b]].push_back(m.at(a, b));
  return out;
}

std::vector<bool> truth_of(const SubrunResult& s) {
  std::vector<bool> t;
  for (const auto& o : s.outcomes) t.push_back(o.truth_benign);
  return t;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) { return v.size() > 1 ? std::sqrt(stats::sample_variance(v)) : 0.0; }

Outcome ac1_detection_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  int correct = 0, p_ok = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rep = run_scenario(presets::default_scenario(seed));
    const auto& s = rep.subruns.at(0);
    for (std::size_t i = 0; i < s.outcomes.size(); ++i) {
      const bool benign = s.outcomes[i].truth_benign;
      const auto& v = s.detection.verdicts[i];
      correct += v.is_benign == benign;
      p_ok += benign ? v.best_p_value >= 0.01 : v.best_p_value < 0.01;
      ++total;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = total == 80 && correct >= 76 && p_ok >= 76 && secs <= 600.0;
  return {pass, fmt("correct %d/%d, p criterion %d/%d, %.1fs", correct, total, p_ok, total, secs)};
}

Outcome ac2_benign_cluster() {
  int smallest = 0, inside = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto rep = run_scenario(presets::default_scenario(seed));
    const auto& s = rep.subruns.at(0);
    const auto truth = truth_of(s);
    const auto g = split(s.detection.matrix, truth);
    const double v0 = stats::sample_variance(g.g[0]);
    smallest += v0 < stats::sample_variance(g.g[1]) && v0 < stats::sample_variance(g.g[2]);

    std::vector<std::pair<double, bool>> pairs;
    const auto& m = s.detection.matrix;
    for (std::size_t a = 0; a < m.n; ++a)
      for (std::size_t b = a + 1; b < m.n; ++b) pairs.emplace_back(m.at(a, b), truth[a] && truth[b]);
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    const auto& c = s.detection.cluster;
    bool all_bb = true;
    for (std::size_t i = c.start_index; i < c.start_index + c.length; ++i) all_bb = all_bb && pairs[i].second;
    inside += all_bb;
  }
  return {smallest >= 19 && inside >= 19, fmt("bb variance smallest %d/20, cluster inside bb %d/20", smallest, inside)};
}

Outcome ac3_adaptive_low_lr() {
  int overlap = 0, separated = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = presets::default_scenario(seed);
    for (auto& s : cfg.servers)
      if (s.is_malicious()) {
        s.kind = BehaviorKind::adaptive_param;
        s.attack.lr_scale = 0.01;
      }
    cfg.metric = dist::Metric::parameter;
    const auto rep = run_scenario(cfg);
    const auto& s = rep.subruns.at(0);
    const auto truth = truth_of(s);
    const auto gp = split(s.detection.matrix, truth);
    overlap += gp.min(1) < gp.max(0);
    // Zest on the same models
    const auto data = build_data(cfg);
    const auto ctx = build_probe_context(cfg, data);
    const auto gz = split(detect::pairwise_distances(s.models, dist::Metric::zest, ctx), truth);
    separated += gz.min(1) > gz.max(0);
  }
  return {overlap >= 3 && separated == 5, fmt("parameter overlap %d/5 (need 3), zest separated %d/5", overlap, separated)};
}

Outcome ac4_adaptive_zest() {
  const std::size_t mps[3] = {10, 50, 100};
  std::vector<double> cross[2][3];  // [knows][mp] per-seed mean cross distance
  int above = 0, runs = 0;
  for (int knows = 0; knows <= 1; ++knows)
    for (int k = 0; k < 3; ++k)
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = presets::default_scenario(seed);
        for (auto& s : cfg.servers)
          if (s.is_malicious()) {
            s.kind = BehaviorKind::adaptive_zest;
            s.attack.masks_per_point = mps[k];
            s.attack.knows_reference_points = knows == 1;
          }
        const auto rep = run_scenario(cfg);
        const auto g = split(rep.subruns.at(0).detection.matrix, truth_of(rep.subruns.at(0)));
        cross[knows][k].push_back(g.mean(1));
        above += g.mean(1) > g.max(0);
        ++runs;
      }
  bool monotone = true, close = true;
  std::string detail;
  for (int knows = 0; knows <= 1; ++knows) {
    detail += knows ? " exact:" : "guessed:";
    for (int k = 0; k < 3; ++k) {
      detail += fmt(" %.4g", mean_of(cross[knows][k]));
      if (k > 0) monotone = monotone && mean_of(cross[knows][k]) <= mean_of(cross[knows][k - 1]);
    }
  }
  for (int k = 0; k < 3; ++k) {
    const double gap = std::fabs(mean_of(cross[1][k]) - mean_of(cross[0][k]));
    const double sd = std::sqrt(0.5 * (sd_of(cross[0][k]) * sd_of(cross[0][k]) + sd_of(cross[1][k]) * sd_of(cross[1][k])));
    close = close && gap <= sd;
    detail += fmt(" | mp %zu gap %.3g sd %.3g", mps[k], gap, sd);
  }
  detail += fmt(" | mean cross > max bb in %d/%d runs", above, runs);
  return {monotone && close && above == runs, detail};
}

Outcome ac5_mad() {
  int perfect = 0;
  std::string accs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rep = run_scenario(presets::five_server_mad(seed));
    perfect += rep.accuracy == 1.0;
    accs += fmt(" %.2f", rep.accuracy);
  }
  return {perfect == 5, fmt("perfect seeds %d/5, accuracy:", perfect) + accs};
}

Outcome ac6_virtualization() {
  int ok = 0;
  std::string got;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = presets::virtualized(seed);
    const auto rep = run_scenario(cfg);
    std::vector<bool> want;
    for (const auto& s : cfg.servers) want.push_back(!s.is_malicious());
    const auto& v = rep.subruns.at(0).server_verdicts;
    ok += v == want;
    got += " ";
    for (bool b : v) got += b ? 'B' : 'M';
  }
  return {ok == 5, fmt("correct server verdicts %d/5:", ok) + got};
}

// Oracles for the statistics kernels.
double brute_force_d(const std::vector<double>& a, const std::vector<double>& b) {
  auto ecdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [x](double v) { return v <= x; })) /
           static_cast<double>(s.size());
  };
  double d = 0.0;
  for (const auto* s : {&a, &b})
    for (double x : *s) d = std::max(d, std::fabs(ecdf(a, x) - ecdf(b, x)));
  return d;
}

double series_q(double lambda) {
  long double sum = 0.0L;
  for (int j = 1; j <= 200; ++j) {
    const long double term = std::exp(-2.0L * j * j * static_cast<long double>(lambda) * lambda);
    sum += (j % 2 == 1 ? term : -term);
  }
  return static_cast<double>(std::clamp(2.0L * sum, 0.0L, 1.0L));
}

Outcome ac7_oracles() {
  Rng rng(RngKey{7, 0, 0, Stream::shuffle});
  int d_exact = 0, p_close = 0;
  double worst_p = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(3 + rng.below(40)), b(3 + rng.below(40));
    const bool ties = trial % 3 == 0;
    for (auto* s : {&a, &b})
      for (auto& v : *s) v = ties ? std::floor(rng.uniform(0.0, 6.0)) : rng.normal();
    if (trial % 4 == 1)
      for (auto& v : b) v += 1.0;
    const auto r = stats::ks_two_sample(a, b);
    d_exact += r.statistic == brute_force_d(a, b);
    const double ne = static_cast<double>(a.size() * b.size()) / static_cast<double>(a.size() + b.size());
    const double err = std::fabs(r.p_value - series_q((std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * r.statistic));
    worst_p = std::max(worst_p, err);
    p_close += err <= 1e-9;
  }
  int windows = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(5 + rng.below(120));
    for (auto& x : v) x = trial % 2 ? rng.normal() : std::exp(rng.normal());
    std::sort(v.begin(), v.end());
    const std::size_t len = 1 + rng.below(v.size());
    std::size_t best = 0;
    double best_var = INFINITY;
    for (std::size_t s = 0; s + len <= v.size(); ++s) {
      const double var = stats::sample_variance(std::span<const double>(v.data() + s, len));
      if (var < best_var) {
        best_var = var;
        best = s;
      }
    }
    const auto got = stats::min_variance_window(v, len);
    windows += got.start_index == best && got.variance == best_var;
  }
  return {d_exact == 100 && p_close == 100 && windows == 200,
          fmt("D exact %d/100, p within 1e-9 %d/100 (worst %.2e), windows %d/200", d_exact, p_close, worst_p, windows)};
}

Outcome ac8_numerics() {
  // gradient against central differences
  Rng pick(88);
  int grads_ok = 0, grads = 0;
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    nn::ModelArch a{2, {8}, 3, draw % 2 ? nn::Activation::tanh : nn::Activation::relu};
    Rng init(500 + draw);
    std::vector<double> v(a.param_count());
    for (auto& x : v) x = 0.7 * init.normal();
    const nn::ModelWeights w(a, v);
    LabeledDataset batch{2, 3, {}, {}};
    for (int i = 0; i < 6; ++i) batch.push_back(std::vector<double>{init.normal(), init.normal()}, i % 3);
    const auto lg = nn::loss_and_grad(w, batch);
    const std::size_t i = pick.below(a.param_count());
    const double eps = 1e-5;
    auto plus = v, minus = v;
    plus[i] += eps;
    minus[i] -= eps;
    // a relu that flips sign inside [-eps, eps] has no derivative to compare against
    bool kink = false;
    for (std::size_t n = 0; n < batch.size() && a.activation == nn::Activation::relu; ++n) {
      const auto hp = nn::forward_hidden(w.with_values(plus), batch.row(n));
      const auto hm = nn::forward_hidden(w.with_values(minus), batch.row(n));
      for (std::size_t h = 0; h < hp.size(); ++h) kink = kink || ((hp[h] > 0) != (hm[h] > 0));
    }
    if (kink) continue;
    const double fd =
        (nn::loss_and_grad(w.with_values(plus), batch).loss - nn::loss_and_grad(w.with_values(minus), batch).loss) / (2 * eps);
    const double rel = std::fabs(fd - lg.grad[i]) / std::max(std::fabs(lg.grad[i]), 1e-3);
    worst = std::max(worst, rel);
    grads_ok += rel <= 1e-4;
    ++grads;
  }

  // CKA identity and scale invariance
  Rng rng(89);
  std::vector<double> x(20 * 4), y(20 * 4);
  for (auto& e : x) e = rng.normal();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = -3.5 * x[i];
  const double cka_self = dist::cka_linear(x, x, 20, 4, 4);
  const double cka_scaled = dist::cka_linear(x, y, 20, 4, 4);
  const bool cka_ok = std::fabs(cka_self - 1.0) <= 1e-12 && std::fabs(cka_scaled - 1.0) <= 1e-12;

  // Zest surrogate against a model that is exactly linear in the mask bits
  const auto [pool, seg] = datasets::make_tiny_images(5, 3, 4, 20, datasets::TinyImageOptions{.grid = 2});
  dist::ProbeOptions po;
  po.num_probe_points = 12;
  po.num_reference_points = 3;
  po.masks_per_point = 30;
  po.ridge_lambda = 0.0;
  po.baseline = 0.25;
  const auto ctx = dist::make_probe_context(pool, seg, po, 11);
  const nn::ModelArch lin{16, {}, 3, nn::Activation::relu};
  std::vector<double> lv(lin.param_count());
  for (auto& e : lv) e = rng.normal();
  const nn::ModelWeights lw(lin, lv);
  const auto sig = dist::zest_signature(lw, ctx, 0.0);
  double zest_err = 0.0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t k = 0; k < 3; ++k) {
        double want = 0.0;
        for (std::size_t i = 0; i < 16; ++i)
          if (ctx.segment_map.segment_of[i] == static_cast<int>(s))
            want += lv[k * 16 + i] * (ctx.reference_points[r][i] - ctx.baseline);
        zest_err = std::max(zest_err, std::fabs(sig.values[(r * 4 + s) * 3 + k] - want));
      }

  // exact zeros on identical models
  const nn::ModelArch deep{16, {6}, 3, nn::Activation::relu};
  std::vector<double> dv(deep.param_count());
  for (auto& e : dv) e = rng.normal();
  const nn::ModelWeights dw(deep, dv);
  bool zeros = true;
  for (auto m : {dist::Metric::parameter, dist::Metric::output, dist::Metric::zest, dist::Metric::cka})
    zeros = zeros && dist::model_distance(dw, dw, m, ctx) == 0.0;

  const bool pass = grads >= 50 && grads_ok == grads && cka_ok && zest_err <= 1e-8 && zeros;
  return {pass, fmt("gradients %d/%d within 1e-4 (worst %.1e), cka(X,X)-1 %.1e, scaled %.1e, zest err %.1e, zeros %s",
                    grads_ok, grads, worst, cka_self - 1.0, cka_scaled - 1.0, zest_err, zeros ? "yes" : "no")};
}

Outcome ac9_formulas() {
  const double p = detect::detection_probability(3, 2000, 90000);
  const auto c = detect::cost_overhead(16, 3, 2000, dist::Metric::parameter, 1.0, 90000);
  const double want_param = 120.0 * 3.0 / 3.0;
  const bool pass = p == 1.0 / 15.0 && c.replication_steps == 90000.0 && c.distance_step_equivalents == want_param;
  return {pass, fmt("p = %.17g, replication %.17g, parameter distance cost %.17g", p, c.replication_steps,
                    c.distance_step_equivalents)};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
  return out;
}

Outcome ac10_determinism() {
  const auto dir = fs::temp_directory_path() / "rttd_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg_path = dir / "default.json";
  std::ofstream(cfg_path) << config::dump_scenario(presets::default_scenario(3));
  int codes[2];
  for (int run = 0; run < 2; ++run) {
    const std::string out_dir = (dir / ("run" + std::to_string(run))).string();
    const std::string cfg_arg = cfg_path.string();
    const char* argv[] = {"rttd", "scenario", "run", cfg_arg.c_str(), "--out", out_dir.c_str()};
    std::ostringstream out, err;
    codes[run] = cli::run(6, argv, out, err);
  }
  const auto a = read_tree(dir / "run0"), b = read_tree(dir / "run1");
  const bool same = !a.empty() && a == b;
  fs::remove_all(dir);
  return {same && codes[0] == codes[1],
          fmt("%zu files, byte-identical %s, exit codes %d/%d", a.size(), same ? "yes" : "no", codes[0], codes[1])};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"AC1", ac1_detection_accuracy}, {"AC2", ac2_benign_cluster}, {"AC3", ac3_adaptive_low_lr},
      {"AC4", ac4_adaptive_zest},      {"AC5", ac5_mad},            {"AC6", ac6_virtualization},
      {"AC7", ac7_oracles},            {"AC8", ac8_numerics},       {"AC9", ac9_formulas},
      {"AC10", ac10_determinism}};
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : all) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%-4s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
  }
  return failed == 0 ? 0 : 1;
}
