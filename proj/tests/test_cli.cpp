#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rttd/checkpoint.hpp"
#include "rttd/cli.hpp"
#include <json.hpp>

#include "rttd/config.hpp"
#include "support.hpp"

using namespace rttd;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rttd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rttd_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const harness::ScenarioConfig& cfg) {
  const auto p = dir / "scenario.json";
  std::ofstream(p) << config::dump_scenario(cfg);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> checkpoints_in(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run_cli({}).code == cli::usage);
  CHECK(run_cli({"frobnicate"}).code == cli::usage);
  CHECK(run_cli({"--help"}).code == cli::ok);
  CHECK(run_cli({"cost", "--n", "16"}).code == cli::usage);
}

TEST_CASE("scenario run exit codes and outputs") {
  const auto dir = scratch_dir("scenario");
  CHECK(run_cli({"scenario", "run", (dir / "nope.json").string()}).code == cli::config_error);
  std::ofstream(dir / "typo.json") << R"({"servers": [{"id": 1}, {"id": 2}, {"id": 3}], "trainning": {}})";
  const auto typo = run_cli({"scenario", "run", (dir / "typo.json").string()});
  CHECK(typo.code == cli::config_error);
  CHECK(typo.err.find("trainning") != std::string::npos);

  auto benign = test::small_scenario(3, 4, 0);
  benign.detection.benign_fraction = 0.5;
  const auto bpath = write_config(dir, benign);
  const auto r = run_cli({"scenario", "run", bpath.string(), "--out", (dir / "b").string()});
  CHECK(r.code == cli::ok);
  CHECK(fs::exists(dir / "b" / "report.json"));
  CHECK(fs::exists(dir / "b" / "probe_data.json"));
  CHECK(fs::exists(dir / "b" / "histogram_subrun_2.csv"));
  CHECK(checkpoints_in(dir / "b" / "checkpoints" / "subrun_2").size() == 4);

  // identical inputs give identical bytes, parallel or serial
  const auto again = run_cli({"scenario", "run", bpath.string(), "--out", (dir / "c").string(), "--serial"});
  CHECK(again.code == cli::ok);
  CHECK(slurp(dir / "b" / "report.json") == slurp(dir / "c" / "report.json"));
  CHECK(slurp(dir / "b" / "histogram_subrun_2.csv") == slurp(dir / "c" / "histogram_subrun_2.csv"));
  const auto cb = checkpoints_in(dir / "b" / "checkpoints" / "subrun_2");
  const auto cc = checkpoints_in(dir / "c" / "checkpoints" / "subrun_2");
  for (std::size_t i = 0; i < cb.size(); ++i) CHECK(slurp(cb[i]) == slurp(cc[i]));

  CHECK(run_cli({"scenario", "run", bpath.string(), "--out", (dir / "d").string(), "--metric", "l2"}).code ==
        cli::config_error);
}

TEST_CASE("shipped configs: all-benign exits 0, default exits 3 and detect agrees with the run") {
  const auto dir = scratch_dir("default");
  const fs::path configs = fs::path(RTTD_SOURCE_DIR) / "configs";
  const auto benign = run_cli({"scenario", "run", (configs / "all_benign.json").string(), "--out", (dir / "b").string()});
  CHECK(benign.code == cli::ok);

  const auto def = run_cli({"scenario", "run", (configs / "default.json").string(), "--out", (dir / "d").string(), "--json"});
  REQUIRE(def.code == cli::malicious_found);
  const auto rep = nlohmann::json::parse(def.out);
  const auto& verdicts = rep["subruns"][0]["detection"]["verdicts"];
  REQUIRE(verdicts.size() == 16);

  auto paths = checkpoints_in(dir / "d" / "checkpoints" / "subrun_4");
  REQUIRE(paths.size() == 16);
  std::vector<std::string> args{"detect", "--json", "--data", (dir / "d" / "probe_data.json").string(), "--r", "0.5"};
  args.insert(args.end(), paths.begin(), paths.end());
  const auto det = run_cli(args);
  CHECK(det.code == cli::malicious_found);
  const auto again = nlohmann::json::parse(det.out);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(again["verdicts"][i]["is_benign"] == verdicts[i]["is_benign"]);
    CHECK(again["verdicts"][i]["best_p_value"] == verdicts[i]["best_p_value"]);
  }
}

TEST_CASE("detect on hand-made checkpoints") {
  const auto dir = scratch_dir("detect");
  const auto w = test::random_model(test::arch(16, {6}, 4), 5, 0.3);
  std::vector<std::string> paths;
  for (int i = 0; i < 3; ++i) {
    paths.push_back((dir / ("same_" + std::to_string(i) + ".ckpt")).string());
    save_checkpoint(paths.back(), Checkpoint{w, 10, {}});
  }
  std::vector<std::string> args{"detect", "--metric", "parameter", "--r", "0.6"};
  args.insert(args.end(), paths.begin(), paths.end());
  const auto same = run_cli(args);
  CHECK(same.code == cli::ok);

  CHECK(run_cli({"detect", "--metric", "parameter", paths[0], paths[1]}).code == cli::usage);
  CHECK(run_cli({"detect", "--metric", "zest", paths[0], paths[1], paths[2]}).code == cli::usage);

  const auto other = (dir / "other.ckpt").string();
  save_checkpoint(other, Checkpoint{test::random_model(test::arch(16, {7}, 4), 6), 10, {}});
  const auto mixed = run_cli({"detect", "--metric", "parameter", paths[0], paths[1], other});
  CHECK(mixed.code == cli::config_error);
  CHECK(mixed.err.find("differs") != std::string::npos);
  CHECK(run_cli({"detect", "--metric", "parameter", paths[0], paths[1], (dir / "gone.ckpt").string()}).code ==
        cli::config_error);
}

TEST_CASE("cost command") {
  const auto r = run_cli({"cost", "--n", "16", "--m", "1", "--k", "125", "--T", "1875", "--metric", "parameter",
                          "--price-per-step", "0.00001"});
  CHECK(r.code == cli::ok);
  CHECK(r.out.find("detection probability      0.0667") != std::string::npos);
  const auto j = run_cli({"cost", "--n", "16", "--m", "1", "--k", "400", "--T", "6000", "--json",
                          "--price-per-step", "1e-5"});
  REQUIRE(j.code == cli::ok);
  const auto doc = nlohmann::json::parse(j.out);
  CHECK(doc["replication_steps"] == 6000.0);
  CHECK(doc["detection_probability"].get<double>() == doctest::Approx(1.0 / 15.0));
  CHECK(run_cli({"cost", "--n", "16", "--m", "3", "--k", "400", "--T", "1000"}).code == cli::config_error);
}

TEST_CASE("trigger preview and dataset dump") {
  const auto p = run_cli({"trigger", "preview", "--kind", "corner_patch", "--side", "4", "--size", "1"});
  CHECK(p.code == cli::ok);
  CHECK(!p.out.empty());
  const auto dir = scratch_dir("dump");
  const auto cfgp = write_config(dir, test::small_scenario(2, 3, 1));
  const auto d = run_cli({"dataset", "dump", cfgp.string(), "--split", "test"});
  CHECK(d.code == cli::ok);
  CHECK(nlohmann::json::parse(d.out).contains("segment_map"));
}
