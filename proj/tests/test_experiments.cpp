#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "crsense/errors.hpp"
#include "crsense/experiments.hpp"
#include "doctest.h"

using namespace crsense;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const auto dir = fs::temp_directory_path() / "crsense_test_experiments";
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const auto path = scratch_dir() / name;
  std::ofstream(path) << text;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(CRSENSE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

int config_error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("empty config gives the default scenario") {
  const auto cfg = parse_config("");
  CHECK(cfg.num_sus == 20);
  CHECK(cfg.num_channels == 40);
  CHECK(cfg.num_slots == 20);
  CHECK(cfg.chain.p01 == 0.2);
  CHECK(cfg.chain.p11 == 0.8);
  CHECK(cfg.detector.nu == 100);
  CHECK(cfg.pu_snr_db == 10.0);
  CHECK(std::get<RayleighIid>(cfg.pu_su.kind).mean_snr_db == -10.0);
  CHECK(std::get<RayleighIid>(cfg.su_su.kind).mean_snr_db == 10.0);
  CHECK(!cfg.mismatch);
  CHECK(parse_config("# only a comment\n\n   \n").num_sus == 20);
}

TEST_CASE("config values are applied") {
  const auto cfg = parse_config(
      "M = 3\n"
      "N = 5   # trailing comment\n"
      "T=7\n"
      "seed = 12345678901234\n"
      "replications = 9\n"
      "detector.threshold_mode = mismatched\n"
      "mismatch.nmse = 0.25\n"
      "detector.approx = exact\n"
      "detector.pmd_target = 0.05\n"
      "strategy.reward = capacity\n"
      "sensing.oracle = statistic\n"
      "fading.su_su.kind = lognormal\n"
      "fading.su_su.mu_db = 8\n"
      "chain.2.p01 = 0.4\n"
      "chain.5.p11 = 0.3\n");
  CHECK(cfg.num_sus == 3);
  CHECK(cfg.num_channels == 5);
  CHECK(cfg.num_slots == 7);
  CHECK(cfg.seed == 12345678901234ULL);
  CHECK(cfg.replications == 9);
  CHECK(cfg.detector.threshold_mode == ThresholdMode::Mismatched);
  CHECK(cfg.mismatch->nmse == 0.25);
  CHECK(cfg.detector.approx_mode == ApproxMode::Exact);
  CHECK(cfg.detector.pmd_target == 0.05);
  CHECK(cfg.reward_mode == RewardMode::Capacity);
  CHECK(cfg.oracle == SensingOracle::DecisionStatistic);
  const auto& su = std::get<LognormalCorrelated>(cfg.su_su.kind);
  CHECK(su.mu_db == 8.0);
  CHECK(su.sigma_db == 5.0);
  CHECK(su.rho == 0.0);
  const auto chains = cfg.chains();
  CHECK(chains[1].p01 == 0.4);
  CHECK(chains[1].p11 == 0.8);
  CHECK(chains[4].p01 == 0.2);
  CHECK(chains[4].p11 == 0.3);
  CHECK(chains[0].p01 == 0.2);
}

TEST_CASE("config errors carry line numbers and names") {
  CHECK(config_error_line("M = 2\nbogus.key = 1\n") == 2);
  CHECK(config_error_line("M = 2\n\nM = 3\n") == 3);
  CHECK(config_error_line("M 2\n") == 1);
  CHECK(config_error_line("N = forty\n") == 1);
  CHECK(config_error_line("\n\nT = 2.5\n") == 3);
  CHECK(config_error_line("sensing.perfect = maybe\n") == 1);
  CHECK(config_error_line("detector.threshold_mode = psychic\n") == 1);
  CHECK(config_error_line("M =\n") == 1);
  CHECK(config_error_line("chain.0.p01 = 0.1\n") == 1);
  CHECK_THROWS_WITH_AS(parse_config("foo = 1\n"), "line 1: unknown key foo", ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("M = 0\n"), "M must be >= 1", ValidationError);
  CHECK_THROWS_AS(parse_config("N = 2\nchain.3.p01 = 0.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("fading.su_su.kind = lognormal\nfading.su_su.rho = 0.3\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_config("chain.p01 = 0\nchain.p11 = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("detector.threshold_mode = mismatched\n"), ValidationError);
  CHECK_THROWS_AS(load_config(scratch_dir() / "does_not_exist.cfg"), ConfigError);
}

TEST_CASE("every documented key parses") {
  for (const auto& key : config_keys()) {
    CAPTURE(key);
    CHECK(key.find(' ') == std::string::npos);
  }
  CHECK(config_keys().size() >= 20);
}

TEST_CASE("result table ordering, completeness and CSV format") {
  ResultTable table;
  table.add(0.5, "b", 1.0, 0.1);
  table.add(0.1, "b", 2.0, 0.2);
  table.add(0.5, "a", 3.0, 0.3);
  table.add(0.1, "a", 1.0 / 3.0, 0.0);
  const auto rows = table.rows();
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].x == 0.1);
  CHECK(rows[0].series == "a");
  CHECK(rows[1].series == "b");
  CHECK(rows[2].x == 0.5);
  CHECK_NOTHROW(table.check_complete());
  CHECK(table.find(0.5, "b")->mean == 1.0);
  CHECK(!table.find(0.2, "b"));

  std::ostringstream csv;
  table.write_csv(csv);
  CHECK(csv.str() ==
        "x,series,mean,ci95\n"
        "0.1,a,0.333333333,0\n"
        "0.1,b,2,0.2\n"
        "0.5,a,3,0.3\n"
        "0.5,b,1,0.1\n");

  ResultTable missing = table;
  missing.add(0.9, "a", 1.0, 0.0);
  CHECK_THROWS_AS(missing.check_complete(), Error);
  ResultTable duplicate = table;
  duplicate.add(0.1, "a", 1.0, 0.0);
  CHECK_THROWS_AS(duplicate.check_complete(), Error);
}

TEST_CASE("CSV files are written atomically") {
  ResultTable table;
  table.add(1.0, "s", 2.0, 0.5);
  const auto path = scratch_dir() / "table.csv";
  fs::remove(path);
  table.write_csv(path);
  CHECK(read_file(path) == "x,series,mean,ci95\n1,s,2,0.5\n");
  CHECK(!fs::exists(path.string() + ".partial"));

  const auto bad = scratch_dir() / "no_such_dir" / "table.csv";
  CHECK_THROWS(table.write_csv(bad));
  CHECK(!fs::exists(bad));
  CHECK(!fs::exists(bad.string() + ".partial"));
}

TEST_CASE("presets") {
  CHECK(parse_preset_id("fig2") == PresetId::Fig2Roc);
  CHECK(parse_preset_id("fig6") == PresetId::Fig6Nmse);
  CHECK_THROWS_AS(parse_preset_id("fig7"), ValidationError);
  for (auto id : {PresetId::Fig2Roc, PresetId::Fig3Throughput, PresetId::Fig4Cooperative,
                  PresetId::Fig5Correlation, PresetId::Fig6Nmse}) {
    CAPTURE(preset_name(id));
    CHECK(parse_preset_id(preset_name(id)) == id);
    const auto preset = make_preset(id);
    REQUIRE(!preset.sweep.empty());
    for (std::size_t i = 1; i < preset.sweep.size(); ++i)
      CHECK(preset.sweep[i] > preset.sweep[i - 1]);
    CHECK_NOTHROW(preset.base.validate());
  }
  const auto fig5 = make_preset(PresetId::Fig5Correlation);
  CHECK(fig5.sweep.front() == 0.0);
  CHECK(fig5.sweep.back() == doctest::Approx(0.9));
  const auto& pu = std::get<LognormalCorrelated>(fig5.base.pu_su.kind);
  CHECK(pu.mu_db == -10.0);
  CHECK(pu.sigma_db == 5.0);
  CHECK(std::get<LognormalCorrelated>(fig5.base.su_su.kind).mu_db == 10.0);

  ExperimentPreset bad = make_preset(PresetId::Fig2Roc);
  bad.sweep = {0.2, 0.1};
  CHECK_THROWS_AS(run_preset(bad), ValidationError);
  bad.sweep.clear();
  CHECK_THROWS_AS(run_preset(bad), ValidationError);

  const auto base = ScenarioConfig{};
  const auto combined = fig3_policy(base, series::kCombinedAdaptive, 0.2);
  CHECK(combined.reward_mode == RewardMode::Capacity);
  CHECK(combined.detector.threshold_mode == ThresholdMode::Adaptive);
  CHECK(combined.detector.pmd_target == 0.2);
  const auto myopic = fig3_policy(base, series::kMyopicFixed, 0.1);
  CHECK(myopic.reward_mode == RewardMode::Bandwidth);
  CHECK(myopic.detector.threshold_mode == ThresholdMode::Fixed);
  CHECK(fig3_policy(base, series::kSuCsiPerfect, 0.1).perfect_sensing);
  CHECK_THROWS_AS(fig3_policy(base, "nonsense", 0.1), ValidationError);
}

TEST_CASE("fig2 preset table") {
  const auto table = run_preset(make_preset(PresetId::Fig2Roc));
  CHECK_NOTHROW(table.check_complete());
  const auto fixed = table.find(0.1, series::kFixed);
  const auto adaptive = table.find(0.1, series::kAdaptive);
  REQUIRE(fixed);
  REQUIRE(adaptive);
  CHECK(adaptive->mean < fixed->mean);
}

TEST_CASE("scenario table is byte-stable for a fixed seed") {
  auto cfg = parse_config("M = 3\nN = 4\nT = 5\nreplications = 20\nseed = 4\n");
  std::ostringstream a, b;
  run_scenario(cfg, 1).write_csv(a);
  run_scenario(cfg, 3).write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().starts_with("x,series,mean,ci95\n0.1,collision_rate,"));
}

TEST_CASE("command line exit codes and output") {
  const auto dir = scratch_dir();
  const auto good = write_file("good.cfg", "M = 2\nN = 3\nT = 4\nreplications = 10\n");
  const auto bad_key = write_file("bad_key.cfg", "M = 2\nwhat = 1\n");
  const auto bad_value = write_file("bad_value.cfg", "M = 0\n");
  const auto out1 = dir / "cli1.csv";
  const auto out2 = dir / "cli2.csv";
  fs::remove(out1);
  fs::remove(out2);

  CHECK(cli("validate --config " + good.string()) == 0);
  CHECK(cli("validate --config " + bad_key.string()) == 1);
  CHECK(cli("validate --config " + bad_value.string()) == 1);
  CHECK(cli("validate --config " + (dir / "missing.cfg").string()) == 1);
  CHECK(cli("run --config " + good.string() + " --seed 3 --out " + out1.string()) == 0);
  CHECK(cli("run --config " + good.string() + " --seed 3 --out " + out2.string()) == 0);
  CHECK(read_file(out1) == read_file(out2));
  CHECK(read_file(out1).starts_with("x,series,mean,ci95\n"));
  CHECK(cli("run --config " + good.string() + " --reps 0 --out " + out1.string()) == 1);
  CHECK(cli("run --config " + bad_key.string() + " --out " + out1.string()) == 1);
  CHECK(cli("preset --figure fig9 --out " + out1.string()) == 1);
  CHECK(cli("frobnicate") == 1);
  CHECK(cli("--help") == 0);
  fs::remove(out1);
  CHECK(cli("preset --figure fig2 --out " + out1.string()) == 0);
  CHECK(read_file(out1).find("0.1,adaptive,") != std::string::npos);

  // Examples shipped with the sources must stay valid.
  for (const auto& entry : fs::directory_iterator(fs::path(CRSENSE_SOURCE_DIR) / "configs")) {
    CAPTURE(entry.path().string());
    CHECK(cli("validate --config " + entry.path().string()) == 0);
  }
}
