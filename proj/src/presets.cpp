#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <system_error>

#include "crsense/errors.hpp"
#include "crsense/experiments.hpp"

namespace crsense {

// ---- ResultTable --------------------------------------------------------------

void ResultTable::add(double x, std::string series, double mean, double ci95) {
  rows_.push_back(ResultRow{x, std::move(series), mean, ci95});
}

std::vector<ResultRow> ResultTable::rows() const {
  auto sorted = rows_;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.series < b.series;
  });
  return sorted;
}

std::optional<ResultRow> ResultTable::find(double x, std::string_view series) const {
  for (const auto& row : rows_)
    if (row.x == x && row.series == series) return row;
  return std::nullopt;
}

void ResultTable::check_complete() const {
  std::map<double, std::map<std::string, int>> grid;
  std::map<std::string, int> all_series;
  for (const auto& row : rows_) {
    ++grid[row.x][row.series];
    all_series[row.series] = 0;
  }
  for (const auto& [x, present] : grid) {
    if (present.size() != all_series.size())
      throw Error("result table: missing series at x = " + std::to_string(x));
    for (const auto& [name, count] : present)
      if (count != 1) throw Error("result table: duplicate row for " + name);
  }
}

void ResultTable::write_csv(std::ostream& out) const {
  out << "x,series,mean,ci95\n";
  char buf[128];
  for (const auto& row : rows()) {
    std::snprintf(buf, sizeof buf, "%.9g,", row.x);
    out << buf << row.series;
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", row.mean, row.ci95);
    out << buf;
  }
}

void ResultTable::write_csv(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".partial";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot open " + tmp.string() + " for writing");
      write_csv(out);
      out.flush();
      if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

// ---- presets ------------------------------------------------------------------

PresetId parse_preset_id(std::string_view name) {
  if (name == "fig2") return PresetId::Fig2Roc;
  if (name == "fig3") return PresetId::Fig3Throughput;
  if (name == "fig4") return PresetId::Fig4Cooperative;
  if (name == "fig5") return PresetId::Fig5Correlation;
  if (name == "fig6") return PresetId::Fig6Nmse;
  throw ValidationError("unknown figure '" + std::string(name) + "' (expected fig2..fig6)");
}

std::string preset_name(PresetId id) {
  switch (id) {
    case PresetId::Fig2Roc: return "fig2";
    case PresetId::Fig3Throughput: return "fig3";
    case PresetId::Fig4Cooperative: return "fig4";
    case PresetId::Fig5Correlation: return "fig5";
    case PresetId::Fig6Nmse: return "fig6";
  }
  return "?";
}

ExperimentPreset make_preset(PresetId id) {
  ExperimentPreset preset{id, {}, ScenarioConfig{}};
  auto& base = preset.base;
  switch (id) {
    case PresetId::Fig2Roc:
      base.detector.approx_mode = ApproxMode::Exact;
      preset.sweep = {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
      break;
    case PresetId::Fig3Throughput:
      preset.sweep = {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};
      break;
    case PresetId::Fig4Cooperative:
      preset.sweep = {1, 2, 3, 5, 10, 15, 20, 25, 30, 35, 40, 50};
      break;
    case PresetId::Fig5Correlation:
      base.pu_su = FadingSpec{LognormalCorrelated{-10.0, 5.0, 0.0}, LinkKind::PuToSu};
      base.su_su = FadingSpec{LognormalCorrelated{10.0, 5.0, 0.0}, LinkKind::SuToSu};
      preset.sweep = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
      break;
    case PresetId::Fig6Nmse:
      preset.sweep = {0.001, 0.01, 0.1, 0.2, 0.5, 1.0};
      break;
  }
  return preset;
}

ScenarioConfig fig3_policy(const ScenarioConfig& base, std::string_view policy, double pmd_target) {
  ScenarioConfig cfg = base;
  cfg.detector.pmd_target = pmd_target;
  const bool capacity = policy == series::kSuCsiFixed || policy == series::kCombinedAdaptive ||
                        policy == series::kSuCsiPerfect;
  const bool adaptive = policy == series::kPuCsiAdaptive || policy == series::kCombinedAdaptive;
  const bool perfect = policy == series::kMyopicPerfect || policy == series::kSuCsiPerfect;
  if (!capacity && !adaptive && !perfect && policy != series::kMyopicFixed)
    throw ValidationError("unknown policy " + std::string(policy));
  cfg.reward_mode = capacity ? RewardMode::Capacity : RewardMode::Bandwidth;
  cfg.detector.threshold_mode = adaptive ? ThresholdMode::Adaptive : ThresholdMode::Fixed;
  cfg.perfect_sensing = perfect;
  return cfg;
}

namespace {

void add_metrics(ResultTable& table, double x, std::string_view name, const Metrics& m) {
  table.add(x, std::string(name), m.su_throughput, m.su_ci95);
  table.add(x, std::string(name) + ".pu", m.pu_throughput, m.pu_ci95);
  table.add(x, std::string(name) + ".miss", m.collision_rate, m.collision_ci95);
}

ResultTable run_fig2(const ExperimentPreset& preset) {
  ResultTable table;
  const double lambda_bar = db_to_linear(std::get<RayleighIid>(preset.base.pu_su.kind).mean_snr_db);
  const auto fixed = roc_curve(RocMode::FixedThreshold, preset.base.detector, lambda_bar, preset.sweep);
  const auto adaptive =
      roc_curve(RocMode::AdaptiveThreshold, preset.base.detector, lambda_bar, preset.sweep);
  for (std::size_t i = 0; i < preset.sweep.size(); ++i) {
    table.add(preset.sweep[i], std::string(series::kFixed), fixed[i].p_fa, 0.0);
    table.add(preset.sweep[i], std::string(series::kAdaptive), adaptive[i].p_fa, 0.0);
  }
  return table;
}

ResultTable run_fig3(const ExperimentPreset& preset, unsigned workers) {
  ResultTable table;
  const std::string_view sensing_policies[] = {series::kMyopicFixed, series::kSuCsiFixed,
                                               series::kPuCsiAdaptive, series::kCombinedAdaptive};
  // Perfect sensing does not depend on the miss-detection target.
  std::map<std::string_view, Metrics> perfect;
  for (auto policy : {series::kMyopicPerfect, series::kSuCsiPerfect})
    perfect[policy] = run_monte_carlo(fig3_policy(preset.base, policy, preset.base.detector.pmd_target), workers);
  for (double target : preset.sweep) {
    for (auto policy : sensing_policies)
      add_metrics(table, target, policy, run_monte_carlo(fig3_policy(preset.base, policy, target), workers));
    for (const auto& [policy, metrics] : perfect) add_metrics(table, target, policy, metrics);
  }
  return table;
}

ResultTable run_fig4(const ExperimentPreset& preset, unsigned workers) {
  ResultTable table;
  ScenarioConfig adaptive = preset.base;
  adaptive.detector.threshold_mode = ThresholdMode::Adaptive;
  const Metrics reference = run_monte_carlo(adaptive, workers);
  for (double L : preset.sweep) {
    ScenarioConfig coop = preset.base;
    coop.detector.threshold_mode = ThresholdMode::Cooperative;
    coop.detector.cooperative_branches = static_cast<int>(L);
    add_metrics(table, L, series::kCooperative, run_monte_carlo(coop, workers));
    add_metrics(table, L, series::kAdaptive, reference);
  }
  return table;
}

ResultTable run_fig5(const ExperimentPreset& preset, unsigned workers) {
  ResultTable table;
  for (double rho : preset.sweep) {
    ScenarioConfig cfg = preset.base;
    std::get<LognormalCorrelated>(cfg.pu_su.kind).rho = rho;
    cfg.detector.threshold_mode = ThresholdMode::Adaptive;
    add_metrics(table, rho, series::kAdaptive, run_monte_carlo(cfg, workers));
    cfg.detector.threshold_mode = ThresholdMode::Fixed;
    add_metrics(table, rho, series::kFixed, run_monte_carlo(cfg, workers));
  }
  return table;
}

ResultTable run_fig6(const ExperimentPreset& preset, unsigned workers) {
  ResultTable table;
  ScenarioConfig perfect_csi = preset.base;
  perfect_csi.detector.threshold_mode = ThresholdMode::Adaptive;
  ScenarioConfig fixed = preset.base;
  fixed.detector.threshold_mode = ThresholdMode::Fixed;
  const Metrics perfect_metrics = run_monte_carlo(perfect_csi, workers);
  const Metrics fixed_metrics = run_monte_carlo(fixed, workers);
  for (double nmse : preset.sweep) {
    ScenarioConfig cfg = preset.base;
    cfg.detector.threshold_mode = ThresholdMode::Mismatched;
    cfg.mismatch = MismatchSpec{nmse};
    add_metrics(table, nmse, series::kMismatched, run_monte_carlo(cfg, workers));
    add_metrics(table, nmse, series::kPerfectCsi, perfect_metrics);
    add_metrics(table, nmse, series::kFixed, fixed_metrics);
  }
  return table;
}

}  // namespace

ResultTable run_preset(const ExperimentPreset& preset, const RunOptions& options) {
  if (preset.sweep.empty()) throw ValidationError("preset sweep must be non-empty");
  for (std::size_t i = 1; i < preset.sweep.size(); ++i)
    if (!(preset.sweep[i] > preset.sweep[i - 1]))
      throw ValidationError("preset sweep must be strictly increasing");
  ExperimentPreset run = preset;
  if (options.replications) run.base.replications = *options.replications;
  if (options.seed) run.base.seed = *options.seed;
  run.base.validate();

  ResultTable table;
  switch (run.id) {
    case PresetId::Fig2Roc: table = run_fig2(run); break;
    case PresetId::Fig3Throughput: table = run_fig3(run, options.workers); break;
    case PresetId::Fig4Cooperative: table = run_fig4(run, options.workers); break;
    case PresetId::Fig5Correlation: table = run_fig5(run, options.workers); break;
    case PresetId::Fig6Nmse: table = run_fig6(run, options.workers); break;
  }
  table.check_complete();
  return table;
}

ResultTable run_scenario(const ScenarioConfig& cfg, unsigned workers) {
  const Metrics m = run_monte_carlo(cfg, workers);
  ResultTable table;
  const double x = cfg.detector.pmd_target;
  table.add(x, "su_throughput", m.su_throughput, m.su_ci95);
  table.add(x, "pu_throughput", m.pu_throughput, m.pu_ci95);
  table.add(x, "collision_rate", m.collision_rate, m.collision_ci95);
  return table;
}

}  // namespace crsense
