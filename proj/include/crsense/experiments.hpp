#pragma once

// Scenario config files, figure presets and CSV result tables.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crsense/simulator.hpp"

namespace crsense {

/// Parses `key = value` lines (`#` starts a comment). Absent keys keep the
/// defaults of ScenarioConfig. Unknown or repeated keys are rejected.
/// Throws ConfigError (with line number) or ValidationError.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Keys accepted by parse_config, excluding the per-channel `chain.<n>.*` form.
const std::vector<std::string>& config_keys();

struct ResultRow {
  double x = 0.0;
  std::string series;
  double mean = 0.0;
  double ci95 = 0.0;
};

class ResultTable {
 public:
  void add(double x, std::string series, double mean, double ci95);
  /// Sorted by x, then series name.
  std::vector<ResultRow> rows() const;
  std::optional<ResultRow> find(double x, std::string_view series) const;
  /// Throws Error unless every (x, series) pair occurs exactly once.
  void check_complete() const;

  /// `x,series,mean,ci95` with 9 significant digits.
  void write_csv(std::ostream& out) const;
  /// Writes atomically; no file is left behind on failure.
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::vector<ResultRow> rows_;
};

enum class PresetId { Fig2Roc, Fig3Throughput, Fig4Cooperative, Fig5Correlation, Fig6Nmse };

struct ExperimentPreset {
  PresetId id;
  std::vector<double> sweep;
  ScenarioConfig base;
};

PresetId parse_preset_id(std::string_view name);  ///< "fig2" ... "fig6"
std::string preset_name(PresetId id);
ExperimentPreset make_preset(PresetId id);

/// Optional overrides applied on top of a preset's base scenario.
struct RunOptions {
  std::optional<int> replications;
  std::optional<std::uint64_t> seed;
  unsigned workers = default_workers();
};

ResultTable run_preset(const ExperimentPreset& preset, const RunOptions& options = {});

/// Single-scenario table: series su_throughput, pu_throughput, collision_rate
/// at x = pmd_target.
ResultTable run_scenario(const ScenarioConfig& cfg, unsigned workers = default_workers());

// Series names used by the presets.
namespace series {
inline constexpr std::string_view kFixed = "fixed";
inline constexpr std::string_view kAdaptive = "adaptive";
inline constexpr std::string_view kMyopicFixed = "myopic_fixed";
inline constexpr std::string_view kSuCsiFixed = "su_csi_fixed";
inline constexpr std::string_view kPuCsiAdaptive = "pu_csi_adaptive";
inline constexpr std::string_view kCombinedAdaptive = "combined_adaptive";
inline constexpr std::string_view kMyopicPerfect = "myopic_perfect";
inline constexpr std::string_view kSuCsiPerfect = "su_csi_perfect";
inline constexpr std::string_view kCooperative = "cooperative";
inline constexpr std::string_view kMismatched = "mismatched";
inline constexpr std::string_view kPerfectCsi = "perfect_csi";
}  // namespace series

/// Scenario for one policy of the fig3 sweep at a given miss-detection target.
ScenarioConfig fig3_policy(const ScenarioConfig& base, std::string_view policy, double pmd_target);

}  // namespace crsense
