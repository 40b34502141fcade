#pragma once

// Slotted multi-SU, multichannel overlay MAC simulation.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "crsense/channel.hpp"
#include "crsense/numerics.hpp"
#include "crsense/rng.hpp"
#include "crsense/strategy.hpp"
#include "crsense/traffic.hpp"

namespace crsense {

/// How a sensing outcome is produced: a Bernoulli draw from the computed
/// detection probabilities, or a simulated energy statistic compared with tau.
enum class SensingOracle { Bernoulli, DecisionStatistic };

struct ScenarioConfig {
  int num_sus = 20;
  int num_channels = 40;
  int num_slots = 20;
  MarkovChainParams chain{};
  /// Per-channel overrides of `chain`, keyed by 0-based channel index.
  std::map<int, MarkovChainParams> chain_overrides;
  double pu_snr_db = 10.0;  ///< PU-to-PU mean SNR (Rayleigh)
  FadingSpec pu_su{RayleighIid{-10.0}, LinkKind::PuToSu};
  FadingSpec su_su{RayleighIid{10.0}, LinkKind::SuToSu};
  DetectorConfig detector{};
  RewardMode reward_mode = RewardMode::Bandwidth;
  double bandwidth = 1.0;
  std::optional<MismatchSpec> mismatch;
  /// Error-free sensing (p_FA = p_MD = 0) reference.
  bool perfect_sensing = false;
  SensingOracle oracle = SensingOracle::Bernoulli;
  int replications = 500;
  std::uint64_t seed = 1;

  std::vector<MarkovChainParams> chains() const;
  StrategyConfig strategy() const;
  /// Throws ValidationError naming the violated invariant.
  void validate() const;
};

/// Detection quantities for one (SU, channel) pair in one slot.
struct SensingPlan {
  Threshold tau{};
  double p_fa = 0.0;  ///< false-alarm probability the SU works with
  double p_md = 0.0;  ///< miss probability the SU works with (target or average)
};

/// Per-scenario detector state: fixed thresholds and the mismatched-CSI
/// threshold table are computed once and shared read-only by all replications.
class DetectorContext {
 public:
  explicit DetectorContext(const ScenarioConfig& cfg);

  /// Plan given the true SNR and (mismatched mode only) its observation.
  SensingPlan plan(double lambda, double lambda_hat) const;
  /// Probability that the sensor reports idle on a busy channel.
  double miss_probability(const SensingPlan& plan, std::span<const double> branch_snrs) const;

  const DetectorConfig& detector() const noexcept { return detector_; }
  bool varies_per_link() const noexcept;
  int branches() const noexcept;
  bool perfect() const noexcept { return perfect_; }

 private:
  Threshold mismatched_threshold(double lambda_hat) const;

  DetectorConfig detector_;
  bool perfect_ = false;
  SensingPlan constant_plan_{};
  double nmse_ = 0.0;
  double lambda_bar_ = 0.0;
  double table_step_ = 0.0;
  std::vector<double> table_tau_;
};

struct SimulationState {
  OccupancyState occupancy;
  std::vector<BeliefVector> beliefs;
  int slot = 0;
};

SimulationState initial_state(const ScenarioConfig& cfg, Rng& rng);

struct SuSlotOutcome {
  std::size_t channel = 0;
  SensedState sensed = SensedState::Busy;
  bool truly_idle = false;
  bool transmitted = false;
  bool success = false;
  double rate = 0.0;

  friend bool operator==(const SuSlotOutcome&, const SuSlotOutcome&) = default;
};

struct ChannelSlotOutcome {
  bool pu_active = false;
  bool pu_collided = false;
  double pu_rate = 0.0;

  friend bool operator==(const ChannelSlotOutcome&, const ChannelSlotOutcome&) = default;
};

struct SlotRecord {
  std::vector<SuSlotOutcome> sus;
  std::vector<ChannelSlotOutcome> channels;

  friend bool operator==(const SlotRecord&, const SlotRecord&) = default;
};

struct Metrics {
  double su_throughput = 0.0;   ///< bits / slot / SU
  double pu_throughput = 0.0;   ///< bits / slot / channel
  double collision_rate = 0.0;  ///< missed / PU-busy sensed slots
  double su_ci95 = 0.0;
  double pu_ci95 = 0.0;
  double collision_ci95 = 0.0;
  std::uint64_t busy_sensed = 0;
  std::uint64_t missed = 0;
  int replications = 1;
};

/// Advances one slot: PU step, fading draw, channel choice, sensing,
/// contention, belief update, PU accounting.
SlotRecord run_slot(SimulationState& state, const ScenarioConfig& cfg, const DetectorContext& ctx,
                    Rng& rng);

Metrics summarize(const ScenarioConfig& cfg, const std::vector<SlotRecord>& slots);

struct EpisodeResult {
  std::vector<SlotRecord> slots;
  Metrics metrics;
};

EpisodeResult run_episode(const ScenarioConfig& cfg, const DetectorContext& ctx, Rng& rng);
/// Same as replication 0 of run_monte_carlo with this seed.
EpisodeResult run_episode(const ScenarioConfig& cfg, std::uint64_t seed);

/// Worker count from CRSENSE_WORKERS, else the hardware concurrency.
unsigned default_workers();

/// Replication r runs on make_stream(cfg.seed, r). Mean and 95% normal CI over
/// replication means; the collision rate is pooled over all sensed slots.
Metrics run_monte_carlo(const ScenarioConfig& cfg, unsigned workers = default_workers());
Metrics run_monte_carlo(const ScenarioConfig& cfg, const DetectorContext& ctx, unsigned workers);

/// Aggregates per-replication metrics (order-independent up to rounding;
/// callers pass them in replication order).
Metrics aggregate(const std::vector<Metrics>& episodes);

}  // namespace crsense
