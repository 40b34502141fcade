#pragma once

// Per-SU beliefs and myopic channel selection.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "crsense/numerics.hpp"
#include "crsense/rng.hpp"
#include "crsense/traffic.hpp"

namespace crsense {

/// Per-channel probability that the channel is idle, given sensing history.
struct BeliefVector {
  std::vector<double> theta;

  std::size_t size() const noexcept { return theta.size(); }
  friend bool operator==(const BeliefVector&, const BeliefVector&) = default;
};

enum class RewardMode {
  Bandwidth,  ///< R = B
  Capacity,   ///< R = B log2(1 + gamma)
};

struct StrategyConfig {
  RewardMode reward_mode = RewardMode::Bandwidth;
  /// Adaptive and mismatched policies discount the reward by (1 - p_FA(t)).
  ThresholdMode threshold_mode = ThresholdMode::Adaptive;
  double bandwidth = 1.0;

  bool discounts_reward() const noexcept {
    return threshold_mode == ThresholdMode::Adaptive ||
           threshold_mode == ThresholdMode::Mismatched;
  }
  void validate() const;
};

enum class SensedState { Busy = 0, Idle = 1 };

struct SensingResult {
  SensedState a = SensedState::Idle;
  double p_fa_used = 0.0;
  double p_md_used = 0.0;
};

BeliefVector belief_init(std::span<const MarkovChainParams> params);

/// Reward before weighting by the belief.
double compute_reward(const StrategyConfig& cfg, double gamma, double p_fa_inst);

/// argmax_n theta_n * rewards_n; ties are broken uniformly at random.
std::size_t select_channel(const BeliefVector& belief, std::span<const double> rewards, Rng& rng);

/// Posterior idle probability after observing `result` on a channel with
/// prior `theta`. Throws DomainError if the observation has zero likelihood.
double belief_correct(double theta, const SensingResult& result);

struct CorrectedBelief {
  std::size_t channel = 0;
  double theta = 0.0;
};

/// One Markov step of every entry; the sensed channel (if any) starts from its
/// corrected value.
BeliefVector belief_propagate(const BeliefVector& belief, std::optional<CorrectedBelief> corrected,
                              std::span<const MarkovChainParams> params);

}  // namespace crsense
