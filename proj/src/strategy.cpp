#include "crsense/strategy.hpp"

#include <cmath>

#include "crsense/errors.hpp"

namespace crsense {

void StrategyConfig::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw ValidationError("strategy.bandwidth must be > 0");
}

BeliefVector belief_init(std::span<const MarkovChainParams> params) {
  BeliefVector belief;
  belief.theta.reserve(params.size());
  for (const auto& p : params) belief.theta.push_back(stationary_idle_prob(p));
  return belief;
}

double compute_reward(const StrategyConfig& cfg, double gamma, double p_fa_inst) {
  if (gamma < 0.0) throw DomainError("compute_reward: gamma must be >= 0");
  if (!(p_fa_inst >= 0.0 && p_fa_inst <= 1.0))
    throw DomainError("compute_reward: p_fa must lie in [0, 1]");
  const double base = cfg.reward_mode == RewardMode::Bandwidth
                          ? cfg.bandwidth
                          : cfg.bandwidth * std::log2(1.0 + gamma);
  return cfg.discounts_reward() ? (1.0 - p_fa_inst) * base : base;
}

std::size_t select_channel(const BeliefVector& belief, std::span<const double> rewards, Rng& rng) {
  if (rewards.empty()) throw DomainError("select_channel: no channels");
  if (rewards.size() != belief.size())
    throw DomainError("select_channel: belief and rewards differ in length");
  double best = -1.0;
  std::size_t first = 0;
  std::size_t ties = 0;
  for (std::size_t n = 0; n < rewards.size(); ++n) {
    const double value = belief.theta[n] * rewards[n];
    if (value > best) {
      best = value;
      first = n;
      ties = 1;
    } else if (value == best) {
      ++ties;
    }
  }
  if (ties == 1) return first;
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, ties - 1)(rng);
  for (std::size_t n = first; n < rewards.size(); ++n) {
    if (belief.theta[n] * rewards[n] == best) {
      if (pick == 0) return n;
      --pick;
    }
  }
  return first;  // unreachable
}

double belief_correct(double theta, const SensingResult& result) {
  const double p_fa = result.p_fa_used;
  const double p_md = result.p_md_used;
  if (!(theta >= 0.0 && theta <= 1.0 && p_fa >= 0.0 && p_fa <= 1.0 && p_md >= 0.0 && p_md <= 1.0))
    throw DomainError("belief_correct: inputs must lie in [0, 1]");
  const double idle_likelihood = result.a == SensedState::Idle ? 1.0 - p_fa : p_fa;
  const double busy_likelihood = result.a == SensedState::Idle ? p_md : 1.0 - p_md;
  const double numerator = idle_likelihood * theta;
  const double denominator = numerator + busy_likelihood * (1.0 - theta);
  if (denominator <= 0.0)
    throw DomainError("belief_correct: observation has zero probability under the model");
  return numerator / denominator;
}

BeliefVector belief_propagate(const BeliefVector& belief, std::optional<CorrectedBelief> corrected,
                              std::span<const MarkovChainParams> params) {
  if (params.size() != belief.size())
    throw DomainError("belief_propagate: one chain per channel required");
  BeliefVector next;
  next.theta.resize(belief.size());
  for (std::size_t n = 0; n < belief.size(); ++n) {
    const double x = corrected && corrected->channel == n ? corrected->theta : belief.theta[n];
    next.theta[n] = params[n].p11 * x + params[n].p01 * (1.0 - x);
  }
  return next;
}

}  // namespace crsense
