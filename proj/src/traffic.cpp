#include "crsense/traffic.hpp"

#include "crsense/errors.hpp"

namespace crsense {

void MarkovChainParams::validate() const {
  if (!(p01 >= 0.0 && p01 <= 1.0)) throw ValidationError("chain.p01 must lie in [0, 1]");
  if (!(p11 >= 0.0 && p11 <= 1.0)) throw ValidationError("chain.p11 must lie in [0, 1]");
  if (p01 + (1.0 - p11) == 0.0)
    throw ValidationError("chain must not have p01 = 0 and p11 = 1 (no stationary distribution)");
}

double stationary_idle_prob(const MarkovChainParams& params) {
  const double denom = params.p01 + (1.0 - params.p11);
  if (denom == 0.0) throw DomainError("stationary_idle_prob: p01 = 0 and p11 = 1 is degenerate");
  return params.p01 / denom;
}

OccupancyState draw_stationary_occupancy(std::span<const MarkovChainParams> params, Rng& rng) {
  OccupancyState state(params.size());
  for (std::size_t n = 0; n < params.size(); ++n)
    state[n] = bernoulli(rng, stationary_idle_prob(params[n])) ? ChannelState::Idle
                                                                : ChannelState::Busy;
  return state;
}

OccupancyState step_occupancy(const OccupancyState& state,
                              std::span<const MarkovChainParams> params, Rng& rng) {
  if (state.size() != params.size())
    throw DomainError("step_occupancy: one chain per channel required");
  OccupancyState next(state.size());
  for (std::size_t n = 0; n < state.size(); ++n) {
    const double p_idle = state[n] == ChannelState::Idle ? params[n].p11 : params[n].p01;
    next[n] = bernoulli(rng, p_idle) ? ChannelState::Idle : ChannelState::Busy;
  }
  return next;
}

}  // namespace crsense
