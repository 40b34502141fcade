#pragma once

// Two-state Markov PU occupancy, one chain per channel.

#include <cstdint>
#include <span>
#include <vector>

#include "crsense/rng.hpp"

namespace crsense {

struct MarkovChainParams {
  double p01 = 0.2;  ///< busy -> idle
  double p11 = 0.8;  ///< idle -> idle

  void validate() const;
};

enum class ChannelState : std::uint8_t { Busy = 0, Idle = 1 };

using OccupancyState = std::vector<ChannelState>;

/// p01 / (p01 + 1 - p11). Throws DomainError when the denominator vanishes.
double stationary_idle_prob(const MarkovChainParams& params);

/// Draws each channel from its stationary distribution.
OccupancyState draw_stationary_occupancy(std::span<const MarkovChainParams> params, Rng& rng);

OccupancyState step_occupancy(const OccupancyState& state,
                              std::span<const MarkovChainParams> params, Rng& rng);

}  // namespace crsense
