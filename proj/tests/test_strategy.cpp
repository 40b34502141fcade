#include <array>
#include <cmath>
#include <vector>

#include "crsense/errors.hpp"
#include "crsense/strategy.hpp"
#include "doctest.h"

using namespace crsense;

TEST_CASE("belief initialization") {
  const std::vector<MarkovChainParams> same(4, MarkovChainParams{0.2, 0.8});
  for (double theta : belief_init(same).theta) CHECK(theta == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<MarkovChainParams> absorbing(2, MarkovChainParams{1.0, 1.0});
  CHECK(belief_init(absorbing).theta == std::vector<double>(2, 1.0));
  const std::vector<MarkovChainParams> mixed{{0.2, 0.8}, {0.1, 0.6}};
  CHECK(belief_init(mixed).theta[1] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("reward variants") {
  StrategyConfig cfg;
  cfg.reward_mode = RewardMode::Capacity;
  cfg.threshold_mode = ThresholdMode::Fixed;
  CHECK(compute_reward(cfg, 1.0, 0.7) == 1.0);
  cfg.bandwidth = 2.0;
  CHECK(compute_reward(cfg, 3.0, 0.0) == 4.0);
  cfg.threshold_mode = ThresholdMode::Adaptive;
  CHECK(compute_reward(cfg, 3.0, 0.0) == 4.0);
  CHECK(compute_reward(cfg, 3.0, 1.0) == 0.0);
  CHECK(compute_reward(cfg, 3.0, 0.25) == 3.0);
  cfg.threshold_mode = ThresholdMode::Mismatched;
  CHECK(compute_reward(cfg, 3.0, 0.5) == 2.0);
  cfg.threshold_mode = ThresholdMode::Cooperative;
  CHECK(compute_reward(cfg, 3.0, 0.5) == 4.0);
  cfg.reward_mode = RewardMode::Bandwidth;
  CHECK(compute_reward(cfg, 100.0, 0.5) == 2.0);
  CHECK_THROWS_AS(compute_reward(cfg, -1.0, 0.5), DomainError);
  CHECK_THROWS_AS(compute_reward(cfg, 1.0, 1.5), DomainError);
  cfg.bandwidth = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("channel selection") {
  Rng rng = make_stream(31, 0);
  const std::array<double, 2> ones{1.0, 1.0};
  CHECK(select_channel({{0.5, 0.9}}, ones, rng) == 1);
  const std::array<double, 2> r{1.0, 2.0};
  CHECK(select_channel({{0.9, 0.5}}, r, rng) == 1);
  CHECK_THROWS_AS(select_channel({}, std::span<const double>{}, rng), DomainError);
  CHECK_THROWS_AS(select_channel({{0.5}}, ones, rng), DomainError);
}

TEST_CASE("ties are broken uniformly") {
  Rng rng = make_stream(32, 0);
  const BeliefVector belief{{0.5, 0.25, 0.5, 0.5, 0.1}};
  const std::array<double, 5> rewards{1.0, 2.0, 1.0, 1.0, 3.0};
  constexpr int kTrials = 100'000;
  std::array<int, 5> counts{};
  for (int i = 0; i < kTrials; ++i) ++counts[select_channel(belief, rewards, rng)];
  CHECK(counts[4] == 0);
  const double p = 0.25;
  const double sigma = std::sqrt(p * (1 - p) / kTrials);
  for (int n : {0, 1, 2, 3}) CHECK(std::abs(double(counts[n]) / kTrials - p) < 3.0 * sigma);
}

TEST_CASE("argmax is invariant to reward scaling") {
  // Dyadic values keep the three-way tie exact after scaling.
  const BeliefVector belief{{0.25, 0.5, 0.5, 0.125, 0.75}};
  const std::vector<double> rewards{2.0, 1.5, 1.5, 6.0, 0.5};
  for (double scale : {0x1p-20, 0.375, 3.0, 1024.0}) {
    std::vector<double> scaled;
    for (double v : rewards) scaled.push_back(v * scale);
    Rng a = make_stream(33, 0);
    Rng b = make_stream(33, 0);
    for (int i = 0; i < 1000; ++i)
      REQUIRE(select_channel(belief, rewards, a) == select_channel(belief, scaled, b));
  }
}

TEST_CASE("Bayes correction") {
  const auto idle = [](double pfa, double pmd) {
    return SensingResult{SensedState::Idle, pfa, pmd};
  };
  const auto busy = [](double pfa, double pmd) {
    return SensingResult{SensedState::Busy, pfa, pmd};
  };
  CHECK(belief_correct(0.3, idle(0.0, 0.0)) == 1.0);
  CHECK(belief_correct(0.3, busy(0.0, 0.0)) == 0.0);
  CHECK(belief_correct(0.5, idle(0.2, 0.1)) == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  CHECK(belief_correct(0.5, busy(0.2, 0.1)) == doctest::Approx(0.2 / 1.1).epsilon(1e-15));
  for (double theta : {0.0, 0.1, 0.5, 0.93, 1.0}) {
    for (double pfa : {0.05, 0.4, 0.8}) {
      CHECK(belief_correct(theta, idle(pfa, 1.0 - pfa)) == doctest::Approx(theta).epsilon(1e-14));
      CHECK(belief_correct(theta, busy(pfa, 1.0 - pfa)) == doctest::Approx(theta).epsilon(1e-14));
    }
  }
  // Sensing idle under p_FA = 1 is impossible for an idle channel; with
  // theta = 1 nothing else can explain it.
  CHECK_THROWS_AS(belief_correct(1.0, idle(1.0, 0.3)), DomainError);
  CHECK_THROWS_AS(belief_correct(0.0, busy(0.2, 1.0)), DomainError);
  CHECK_THROWS_AS(belief_correct(1.2, idle(0.2, 0.1)), DomainError);
}

TEST_CASE("constant instantaneous p_FA reproduces the fixed update bit for bit") {
  // The adaptive detector reports p_FA(t) per slot; with the same value every
  // slot, the belief trajectory equals the one driven by the average.
  const std::vector<MarkovChainParams> params(3, MarkovChainParams{0.2, 0.8});
  Rng rng = make_stream(34, 0);
  BeliefVector fixed = belief_init(params);
  BeliefVector adaptive = fixed;
  const double pfa = 0.31;
  const double pmd = 0.1;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = std::size_t(t % 3);
    const auto a = bernoulli(rng, 0.5) ? SensedState::Idle : SensedState::Busy;
    const SensingResult fixed_result{a, pfa, pmd};
    SensingResult adaptive_result;
    adaptive_result.a = a;
    adaptive_result.p_fa_used = 0.31;
    adaptive_result.p_md_used = pmd;
    fixed = belief_propagate(fixed, CorrectedBelief{n, belief_correct(fixed.theta[n], fixed_result)},
                             params);
    adaptive = belief_propagate(
        adaptive, CorrectedBelief{n, belief_correct(adaptive.theta[n], adaptive_result)}, params);
    REQUIRE(fixed == adaptive);
  }
}

TEST_CASE("propagation") {
  const std::vector<MarkovChainParams> params{{0.2, 0.8}, {1.0, 1.0}, {0.1, 0.6}};
  const BeliefVector stationary = belief_init(params);
  const auto same = belief_propagate(stationary, std::nullopt, params);
  for (std::size_t n = 0; n < 3; ++n)
    CHECK(same.theta[n] == doctest::Approx(stationary.theta[n]).epsilon(1e-15));

  const std::vector<MarkovChainParams> p2(2, MarkovChainParams{0.2, 0.8});
  const auto ends = belief_propagate({{1.0, 0.0}}, std::nullopt, p2);
  CHECK(ends.theta[0] == doctest::Approx(0.8));
  CHECK(ends.theta[1] == doctest::Approx(0.2));

  const auto identity =
      belief_propagate({{0.37}}, std::nullopt, std::vector{MarkovChainParams{0.0, 1.0}});
  CHECK(identity.theta[0] == 0.37);

  // Only the sensed entry starts from its corrected value.
  const auto corrected = belief_propagate({{0.5, 0.5}}, CorrectedBelief{1, 1.0}, p2);
  CHECK(corrected.theta[0] == doctest::Approx(0.5));
  CHECK(corrected.theta[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(belief_propagate({{0.5}}, std::nullopt, p2), DomainError);
}

TEST_CASE("beliefs stay in range under random updates") {
  Rng rng = make_stream(35, 0);
  const std::vector<MarkovChainParams> params{{0.2, 0.8}, {0.05, 0.9}, {0.3, 0.35}};
  BeliefVector belief = belief_init(params);
  for (int t = 0; t < 100'000; ++t) {
    const std::size_t n = std::size_t(rng() % 3);
    const SensingResult result{bernoulli(rng, 0.5) ? SensedState::Idle : SensedState::Busy,
                               0.01 + 0.98 * uniform01(rng), 0.01 + 0.98 * uniform01(rng)};
    const double theta_r = belief_correct(belief.theta[n], result);
    REQUIRE((theta_r >= 0.0 && theta_r <= 1.0));
    belief = belief_propagate(belief, CorrectedBelief{n, theta_r}, params);
    for (std::size_t k = 0; k < 3; ++k) {
      REQUIRE(belief.theta[k] >= params[k].p01 - 1e-15);
      REQUIRE(belief.theta[k] <= params[k].p11 + 1e-15);
    }
  }
}

TEST_CASE("belief is calibrated on a synthetic channel") {
  Rng rng = make_stream(36, 0);
  const std::vector<MarkovChainParams> params{{0.2, 0.8}};
  const double pfa = 0.2;
  const double pmd = 0.1;
  OccupancyState state = draw_stationary_occupancy(params, rng);
  BeliefVector belief = belief_init(params);
  long hits = 0;
  long idle_hits = 0;
  double theta_sum = 0.0;
  for (int t = 0; t < 1'000'000; ++t) {
    const bool idle = state[0] == ChannelState::Idle;
    const double theta = belief.theta[0];
    if (theta >= 0.7 && theta <= 0.8) {
      ++hits;
      theta_sum += theta;
      if (idle) ++idle_hits;
    }
    const bool sensed_idle = idle ? !bernoulli(rng, pfa) : bernoulli(rng, pmd);
    const SensingResult result{sensed_idle ? SensedState::Idle : SensedState::Busy, pfa, pmd};
    belief = belief_propagate(belief, CorrectedBelief{0, belief_correct(theta, result)}, params);
    state = step_occupancy(state, params, rng);
  }
  REQUIRE(hits > 10'000);
  const double freq = double(idle_hits) / double(hits);
  const double predicted = theta_sum / double(hits);
  const double sigma = std::sqrt(predicted * (1.0 - predicted) / double(hits));
  CHECK(freq >= 0.7 - 3.0 * sigma);
  CHECK(freq <= 0.8 + 3.0 * sigma);
  CHECK(std::abs(freq - predicted) < 3.0 * sigma);
}
