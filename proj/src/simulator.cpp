#include "crsense/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "crsense/errors.hpp"

namespace crsense {

namespace {

// Mismatched thresholds are tabulated over [0, kTableSpan * lambda_bar].
constexpr double kTableSpan = 40.0;
constexpr std::size_t kTableIntervals = 1024;
constexpr double kZ95 = 1.959963984540054;

double rayleigh_mean(const FadingSpec& spec) {
  return db_to_linear(std::get<RayleighIid>(spec.kind).mean_snr_db);
}

SnrDistribution marginal(const FadingSpec& spec) {
  if (const auto* r = std::get_if<RayleighIid>(&spec.kind))
    return RayleighSnr{db_to_linear(r->mean_snr_db)};
  const auto& lg = std::get<LognormalCorrelated>(spec.kind);
  return LognormalSnr{lg.mu_db, lg.sigma_db};
}

// One draw from the PU-to-SU marginal (used for extra cooperative branches).
double draw_branch_snr(const FadingSpec& spec, Rng& rng) {
  if (const auto* r = std::get_if<RayleighIid>(&spec.kind))
    return std::exponential_distribution<double>(1.0 / db_to_linear(r->mean_snr_db))(rng);
  const auto& lg = std::get<LognormalCorrelated>(spec.kind);
  return db_to_linear(lg.mu_db + lg.sigma_db * std::normal_distribution<double>(0.0, 1.0)(rng));
}

}  // namespace

// ---- ScenarioConfig ----------------------------------------------------------

std::vector<MarkovChainParams> ScenarioConfig::chains() const {
  std::vector<MarkovChainParams> out(static_cast<std::size_t>(std::max(num_channels, 0)), chain);
  for (const auto& [n, params] : chain_overrides)
    if (n >= 0 && n < num_channels) out[static_cast<std::size_t>(n)] = params;
  return out;
}

StrategyConfig ScenarioConfig::strategy() const {
  return StrategyConfig{reward_mode, detector.threshold_mode, bandwidth};
}

void ScenarioConfig::validate() const {
  if (num_sus < 1) throw ValidationError("M must be >= 1");
  if (num_channels < 1) throw ValidationError("N must be >= 1");
  if (num_slots < 1) throw ValidationError("T must be >= 1");
  if (replications < 1) throw ValidationError("replications must be >= 1");
  chain.validate();
  for (const auto& [n, params] : chain_overrides) {
    if (n < 0 || n >= num_channels)
      throw ValidationError("chain override for channel " + std::to_string(n + 1) +
                            " exceeds N");
    params.validate();
  }
  if (!std::isfinite(pu_snr_db)) throw ValidationError("pu_snr_db must be finite");
  if (pu_su.applies_to != LinkKind::PuToSu) throw ValidationError("fading.pu_su must be PU-to-SU");
  if (su_su.applies_to != LinkKind::SuToSu) throw ValidationError("fading.su_su must be SU-to-SU");
  pu_su.validate();
  su_su.validate();
  detector.validate();
  strategy().validate();
  const bool mismatched = detector.threshold_mode == ThresholdMode::Mismatched;
  if (mismatched && !mismatch)
    throw ValidationError("mismatch.nmse is required for threshold_mode = mismatched");
  if (mismatch) {
    if (!(mismatch->nmse >= 0.0 && mismatch->nmse <= 1.0))
      throw ValidationError("mismatch.nmse must lie in [0, 1]");
    if (!mismatched)
      throw ValidationError("mismatch.nmse requires detector.threshold_mode = mismatched");
    if (!std::holds_alternative<RayleighIid>(pu_su.kind))
      throw ValidationError("mismatched CSI requires fading.pu_su.kind = rayleigh");
  }
}

// ---- DetectorContext -----------------------------------------------------------

DetectorContext::DetectorContext(const ScenarioConfig& cfg)
    : detector_(cfg.detector), perfect_(cfg.perfect_sensing) {
  cfg.validate();
  if (perfect_) return;
  switch (detector_.threshold_mode) {
    case ThresholdMode::Fixed: {
      const Threshold tau = threshold_fixed(detector_, marginal(cfg.pu_su));
      constant_plan_ = SensingPlan{tau, pfa_from_threshold(detector_, tau), detector_.pmd_target};
      break;
    }
    case ThresholdMode::Cooperative: {
      const int L = detector_.cooperative_branches;
      const Threshold tau = threshold_cooperative(detector_, marginal(cfg.pu_su), L);
      const auto fused = fusion_or({detector_.pmd_target, pfa_from_threshold(detector_, tau)}, L);
      constant_plan_ = SensingPlan{tau, fused.p_fa, detector_.pmd_target};
      break;
    }
    case ThresholdMode::Adaptive:
      break;
    case ThresholdMode::Mismatched: {
      nmse_ = cfg.mismatch->nmse;
      lambda_bar_ = rayleigh_mean(cfg.pu_su);
      if (nmse_ == 0.0) break;
      table_step_ = kTableSpan * lambda_bar_ / static_cast<double>(kTableIntervals);
      table_tau_.resize(kTableIntervals + 1);
      for (std::size_t i = 0; i <= kTableIntervals; ++i)
        table_tau_[i] =
            threshold_mismatched(detector_, table_step_ * static_cast<double>(i), nmse_, lambda_bar_)
                .tau;
      break;
    }
  }
}

bool DetectorContext::varies_per_link() const noexcept {
  return !perfect_ && (detector_.threshold_mode == ThresholdMode::Adaptive ||
                       detector_.threshold_mode == ThresholdMode::Mismatched);
}

int DetectorContext::branches() const noexcept {
  return !perfect_ && detector_.threshold_mode == ThresholdMode::Cooperative
             ? detector_.cooperative_branches
             : 1;
}

Threshold DetectorContext::mismatched_threshold(double lambda_hat) const {
  if (nmse_ == 0.0) return threshold_adaptive(detector_, lambda_hat);
  if (std::isinf(table_tau_.front())) return Threshold{table_tau_.front()};
  const double pos = lambda_hat / table_step_;
  if (pos >= static_cast<double>(kTableIntervals))
    return threshold_mismatched(detector_, lambda_hat, nmse_, lambda_bar_);
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return Threshold{table_tau_[i] + frac * (table_tau_[i + 1] - table_tau_[i])};
}

SensingPlan DetectorContext::plan(double lambda, double lambda_hat) const {
  if (perfect_) return SensingPlan{Threshold{0.0}, 0.0, 0.0};
  switch (detector_.threshold_mode) {
    case ThresholdMode::Fixed:
    case ThresholdMode::Cooperative:
      return constant_plan_;
    case ThresholdMode::Adaptive: {
      const Threshold tau = threshold_adaptive(detector_, lambda);
      return SensingPlan{tau, pfa_from_threshold(detector_, tau), detector_.pmd_target};
    }
    case ThresholdMode::Mismatched: {
      const Threshold tau = mismatched_threshold(lambda_hat);
      return SensingPlan{tau, pfa_from_threshold(detector_, tau), detector_.pmd_target};
    }
  }
  return constant_plan_;
}

double DetectorContext::miss_probability(const SensingPlan& plan,
                                         std::span<const double> branch_snrs) const {
  if (perfect_) return 0.0;
  double p = 1.0;
  for (double snr : branch_snrs) p *= pmd_instantaneous(detector_, snr, plan.tau);
  return p;
}

// ---- simulation ------------------------------------------------------------------

SimulationState initial_state(const ScenarioConfig& cfg, Rng& rng) {
  const auto chains = cfg.chains();
  SimulationState state;
  state.occupancy = draw_stationary_occupancy(chains, rng);
  state.beliefs.assign(static_cast<std::size_t>(cfg.num_sus), belief_init(chains));
  return state;
}

SlotRecord run_slot(SimulationState& state, const ScenarioConfig& cfg, const DetectorContext& ctx,
                    Rng& rng) {
  const auto M = static_cast<std::size_t>(cfg.num_sus);
  const auto N = static_cast<std::size_t>(cfg.num_channels);
  const auto chains = cfg.chains();
  const StrategyConfig strategy = cfg.strategy();

  // (1) PU traffic
  state.occupancy = step_occupancy(state.occupancy, chains, rng);

  // (2) fading
  GainField gains;
  if (cfg.mismatch && cfg.mismatch->nmse > 0.0 && !ctx.perfect()) {
    const double mean = rayleigh_mean(cfg.pu_su);
    gains.lambda = SnrGrid(M, N);
    gains.lambda_hat = SnrGrid(M, N);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n) {
        const auto [actual, observed] = draw_mismatched_pair(mean, cfg.mismatch->nmse, rng);
        gains.lambda(m, n) = actual;
        (*gains.lambda_hat)(m, n) = observed;
      }
  } else {
    gains.lambda = draw_field(cfg.pu_su, M, N, rng);
  }
  gains.gamma = draw_field(cfg.su_su, M, N, rng);
  const SnrGrid& observed_grid = gains.lambda_hat ? *gains.lambda_hat : gains.lambda;
  const auto observed = [&](std::size_t m, std::size_t n) { return observed_grid(m, n); };

  SlotRecord record;
  record.sus.resize(M);
  record.channels.resize(N);
  std::vector<SensingPlan> plans(M);
  std::vector<double> rewards(N);
  std::vector<double> branch_snrs;

  for (std::size_t m = 0; m < M; ++m) {
    // (3) rewards and channel choice
    std::vector<SensingPlan> row;
    if (ctx.varies_per_link()) {
      row.reserve(N);
      for (std::size_t n = 0; n < N; ++n) row.push_back(ctx.plan(gains.lambda(m, n), observed(m, n)));
    }
    for (std::size_t n = 0; n < N; ++n) {
      const double p_fa = ctx.varies_per_link() ? row[n].p_fa : 0.0;
      rewards[n] = compute_reward(strategy, gains.gamma(m, n), p_fa);
    }
    const std::size_t chosen = select_channel(state.beliefs[m], rewards, rng);
    plans[m] = ctx.varies_per_link() ? row[chosen] : ctx.plan(gains.lambda(m, chosen), observed(m, chosen));

    // (4) sensing
    const bool idle = state.occupancy[chosen] == ChannelState::Idle;
    const double lambda_true = gains.lambda(m, chosen);
    branch_snrs.assign(1, lambda_true);
    for (int l = 1; l < ctx.branches(); ++l) branch_snrs.push_back(draw_branch_snr(cfg.pu_su, rng));

    bool sensed_idle = false;
    if (ctx.perfect()) {
      sensed_idle = idle;
    } else if (cfg.oracle == SensingOracle::Bernoulli) {
      sensed_idle = idle ? !bernoulli(rng, plans[m].p_fa)
                         : bernoulli(rng, ctx.miss_probability(plans[m], branch_snrs));
    } else {
      sensed_idle = true;
      for (double snr : branch_snrs) {
        const double s = simulate_decision_statistic(ctx.detector(), idle ? 0.0 : snr, rng);
        if (s > plans[m].tau.tau) sensed_idle = false;
      }
    }
    auto& su = record.sus[m];
    su.channel = chosen;
    su.sensed = sensed_idle ? SensedState::Idle : SensedState::Busy;
    su.truly_idle = idle;
    su.transmitted = sensed_idle;
  }

  // (5) contention
  std::vector<std::vector<std::size_t>> transmitters(N);
  for (std::size_t m = 0; m < M; ++m)
    if (record.sus[m].transmitted) transmitters[record.sus[m].channel].push_back(m);
  for (std::size_t n = 0; n < N; ++n) {
    auto& ch = record.channels[n];
    ch.pu_active = state.occupancy[n] == ChannelState::Busy;
    if (transmitters[n].empty()) continue;
    if (ch.pu_active) {
      ch.pu_collided = true;
      continue;
    }
    const std::size_t pick =
        std::uniform_int_distribution<std::size_t>(0, transmitters[n].size() - 1)(rng);
    const std::size_t winner = transmitters[n][pick];
    record.sus[winner].success = true;
    record.sus[winner].rate = cfg.bandwidth * std::log2(1.0 + gains.gamma(winner, n));
  }

  // (6) beliefs
  for (std::size_t m = 0; m < M; ++m) {
    const auto& su = record.sus[m];
    const SensingResult result{su.sensed, plans[m].p_fa, plans[m].p_md};
    const double corrected = belief_correct(state.beliefs[m].theta[su.channel], result);
    state.beliefs[m] = belief_propagate(state.beliefs[m], CorrectedBelief{su.channel, corrected}, chains);
  }

  // (7) PU accounting
  std::exponential_distribution<double> pu_snr(1.0 / db_to_linear(cfg.pu_snr_db));
  for (auto& ch : record.channels)
    if (ch.pu_active && !ch.pu_collided) ch.pu_rate = cfg.bandwidth * std::log2(1.0 + pu_snr(rng));

  ++state.slot;
  return record;
}

Metrics summarize(const ScenarioConfig& cfg, const std::vector<SlotRecord>& slots) {
  Metrics metrics;
  double su_total = 0.0;
  double pu_total = 0.0;
  for (const auto& slot : slots) {
    for (const auto& su : slot.sus) {
      su_total += su.rate;
      if (!su.truly_idle) {
        ++metrics.busy_sensed;
        if (su.sensed == SensedState::Idle) ++metrics.missed;
      }
    }
    for (const auto& ch : slot.channels) pu_total += ch.pu_rate;
  }
  const double T = static_cast<double>(slots.size());
  metrics.su_throughput = su_total / (cfg.num_sus * T);
  metrics.pu_throughput = pu_total / (cfg.num_channels * T);
  metrics.collision_rate = metrics.busy_sensed == 0
                               ? 0.0
                               : static_cast<double>(metrics.missed) /
                                     static_cast<double>(metrics.busy_sensed);
  return metrics;
}

EpisodeResult run_episode(const ScenarioConfig& cfg, const DetectorContext& ctx, Rng& rng) {
  EpisodeResult result;
  SimulationState state = initial_state(cfg, rng);
  result.slots.reserve(static_cast<std::size_t>(cfg.num_slots));
  for (int t = 0; t < cfg.num_slots; ++t) result.slots.push_back(run_slot(state, cfg, ctx, rng));
  result.metrics = summarize(cfg, result.slots);
  return result;
}

EpisodeResult run_episode(const ScenarioConfig& cfg, std::uint64_t seed) {
  const DetectorContext ctx(cfg);
  Rng rng = make_stream(seed, 0);
  return run_episode(cfg, ctx, rng);
}

unsigned default_workers() {
  if (const char* env = std::getenv("CRSENSE_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Metrics aggregate(const std::vector<Metrics>& episodes) {
  Metrics out;
  const auto R = static_cast<double>(episodes.size());
  out.replications = static_cast<int>(episodes.size());
  if (episodes.empty()) return out;
  double su_sum = 0.0, pu_sum = 0.0;
  for (const auto& e : episodes) {
    su_sum += e.su_throughput;
    pu_sum += e.pu_throughput;
    out.busy_sensed += e.busy_sensed;
    out.missed += e.missed;
  }
  out.su_throughput = su_sum / R;
  out.pu_throughput = pu_sum / R;
  if (episodes.size() >= 2) {
    double su_ss = 0.0, pu_ss = 0.0;
    for (const auto& e : episodes) {
      su_ss += (e.su_throughput - out.su_throughput) * (e.su_throughput - out.su_throughput);
      pu_ss += (e.pu_throughput - out.pu_throughput) * (e.pu_throughput - out.pu_throughput);
    }
    out.su_ci95 = kZ95 * std::sqrt(su_ss / (R - 1.0) / R);
    out.pu_ci95 = kZ95 * std::sqrt(pu_ss / (R - 1.0) / R);
  }
  if (out.busy_sensed > 0) {
    const double n = static_cast<double>(out.busy_sensed);
    out.collision_rate = static_cast<double>(out.missed) / n;
    out.collision_ci95 = kZ95 * std::sqrt(out.collision_rate * (1.0 - out.collision_rate) / n);
  }
  return out;
}

Metrics run_monte_carlo(const ScenarioConfig& cfg, const DetectorContext& ctx, unsigned workers) {
  cfg.validate();
  const auto R = static_cast<std::size_t>(cfg.replications);
  std::vector<Metrics> episodes(R);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  const auto work = [&] {
    for (std::size_t r = next++; r < R && !failed; r = next++) {
      try {
        Rng rng = make_stream(cfg.seed, r);
        SimulationState state = initial_state(cfg, rng);
        std::vector<SlotRecord> slots;
        slots.reserve(static_cast<std::size_t>(cfg.num_slots));
        for (int t = 0; t < cfg.num_slots; ++t) slots.push_back(run_slot(state, cfg, ctx, rng));
        episodes[r] = summarize(cfg, slots);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(std::max<std::size_t>(R, 1)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate(episodes);
}

Metrics run_monte_carlo(const ScenarioConfig& cfg, unsigned workers) {
  const DetectorContext ctx(cfg);
  return run_monte_carlo(cfg, ctx, workers);
}

}  // namespace crsense
