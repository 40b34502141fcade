#include "crsense/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "crsense/channel.hpp"
#include "crsense/errors.hpp"

namespace crsense {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kProbTol = 1e-9;
constexpr double kSmoothProbTol = 1e-14;
constexpr double kQuadRelTol = 1e-8;
// Refinement aims lower than the acceptance bound to leave headroom.
constexpr double kQuadTargetTol = 1e-10;
constexpr double kQuadAbsFloor = 1e-14;
constexpr int kRootIterCap = 200;
// Rayleigh SNR integrals are truncated at this multiple of the mean.
constexpr double kRayleighSpan = 40.0;
constexpr double kLognormalSpan = 10.0;

template <typename... Args>
std::string format_g(const char* fmt, Args... args) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

void check_tau(Threshold tau) {
  require(!std::isnan(tau.tau) && tau.tau >= 0.0, "threshold must be >= 0");
}

double mean_h0(int nu) { return 2.0 * nu; }

// Search ceiling used by every inversion: far beyond any realistic quantile.
double search_cap(int nu, double lambda_max) {
  return 10.0 * 2.0 * nu * (1.0 + lambda_max) + 1000.0;
}

// SNR at which the H1 mean of S equals tau; the miss probability swings from
// ~0 to ~1 around it.
double transition_snr(int nu, double tau) { return tau / (2.0 * nu) - 1.0; }

void add_transition_breaks(std::vector<double>& breaks, int nu, double tau, double lo,
                           double hi) {
  const double center = transition_snr(nu, tau);
  if (!(center > lo && center < hi)) return;
  const double width = std::sqrt(4.0 * nu * (1.0 + 2.0 * center)) / (2.0 * nu);
  for (double k : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    const double b = center + k * width;
    if (b > lo && b < hi) breaks.push_back(b);
  }
}

}  // namespace

void DetectorConfig::validate() const {
  if (nu < 1) throw ValidationError("detector.nu must be >= 1");
  if (!(pmd_target > 0.0 && pmd_target <= 1.0))
    throw ValidationError("detector.pmd_target must lie in (0, 1]");
  if (threshold_mode == ThresholdMode::Cooperative && cooperative_branches < 1)
    throw ValidationError("detector.cooperative_L must be >= 1");
}

// ---- special functions -----------------------------------------------------

double regularized_upper_gamma(int nu, double x) {
  require(nu >= 1, "regularized_upper_gamma: nu must be >= 1");
  require(!std::isnan(x) && x >= 0.0, "regularized_upper_gamma: x must be >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(static_cast<double>(nu), x);
}

namespace {

double log_poisson_pmf(double k, double mean, double log_mean) {
  return -mean + k * log_mean - std::lgamma(k + 1.0);
}

// Q_nu(a,b) = sum_k Pois(k; a^2/2) Q(nu + k, b^2/2) with Q the regularized
// upper gamma; the complement uses the lower gamma P instead. For integer
// order Q(s+1, x) = Q(s, x) + pmf(s; x), so Q is accumulated upward in s and
// P downward, both by adding positive terms.
double marcum_mixture(int nu, double a, double b, bool complement) {
  constexpr double kWeightTol = 1e-17;
  const double x = 0.5 * b * b;
  const double mu = 0.5 * a * a;
  const double log_mu = std::log(mu);
  const double log_x = std::log(x);
  const long mode = static_cast<long>(std::floor(mu));

  // Range of Poisson indices outside of which the remaining weight is negligible.
  long k_lo = mode;
  for (double w = std::exp(log_poisson_pmf(mode, mu, log_mu)); k_lo > 0 && w > kWeightTol; --k_lo)
    w *= static_cast<double>(k_lo) / mu;
  long k_hi = mode;
  for (double w = std::exp(log_poisson_pmf(mode, mu, log_mu)); w > kWeightTol || mu / (k_hi + 1.0) >= 0.5;
       ++k_hi) {
    if (k_hi - mode > 10'000'000) throw ConvergenceError("marcum_q: Poisson series did not converge");
    w *= mu / static_cast<double>(k_hi + 1);
  }

  const auto weight = [&](long k) { return std::exp(log_poisson_pmf(k, mu, log_mu)); };
  const auto gamma_pmf = [&](long s) { return std::exp(log_poisson_pmf(s, x, log_x)); };
  double sum = 0.0;
  if (!complement) {
    double g = boost::math::gamma_q(static_cast<double>(nu + k_lo), x);
    for (long k = k_lo; k <= k_hi; ++k) {
      sum += weight(k) * g;
      g = std::min(1.0, g + gamma_pmf(nu + k));
    }
  } else {
    double g = boost::math::gamma_p(static_cast<double>(nu + k_hi), x);
    for (long k = k_hi; k >= k_lo; --k) {
      sum += weight(k) * g;
      g = std::min(1.0, g + gamma_pmf(nu + k - 1));
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

void check_marcum_args(int nu, double a, double b) {
  require(nu >= 1, "marcum_q: nu must be >= 1");
  require(!std::isnan(a) && a >= 0.0 && std::isfinite(a), "marcum_q: a must be finite and >= 0");
  require(!std::isnan(b) && b >= 0.0, "marcum_q: b must be >= 0");
}

}  // namespace

double marcum_q(int nu, double a, double b) {
  check_marcum_args(nu, a, b);
  if (b == 0.0) return 1.0;
  if (std::isinf(b)) return 0.0;
  if (a == 0.0) return regularized_upper_gamma(nu, 0.5 * b * b);
  return marcum_mixture(nu, a, b, false);
}

double marcum_q_complement(int nu, double a, double b) {
  check_marcum_args(nu, a, b);
  if (b == 0.0) return 0.0;
  if (std::isinf(b)) return 1.0;
  if (a == 0.0) return boost::math::gamma_p(static_cast<double>(nu), 0.5 * b * b);
  return marcum_mixture(nu, a, b, true);
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

// ---- detection probabilities ------------------------------------------------

double pfa_from_threshold(const DetectorConfig& cfg, Threshold tau) {
  check_tau(tau);
  if (tau.tau == 0.0) return 1.0;
  if (tau.is_infinite()) return 0.0;
  if (cfg.approx_mode == ApproxMode::Exact) return regularized_upper_gamma(cfg.nu, 0.5 * tau.tau);
  return normal_upper_tail((tau.tau - mean_h0(cfg.nu)) / (2.0 * std::sqrt(cfg.nu)));
}

double pmd_instantaneous(const DetectorConfig& cfg, double lambda, Threshold tau) {
  require(std::isfinite(lambda) && lambda >= 0.0, "pmd_instantaneous: lambda must be >= 0");
  check_tau(tau);
  if (tau.tau == 0.0) return 0.0;
  if (tau.is_infinite()) return 1.0;
  if (cfg.approx_mode == ApproxMode::Exact) {
    return marcum_q_complement(cfg.nu, std::sqrt(2.0 * cfg.nu * lambda), std::sqrt(tau.tau));
  }
  const double mean = 2.0 * cfg.nu * (1.0 + lambda);
  const double sd = std::sqrt(4.0 * cfg.nu * (1.0 + 2.0 * lambda));
  return normal_upper_tail((mean - tau.tau) / sd);
}

double integrate_piecewise(const std::function<double(double)>& f, std::vector<double> breaks) {
  using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
  constexpr int kMaxSegments = 4000;
  std::sort(breaks.begin(), breaks.end());
  // Breakpoints closer than rounding noise would give degenerate pieces.
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double a, double b) {
                             return b - a <= 1e-12 * std::max(std::abs(a), std::abs(b));
                           }),
               breaks.end());

  // Globally adaptive: always bisect the segment with the largest error
  // estimate, so the tolerance applies to the whole integral rather than to
  // far-tail pieces that carry no mass.
  struct Segment {
    double lo, hi, value, err, l1;
    bool operator<(const Segment& o) const { return err < o.err; }
  };
  const auto evaluate = [&](double lo, double hi) {
    Segment seg{lo, hi, 0.0, 0.0, 0.0};
    seg.value = Rule::integrate(f, lo, hi, 0, 0.0, &seg.err, &seg.l1);
    // Boost (at least through 1.74) reports the single-rule error on the
    // [-1, 1] reference interval; L1 is already scaled.
    seg.err *= 0.5 * (hi - lo);
    if (!std::isfinite(seg.value))
      throw ConvergenceError(format_g("quadrature: non-finite integrand on [%g, %g]", lo, hi));
    return seg;
  };
  std::priority_queue<Segment> queue;
  double total_err = 0.0;
  double total_l1 = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    auto seg = evaluate(breaks[i], breaks[i + 1]);
    total_err += seg.err;
    total_l1 += seg.l1;
    queue.push(seg);
  }
  const auto target = [&] { return kQuadTargetTol * total_l1 + kQuadAbsFloor; };
  while (!queue.empty() && total_err > target() && static_cast<int>(queue.size()) < kMaxSegments) {
    const Segment worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi)) {
      queue.push(worst);
      break;
    }
    const auto left = evaluate(worst.lo, mid);
    const auto right = evaluate(mid, worst.hi);
    total_err += left.err + right.err - worst.err;
    total_l1 += left.l1 + right.l1 - worst.l1;
    queue.push(left);
    queue.push(right);
  }
  // Re-sum from scratch to avoid drift in the running totals.
  double total = 0.0;
  total_err = 0.0;
  total_l1 = 0.0;
  for (; !queue.empty(); queue.pop()) {
    total += queue.top().value;
    total_err += queue.top().err;
    total_l1 += queue.top().l1;
  }
  if (total_err > kQuadRelTol * total_l1 + kQuadAbsFloor)
    throw ConvergenceError(format_g("quadrature error estimate %g exceeds tolerance (L1 norm %g)",
                                    total_err, total_l1));
  return total;
}

double pmd_average_rayleigh(const DetectorConfig& cfg, double lambda_bar, Threshold tau) {
  require(std::isfinite(lambda_bar) && lambda_bar > 0.0,
          "pmd_average_rayleigh: lambda_bar must be > 0");
  check_tau(tau);
  if (tau.tau == 0.0) return 0.0;
  if (tau.is_infinite()) return 1.0;
  const double hi = kRayleighSpan * lambda_bar;
  std::vector<double> breaks{0.0, hi};
  for (double k : {1.0, 2.0, 5.0, 10.0, 20.0}) breaks.push_back(k * lambda_bar);
  add_transition_breaks(breaks, cfg.nu, tau.tau, 0.0, hi);
  const auto integrand = [&](double lambda) {
    return pmd_instantaneous(cfg, lambda, tau) * std::exp(-lambda / lambda_bar) / lambda_bar;
  };
  return std::clamp(integrate_piecewise(integrand, std::move(breaks)), 0.0, 1.0);
}

namespace {

double pmd_average_lognormal(const DetectorConfig& cfg, const LognormalSnr& snr, Threshold tau) {
  require(std::isfinite(snr.mu_db) && snr.sigma_db > 0.0,
          "pmd_average: lognormal sigma_db must be > 0");
  check_tau(tau);
  if (tau.tau == 0.0) return 0.0;
  if (tau.is_infinite()) return 1.0;
  const double lo = snr.mu_db - kLognormalSpan * snr.sigma_db;
  const double hi = snr.mu_db + kLognormalSpan * snr.sigma_db;
  std::vector<double> breaks;
  for (int k = -10; k <= 10; k += 2) breaks.push_back(snr.mu_db + k * snr.sigma_db);
  const double center = transition_snr(cfg.nu, tau.tau);
  if (center > 0.0) {
    const double center_db = 10.0 * std::log10(center);
    if (center_db > lo && center_db < hi) breaks.push_back(center_db);
  }
  const double norm = 1.0 / (snr.sigma_db * std::sqrt(2.0 * std::numbers::pi));
  const auto integrand = [&](double x_db) {
    const double z = (x_db - snr.mu_db) / snr.sigma_db;
    return pmd_instantaneous(cfg, db_to_linear(x_db), tau) * norm * std::exp(-0.5 * z * z);
  };
  return std::clamp(integrate_piecewise(integrand, std::move(breaks)), 0.0, 1.0);
}

double snr_upper(const SnrDistribution& snr) {
  if (const auto* r = std::get_if<RayleighSnr>(&snr)) return kRayleighSpan * r->mean;
  const auto& l = std::get<LognormalSnr>(snr);
  return db_to_linear(l.mu_db + kLognormalSpan * l.sigma_db);
}

double snr_mean(const SnrDistribution& snr) {
  if (const auto* r = std::get_if<RayleighSnr>(&snr)) return r->mean;
  const auto& l = std::get<LognormalSnr>(snr);
  const double s = l.sigma_db * std::log(10.0) / 10.0;
  return db_to_linear(l.mu_db) * std::exp(0.5 * s * s);
}

}  // namespace

double pmd_average(const DetectorConfig& cfg, const SnrDistribution& snr, Threshold tau) {
  if (const auto* r = std::get_if<RayleighSnr>(&snr)) return pmd_average_rayleigh(cfg, r->mean, tau);
  return pmd_average_lognormal(cfg, std::get<LognormalSnr>(snr), tau);
}

double pmd_expected_mismatched(const DetectorConfig& cfg, double lambda_hat, double nmse,
                               double lambda_bar, Threshold tau) {
  require(std::isfinite(lambda_hat) && lambda_hat >= 0.0, "lambda_hat must be >= 0");
  require(nmse >= 0.0 && nmse <= 1.0, "nmse must lie in [0, 1]");
  require(std::isfinite(lambda_bar) && lambda_bar > 0.0, "lambda_bar must be > 0");
  check_tau(tau);
  if (nmse == 0.0) return pmd_instantaneous(cfg, lambda_hat, tau);
  if (tau.tau == 0.0) return 0.0;
  if (tau.is_infinite()) return 1.0;

  const auto moments = conditional_moments(lambda_hat, nmse, lambda_bar);
  const double hi = moments.mean + 40.0 * moments.sd;
  std::vector<double> breaks{0.0, hi, moments.mean};
  for (double k : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    breaks.push_back(moments.mean + k * moments.sd);
    if (moments.mean - k * moments.sd > 0.0) breaks.push_back(moments.mean - k * moments.sd);
  }
  add_transition_breaks(breaks, cfg.nu, tau.tau, 0.0, hi);
  const auto integrand = [&](double lambda) {
    return pmd_instantaneous(cfg, lambda, tau) *
           conditional_pdf(lambda, lambda_hat, nmse, lambda_bar);
  };
  return std::clamp(integrate_piecewise(integrand, std::move(breaks)), 0.0, 1.0);
}

// ---- threshold inversion ------------------------------------------------------

Threshold invert_monotone(const std::function<double(double)>& f, double target, double hint,
                          double cap, double tol) {
  if (target >= 1.0) return Threshold{kInf};
  if (f(0.0) >= target) return Threshold{0.0};
  double lo = 0.0;
  double hi = std::max(hint, 1.0);
  double f_hi = f(hi);
  while (f_hi < target) {
    if (std::abs(f_hi - target) <= tol) return Threshold{hi};
    lo = hi;
    hi *= 2.0;
    if (hi > cap) throw BracketError("threshold inversion: target unreachable below tau cap");
    f_hi = f(hi);
  }
  if (std::abs(f_hi - target) <= tol) return Threshold{hi};
  const double f_lo = f(lo);
  if (std::abs(f_lo - target) <= tol) return Threshold{lo};
  // TOMS 748 stops on bracket width; the residual test is applied here.
  std::optional<double> root;
  const auto g = [&](double tau) {
    const double r = f(tau) - target;
    if (!root && std::abs(r) <= tol) root = tau;
    return r;
  };
  const auto stop = [&](double a, double b) {
    return root.has_value() || b - a <= 4.0 * std::numeric_limits<double>::epsilon() * b;
  };
  std::uintmax_t iters = kRootIterCap;
  const auto [a, b] =
      boost::math::tools::toms748_solve(g, lo, hi, f_lo - target, f_hi - target, stop, iters);
  if (root) return Threshold{*root};
  // Bracket collapsed to adjacent doubles: f is as close as it gets.
  const double mid = 0.5 * (a + b);
  if (std::abs(f(mid) - target) <= kProbTol) return Threshold{mid};
  throw ConvergenceError("threshold inversion: root search did not reach tolerance");
}

Threshold threshold_fixed(const DetectorConfig& cfg, const SnrDistribution& snr) {
  cfg.validate();
  const double upper = snr_upper(snr);
  return invert_monotone([&](double tau) { return pmd_average(cfg, snr, Threshold{tau}); },
                         cfg.pmd_target, 2.0 * cfg.nu * (1.0 + snr_mean(snr)),
                         search_cap(cfg.nu, upper));
}

Threshold threshold_fixed(const DetectorConfig& cfg, double lambda_bar) {
  require(std::isfinite(lambda_bar) && lambda_bar > 0.0, "threshold_fixed: lambda_bar must be > 0");
  return threshold_fixed(cfg, SnrDistribution{RayleighSnr{lambda_bar}});
}

namespace {

Threshold adaptive_threshold(const DetectorConfig& cfg, double lambda, double tol) {
  cfg.validate();
  require(std::isfinite(lambda) && lambda >= 0.0, "threshold_adaptive: lambda must be >= 0");
  if (cfg.pmd_target >= 1.0) return Threshold{kInf};
  if (cfg.approx_mode == ApproxMode::Gaussian) {
    const double mean = 2.0 * cfg.nu * (1.0 + lambda);
    const double sd = std::sqrt(4.0 * cfg.nu * (1.0 + 2.0 * lambda));
    return Threshold{std::max(0.0, mean + sd * normal_quantile(cfg.pmd_target))};
  }
  return invert_monotone([&](double tau) { return pmd_instantaneous(cfg, lambda, Threshold{tau}); },
                         cfg.pmd_target, 2.0 * cfg.nu * (1.0 + lambda), search_cap(cfg.nu, lambda),
                         tol);
}

}  // namespace

Threshold threshold_adaptive(const DetectorConfig& cfg, double lambda) {
  return adaptive_threshold(cfg, lambda, kProbTol);
}

Threshold threshold_mismatched(const DetectorConfig& cfg, double lambda_hat, double nmse,
                               double lambda_bar) {
  cfg.validate();
  require(nmse >= 0.0 && nmse <= 1.0, "threshold_mismatched: nmse must lie in [0, 1]");
  if (nmse == 0.0) return threshold_adaptive(cfg, lambda_hat);
  const auto moments = conditional_moments(lambda_hat, nmse, lambda_bar);
  return invert_monotone(
      [&](double tau) {
        return pmd_expected_mismatched(cfg, lambda_hat, nmse, lambda_bar, Threshold{tau});
      },
      cfg.pmd_target, 2.0 * cfg.nu * (1.0 + moments.mean),
      search_cap(cfg.nu, moments.mean + 40.0 * moments.sd));
}

DetectionProbabilities fusion_or(DetectionProbabilities p, int branches) {
  require(branches >= 1, "fusion_or: L must be >= 1");
  if (branches == 1) return p;
  return DetectionProbabilities{std::pow(p.p_md, branches),
                                1.0 - std::pow(1.0 - p.p_fa, branches)};
}

Threshold threshold_cooperative(const DetectorConfig& cfg, const SnrDistribution& snr,
                                int branches) {
  require(branches >= 1, "threshold_cooperative: L must be >= 1");
  DetectorConfig branch = cfg;
  branch.pmd_target = std::pow(cfg.pmd_target, 1.0 / branches);
  return threshold_fixed(branch, snr);
}

Threshold threshold_cooperative(const DetectorConfig& cfg, double lambda_bar, int branches) {
  return threshold_cooperative(cfg, SnrDistribution{RayleighSnr{lambda_bar}}, branches);
}

double simulate_decision_statistic(const DetectorConfig& cfg, double lambda, Rng& rng) {
  require(std::isfinite(lambda) && lambda >= 0.0, "simulate_decision_statistic: lambda must be >= 0");
  const double dof = 2.0 * cfg.nu;
  if (lambda == 0.0) return std::chi_squared_distribution<double>(dof)(rng);
  // Noncentral chi-square: one shifted normal carries all the noncentrality.
  const double shifted = std::normal_distribution<double>(0.0, 1.0)(rng) +
                         std::sqrt(2.0 * cfg.nu * lambda);
  return std::chi_squared_distribution<double>(dof - 1.0)(rng) + shifted * shifted;
}

// ---- ROC --------------------------------------------------------------------

double average_adaptive_pfa(const DetectorConfig& cfg, double lambda_bar) {
  require(std::isfinite(lambda_bar) && lambda_bar > 0.0, "lambda_bar must be > 0");
  std::vector<double> breaks{0.0};
  for (double k : {0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0, kRayleighSpan}) breaks.push_back(k * lambda_bar);
  const auto integrand = [&](double lambda) {
    // A looser root would put root-finder jitter into the integrand.
    return pfa_from_threshold(cfg, adaptive_threshold(cfg, lambda, kSmoothProbTol)) *
           std::exp(-lambda / lambda_bar) / lambda_bar;
  };
  return std::clamp(integrate_piecewise(integrand, std::move(breaks)), 0.0, 1.0);
}

std::vector<RocPoint> roc_curve(RocMode mode, const DetectorConfig& cfg, double lambda_bar,
                                std::span<const double> target_grid) {
  for (std::size_t i = 0; i < target_grid.size(); ++i) {
    require(target_grid[i] > 0.0 && target_grid[i] < 1.0, "roc_curve: targets must lie in (0, 1)");
    require(i == 0 || target_grid[i] > target_grid[i - 1],
            "roc_curve: targets must be strictly increasing");
  }
  std::vector<RocPoint> points;
  points.reserve(target_grid.size());
  for (double target : target_grid) {
    DetectorConfig at = cfg;
    at.pmd_target = target;
    const double p_fa = mode == RocMode::FixedThreshold
                            ? pfa_from_threshold(at, threshold_fixed(at, lambda_bar))
                            : average_adaptive_pfa(at, lambda_bar);
    points.push_back(RocPoint{p_fa, target});
  }
  return points;
}

}  // namespace crsense
