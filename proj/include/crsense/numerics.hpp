#pragma once

// Energy-detector statistics and threshold control.
//
// The decision statistic S is chi-square with 2*nu degrees of freedom under
// H0 and noncentral chi-square (noncentrality 2*nu*lambda) under H1, where
// lambda is the per-sample PU-to-SU SNR. The detector declares "busy" when
// S > tau. Thresholds are expressed on the scale of S.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "crsense/rng.hpp"

namespace crsense {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

enum class ThresholdMode { Fixed, Adaptive, Mismatched, Cooperative };
enum class ApproxMode { Exact, Gaussian };

struct DetectorConfig {
  int nu = 100;
  double pmd_target = 0.1;
  ThresholdMode threshold_mode = ThresholdMode::Adaptive;
  /// Number of OR-fused branches; only read in Cooperative mode.
  int cooperative_branches = 1;
  ApproxMode approx_mode = ApproxMode::Gaussian;

  /// Throws ValidationError. A target of exactly 1 is accepted as the
  /// "never detect" endpoint (tau = +inf).
  void validate() const;
};

struct DetectionProbabilities {
  double p_md = 0.0;
  double p_fa = 0.0;
};

/// Decision threshold on the chi-square scale. May be +inf (always sense idle).
struct Threshold {
  double tau = 0.0;

  bool is_infinite() const noexcept { return std::isinf(tau); }
  friend bool operator==(const Threshold&, const Threshold&) = default;
};

/// Distribution of the per-sample SNR (linear) used for fading averages.
struct RayleighSnr {
  double mean = 0.1;
};
struct LognormalSnr {
  double mu_db = -10.0;
  double sigma_db = 5.0;
};
using SnrDistribution = std::variant<RayleighSnr, LognormalSnr>;

// ---- special functions -----------------------------------------------------

/// Gamma(nu, x) / Gamma(nu).
double regularized_upper_gamma(int nu, double x);

/// Generalized Marcum Q-function Q_nu(a, b) for integer order nu >= 1.
/// Evaluated as a Poisson mixture of central chi-square tails.
double marcum_q(int nu, double a, double b);
/// 1 - Q_nu(a, b), accurate when Q_nu is close to 1.
double marcum_q_complement(int nu, double a, double b);

/// 1 - Phi(z).
double normal_upper_tail(double z);
/// Phi^{-1}(p) for p in (0, 1).
double normal_quantile(double p);

// ---- detection probabilities ------------------------------------------------

double pfa_from_threshold(const DetectorConfig& cfg, Threshold tau);
double pmd_instantaneous(const DetectorConfig& cfg, double lambda, Threshold tau);

/// Miss probability averaged over exponentially distributed SNR with mean
/// `lambda_bar`.
double pmd_average_rayleigh(const DetectorConfig& cfg, double lambda_bar, Threshold tau);
double pmd_average(const DetectorConfig& cfg, const SnrDistribution& snr, Threshold tau);

/// Miss probability averaged over the conditional density f(lambda | lambda_hat)
/// of the mismatched-CSI model.
double pmd_expected_mismatched(const DetectorConfig& cfg, double lambda_hat, double nmse,
                               double lambda_bar, Threshold tau);

// ---- threshold inversion ------------------------------------------------------

Threshold threshold_fixed(const DetectorConfig& cfg, double lambda_bar);
Threshold threshold_fixed(const DetectorConfig& cfg, const SnrDistribution& snr);

Threshold threshold_adaptive(const DetectorConfig& cfg, double lambda);

Threshold threshold_mismatched(const DetectorConfig& cfg, double lambda_hat, double nmse,
                               double lambda_bar);

DetectionProbabilities fusion_or(DetectionProbabilities p, int branches);

/// Per-branch fixed threshold such that the OR-fused miss probability meets
/// the target, i.e. each branch targets pmd_target^(1/L).
Threshold threshold_cooperative(const DetectorConfig& cfg, double lambda_bar, int branches);
Threshold threshold_cooperative(const DetectorConfig& cfg, const SnrDistribution& snr,
                                int branches);

/// One draw of the decision statistic at SNR `lambda` (0 means H0).
double simulate_decision_statistic(const DetectorConfig& cfg, double lambda, Rng& rng);

// ---- ROC --------------------------------------------------------------------

enum class RocMode { FixedThreshold, AdaptiveThreshold };

struct RocPoint {
  double p_fa = 0.0;
  double p_md = 0.0;
};

/// Average false-alarm probability of the adaptive detector under Rayleigh
/// fading with mean SNR `lambda_bar`.
double average_adaptive_pfa(const DetectorConfig& cfg, double lambda_bar);

std::vector<RocPoint> roc_curve(RocMode mode, const DetectorConfig& cfg, double lambda_bar,
                                std::span<const double> target_grid);

// ---- generic helpers (exposed for reuse by the channel and simulator code) ---

/// Integral of f from the first to the last of `breaks`, globally adaptive
/// Gauss-Kronrod started from the pieces between breaks. Relative tolerance
/// 1e-8; throws ConvergenceError when it is not met.
double integrate_piecewise(const std::function<double(double)>& f, std::vector<double> breaks);

/// Smallest tau with f(tau) == target for non-decreasing f on [0, inf),
/// found by bracket growth from `hint` and TOMS 748 to |f - target| <= tol.
/// `cap` bounds the search.
Threshold invert_monotone(const std::function<double(double)>& f, double target, double hint,
                          double cap, double tol = 1e-9);

}  // namespace crsense
