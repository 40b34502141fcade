#include "crsense/channel.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/bessel.hpp>

#include "crsense/errors.hpp"
#include "crsense/numerics.hpp"

namespace crsense {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

}  // namespace

void FadingSpec::validate() const {
  if (const auto* lg = std::get_if<LognormalCorrelated>(&kind)) {
    if (!(lg->sigma_db > 0.0)) throw ValidationError("fading sigma_db must be > 0");
    if (!(lg->rho >= 0.0 && lg->rho < 1.0)) throw ValidationError("fading rho must lie in [0, 1)");
    if (applies_to == LinkKind::SuToSu && lg->rho != 0.0)
      throw ValidationError("fading.su_su.rho must be 0 (SU-to-SU links are independent)");
  }
}

SnrGrid draw_rayleigh_field(double mean_snr_linear, std::size_t M, std::size_t N, Rng& rng) {
  require(mean_snr_linear > 0.0 && std::isfinite(mean_snr_linear),
          "draw_rayleigh_field: mean must be > 0");
  std::exponential_distribution<double> exp_dist(1.0 / mean_snr_linear);
  SnrGrid field(M, N);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = 0; n < N; ++n) field(m, n) = exp_dist(rng);
  return field;
}

SnrGrid draw_correlated_lognormal_field(double mu_db, double sigma_db, double rho, std::size_t M,
                                        std::size_t N, Rng& rng) {
  require(sigma_db > 0.0, "draw_correlated_lognormal_field: sigma_db must be > 0");
  require(rho >= 0.0 && rho < 1.0, "draw_correlated_lognormal_field: rho must lie in [0, 1)");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innovation = std::sqrt(1.0 - rho * rho);
  SnrGrid field(M, N);
  for (std::size_t n = 0; n < N; ++n) {
    // AR(1) along the track gives corr(m, m') = rho^|m - m'| with unit variance.
    double x = normal(rng);
    for (std::size_t m = 0; m < M; ++m) {
      if (m > 0) x = rho * x + innovation * normal(rng);
      field(m, n) = db_to_linear(mu_db + sigma_db * x);
    }
  }
  return field;
}

SnrGrid draw_field(const FadingSpec& spec, std::size_t M, std::size_t N, Rng& rng) {
  if (const auto* r = std::get_if<RayleighIid>(&spec.kind))
    return draw_rayleigh_field(db_to_linear(r->mean_snr_db), M, N, rng);
  const auto& lg = std::get<LognormalCorrelated>(spec.kind);
  const double rho = spec.applies_to == LinkKind::SuToSu ? 0.0 : lg.rho;
  return draw_correlated_lognormal_field(lg.mu_db, lg.sigma_db, rho, M, N, rng);
}

std::pair<double, double> draw_mismatched_pair(double mean_snr_linear, double nmse, Rng& rng) {
  require(mean_snr_linear > 0.0, "draw_mismatched_pair: mean must be > 0");
  require(nmse >= 0.0 && nmse <= 1.0, "draw_mismatched_pair: nmse must lie in [0, 1]");
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  const double h_re = normal(rng);
  const double h_im = normal(rng);
  const double w_re = normal(rng);
  const double w_im = normal(rng);
  const double rho = std::sqrt(1.0 - nmse);
  const double spread = std::sqrt(nmse);
  const double hat_re = rho * h_re + spread * w_re;
  const double hat_im = rho * h_im + spread * w_im;
  return {mean_snr_linear * (h_re * h_re + h_im * h_im),
          mean_snr_linear * (hat_re * hat_re + hat_im * hat_im)};
}

double bessel_i0_scaled(double z) {
  require(z >= 0.0, "bessel_i0_scaled: z must be >= 0");
  if (z < 700.0) return boost::math::cyl_bessel_i(0, z) * std::exp(-z);
  // Hankel asymptotic series; at z >= 700 ten terms are far below 1e-16.
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 10; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= odd * odd / (8.0 * k * z);
    sum += term;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * z);
}

double conditional_pdf(double lambda, double lambda_hat, double nmse, double mean_snr_linear) {
  require(lambda >= 0.0 && lambda_hat >= 0.0, "conditional_pdf: SNRs must be >= 0");
  require(nmse > 0.0 && nmse <= 1.0, "conditional_pdf: nmse must lie in (0, 1]");
  require(mean_snr_linear > 0.0, "conditional_pdf: mean must be > 0");
  const double scale = mean_snr_linear * nmse;  // lambda_bar * (1 - rho_e^2)
  const double rho = std::sqrt(1.0 - nmse);
  if (rho == 0.0) return std::exp(-lambda / mean_snr_linear) / mean_snr_linear;
  const double root_gap = std::sqrt(lambda) - rho * std::sqrt(lambda_hat);
  const double z = 2.0 * rho * std::sqrt(lambda * lambda_hat) / scale;
  return std::exp(-root_gap * root_gap / scale) * bessel_i0_scaled(z) / scale;
}

ConditionalMoments conditional_moments(double lambda_hat, double nmse, double mean_snr_linear) {
  const double scale = mean_snr_linear * nmse;
  const double rho2 = 1.0 - nmse;
  return ConditionalMoments{rho2 * lambda_hat + scale,
                            std::sqrt(scale * scale + 2.0 * rho2 * lambda_hat * scale)};
}

}  // namespace crsense
