#pragma once

// Per-slot SNR fields (block fading) and the mismatched-CSI model.

#include <cstddef>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "crsense/rng.hpp"

namespace crsense {

/// Dense row-major M x N array indexed (SU, channel).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  T& operator()(std::size_t m, std::size_t n) { return data_[m * cols_ + n]; }
  const T& operator()(std::size_t m, std::size_t n) const { return data_[m * cols_ + n]; }
  const std::vector<T>& values() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using SnrGrid = Grid<double>;

struct RayleighIid {
  double mean_snr_db = 0.0;
};
/// Lognormal shadowing; across SUs on the same channel the dB values have
/// correlation rho^|m - m'| (linear-track exponential decay).
struct LognormalCorrelated {
  double mu_db = 0.0;
  double sigma_db = 5.0;
  double rho = 0.0;
};

enum class LinkKind { PuToSu, SuToSu };

struct FadingSpec {
  std::variant<RayleighIid, LognormalCorrelated> kind = RayleighIid{};
  LinkKind applies_to = LinkKind::PuToSu;

  /// Throws ValidationError. SU-to-SU links must not be spatially correlated.
  void validate() const;
};

struct GainField {
  SnrGrid lambda;  ///< PU-to-SU SNR per sample, linear
  SnrGrid gamma;   ///< SU-to-SU SNR, linear
  std::optional<SnrGrid> lambda_hat;

  friend bool operator==(const GainField&, const GainField&) = default;
};

struct MismatchSpec {
  double nmse = 0.0;
};

SnrGrid draw_rayleigh_field(double mean_snr_linear, std::size_t M, std::size_t N, Rng& rng);

SnrGrid draw_correlated_lognormal_field(double mu_db, double sigma_db, double rho, std::size_t M,
                                        std::size_t N, Rng& rng);

SnrGrid draw_field(const FadingSpec& spec, std::size_t M, std::size_t N, Rng& rng);

/// Jointly distributed (actual, observed) SNR pair. Channel amplitudes are
/// circularly symmetric complex Gaussian with correlation rho_e,
/// rho_e^2 = 1 - nmse; both SNRs are exponential with the given mean and
/// E[(lambda - lambda_hat)^2] / E[lambda^2] = nmse.
std::pair<double, double> draw_mismatched_pair(double mean_snr_linear, double nmse, Rng& rng);

/// Density of the actual SNR given the observed one (noncentral exponential /
/// Rician power). Requires 0 < nmse <= 1.
double conditional_pdf(double lambda, double lambda_hat, double nmse, double mean_snr_linear);

struct ConditionalMoments {
  double mean = 0.0;
  double sd = 0.0;
};
ConditionalMoments conditional_moments(double lambda_hat, double nmse, double mean_snr_linear);

/// exp(-z) * I0(z), finite for all z >= 0.
double bessel_i0_scaled(double z);

}  // namespace crsense
