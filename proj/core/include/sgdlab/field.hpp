#pragma once

#include "sgdlab/covariance.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <span>

namespace sgdlab {

enum class SamplerMode { Dense, CirculantFFT };

/// Draws x^t ~ N(0, Sigma_d) independently at every call.
///
/// Dense mode multiplies a standard normal vector by the spectral square root
/// V sqrt(Lambda) of Sigma_d. CirculantFFT mode uses the fact that Sigma_d is
/// circulant on the grid {i/d}: its eigenvalues are the DFT of the first row,
/// and a Hermitian-symmetric complex normal vector pushed through one
/// complex-to-real FFT yields an exact draw with d standard normals.
///
/// Immutable after construction; concurrent draws are safe as long as each
/// thread owns its RngStream.
class FieldSampler {
 public:
  /// Picks CirculantFFT when prefer_fft is set and Sigma_d is circulant to
  /// within 1e-12; otherwise Dense. Throws InvalidKernelError when Sigma_d
  /// is not positive semidefinite.
  FieldSampler(const CovarianceModel& model, std::size_t d, bool prefer_fft);
  ~FieldSampler();
  FieldSampler(const FieldSampler&) = delete;
  FieldSampler& operator=(const FieldSampler&) = delete;
  FieldSampler(FieldSampler&&) noexcept;
  FieldSampler& operator=(FieldSampler&&) noexcept;

  std::size_t d() const { return d_; }
  SamplerMode mode() const { return mode_; }
  const CovarianceModel& model() const { return model_; }

  /// Dense factor L with L L^T = Sigma_d (empty in FFT mode).
  const Eigen::MatrixXd& dense_factor() const { return factor_; }
  /// Circulant eigenvalues of Sigma_d (empty in Dense mode).
  const Eigen::VectorXd& circulant_spectrum() const { return spectrum_; }

  void draw(RngStream& rng, std::span<double> out) const;
  GridFunction draw(RngStream& rng) const;

 private:
  struct FftPlan;

  CovarianceModel model_;
  std::size_t d_;
  SamplerMode mode_;
  Eigen::MatrixXd factor_;
  Eigen::VectorXd spectrum_;
  // sqrt(lambda_k / d) for k = 0..d/2.
  Eigen::VectorXd half_scale_;
  std::unique_ptr<FftPlan> plan_;
};

/// Convenience wrapper mirroring the sampler constructor.
FieldSampler make_sampler(const CovarianceModel& model, std::size_t d,
                          bool prefer_fft);

GridFunction draw_field(const FieldSampler& sampler, RngStream& rng);

enum class NoiseDistribution { Gaussian, Rademacher, StudentT };

/// Observation noise epsilon^t with mean 0 and variance sigma^2.
class NoiseSpec {
 public:
  /// StudentT requires nu > 4 (finite fourth moment); sigma must be >= 0.
  NoiseSpec(double sigma, NoiseDistribution distribution, double nu = 0.0);

  static NoiseSpec gaussian(double sigma) {
    return NoiseSpec(sigma, NoiseDistribution::Gaussian);
  }

  double sigma() const { return sigma_; }
  NoiseDistribution distribution() const { return distribution_; }
  double nu() const { return nu_; }
  /// E[eps^4] / sigma^4.
  double kurtosis() const;

 private:
  double sigma_;
  NoiseDistribution distribution_;
  double nu_;
};

double draw_noise(const NoiseSpec& spec, RngStream& rng);

}  // namespace sgdlab
