#pragma once

#include "sgdlab/covariance.hpp"
#include "sgdlab/limit.hpp"
#include "sgdlab/sgdsim.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgdlab {

// MSE / PE functionals

/// (1/d) sum_i dtheta_i^2 at iterate floor(sT).
double mse_discrete(const Trajectory& traj, double s);

/// (1/d^2) sum_ij A(i/d, j/d) dtheta_i dtheta_j at iterate floor(sT),
/// evaluated as sum_k lambda_k <dtheta, phi_k>^2. `spectral` must live on the
/// grid of size d; modes dropped by a cutoff contribute at most
/// cutoff * mse_discrete.
double pe_discrete(const Trajectory& traj, double s,
                   const SpectralData& spectral);

double mse_limit(const LimitSolution& solution, double s);
double pe_limit(const LimitSolution& solution, double s);

struct PeBoundReport {
  double pe = 0.0;
  double bound = 0.0;
  /// pe / bound, 0 when the initial MSE vanishes.
  double ratio = 0.0;
  bool holds = true;
};

/// pe_limit(tau) <= mse_limit(0) / (alpha tau).
PeBoundReport pe_time_average_bound(const LimitSolution& solution,
                                    double alpha, double tau);

// Regime classification

enum class NoiseRegime { Low, Moderate, High };

struct RegimeThresholds {
  double low = 1e-2;
  double high = 1e2;
};

struct RegimeReport {
  std::size_t d = 0;
  double T = 0.0;
  double eta = 0.0;
  double sigma = 0.0;
  std::optional<double> gamma;

  /// sigma^2 / (d^2 T)
  double ratio_noise = 0.0;
  double eta_dT = 0.0;
  double eta_sigma_sqrtT = 0.0;
  NoiseRegime regime = NoiseRegime::Low;
  std::optional<FluctuationRegime> fluct_subregime;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double zeta_hat = 0.0;
};

/// Thresholds apply to ratio_noise for the regime and to gamma/sqrt(T),
/// gamma sigma/(d sqrt(T)) and gamma/d for the low-noise subregime:
/// zeta_hat >= low gives ParticleInteraction, else beta_hat >= low gives
/// NoiseDominates, else gamma/d < low gives InterpolationError.
/// alpha_hat is eta sigma sqrt(T) in the high regime and eta d T otherwise;
/// beta_hat is gamma sigma/(d sqrt(T)) when gamma is given and
/// sigma/(d sqrt(T)) otherwise.
RegimeReport classify_regime(std::size_t d, double T, double eta, double sigma,
                             std::optional<double> gamma = std::nullopt,
                             RegimeThresholds thresholds = {});

std::string to_string(NoiseRegime regime);
std::string to_string(FluctuationRegime regime);
/// regime.json document.
std::string regime_json(const RegimeReport& report);

class RegimeMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Fluctuations of MSE / PE

struct FluctuationValue {
  double empirical = 0.0;
  double limit = 0.0;
};

/// empirical = gamma (mse_discrete(traj, s) - mse_limit(ode, s)),
/// limit = 2 <Theta(s), U(s)>. Throws RegimeMismatchError unless `regime` is
/// Low.
FluctuationValue mse_fluctuation(const Trajectory& traj,
                                 const LimitSolution& ode,
                                 const LimitSolution& u, double gamma,
                                 double s, const RegimeReport& regime);

/// As mse_fluctuation with pe_* and limit 2 int int Theta A U.
FluctuationValue pe_fluctuation(const Trajectory& traj,
                                const SpectralData& traj_spectral,
                                const LimitSolution& ode,
                                const LimitSolution& u, double gamma, double s,
                                const RegimeReport& regime);

// Normality

struct KsResult {
  std::size_t n = 0;
  double statistic = 0.0;
  double p_value = 1.0;
};

/// P(D_n < d) for the one-sample Kolmogorov statistic (Marsaglia, Tsang and
/// Wang 2003).
double kolmogorov_cdf(std::size_t n, double d);

/// One-sample KS test against N(0,1). With `studentize` the samples are
/// first centred and scaled by their sample mean and SD.
KsResult ks_normal_test(std::span<const double> samples, bool studentize = true);

/// (theoretical normal quantile, sorted studentized sample) pairs using
/// plotting positions (i - 1/2) / n.
std::vector<std::pair<double, double>> qq_normal(std::span<const double> samples);

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;
  /// Standard error of the mean.
  double se = 0.0;
};

/// Mean and unbiased variance.
SampleMoments sample_moments(std::span<const double> samples);

// Convergence

struct Probe {
  double s = 0.0;
  double x = 0.0;
};

struct ProbeNormality {
  Probe probe;
  double mean = 0.0;
  double sd = 0.0;
  KsResult ks;
  std::vector<std::pair<double, double>> qq;
};

struct ConvergenceMetrics {
  /// Per replication, max over probes of |interpolate - limit|.
  std::vector<double> sup_distance;
  /// Per replication, root mean square over probes.
  std::vector<double> l2_distance;
  double sup_mean = 0.0;
  double sup_sd = 0.0;
  double l2_mean = 0.0;
  double l2_sd = 0.0;
  /// Normality of interpolate - limit across replications at each probe;
  /// empty with fewer than 3 replications.
  std::vector<ProbeNormality> probes;
};

ConvergenceMetrics convergence_metrics(std::span<const Trajectory> trajs,
                                       const LimitSolution& limit,
                                       std::span<const Probe> eval_grid);

}  // namespace sgdlab
