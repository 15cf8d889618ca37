#include "sgdlab/diagnostics.hpp"

#include "sgdlab/grid.hpp"

#include <Eigen/Core>
#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sgdlab {

namespace {

Eigen::Map<const Eigen::VectorXd> interior(const GridFunction& state,
                                           std::size_t d) {
  return {state.data() + 1, static_cast<Eigen::Index>(d)};
}

const GridFunction& state_at(const Trajectory& traj, double s) {
  if (!(s >= 0.0)) throw ValidationError("diagnostics: s must be >= 0");
  const auto t = time_index(s, traj.T());
  if (t > traj.steps()) {
    throw ValidationError("diagnostics: s beyond the simulated horizon");
  }
  return traj.state(t);
}

double spectral_energy(const Eigen::VectorXd& lambda, const Eigen::VectorXd& c) {
  return (lambda.array() * c.array().square()).sum();
}

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

void require_low(const RegimeReport& regime, const char* what) {
  if (regime.regime != NoiseRegime::Low) {
    throw RegimeMismatchError(
        std::string(what) + " needs the low-noise regime (eta = alpha/(dT)); "
        "classified as " + to_string(regime.regime) +
        " with sigma^2/(d^2 T) = " + std::to_string(regime.ratio_noise));
  }
}

void require_same_grid(const LimitSolution& a, const LimitSolution& b) {
  if (a.grid_size() != b.grid_size()) {
    throw ValidationError("fluctuation: Theta and U live on different grids");
  }
}

// Marsaglia-Tsang-Wang matrix power with decimal exponent tracking.
using Mat = Eigen::MatrixXd;

void matrix_power(const Mat& a, int ea, Mat& v, int& ev, int n) {
  if (n == 1) {
    v = a;
    ev = ea;
    return;
  }
  matrix_power(a, ea, v, ev, n / 2);
  const Mat b = v * v;
  const int eb = 2 * ev;
  if (n % 2 == 0) {
    v = b;
    ev = eb;
  } else {
    v = a * b;
    ev = ea + eb;
  }
  const auto mid = v.rows() / 2;
  if (v(mid, mid) > 1e140) {
    v *= 1e-140;
    ev += 140;
  }
}

double kolmogorov_asymptotic(std::size_t n, double d) {
  const double t = (std::sqrt(static_cast<double>(n)) + 0.12 +
                    0.11 / std::sqrt(static_cast<double>(n))) * d;
  double tail = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    tail += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(1.0 - 2.0 * tail, 0.0, 1.0);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<double> studentized_sorted(std::span<const double> samples) {
  const auto m = sample_moments(samples);
  const double sd = std::sqrt(m.variance);
  if (!(sd > 0.0)) {
    throw ValidationError("normality: samples have zero variance");
  }
  std::vector<double> z(samples.begin(), samples.end());
  for (double& v : z) v = (v - m.mean) / sd;
  std::sort(z.begin(), z.end());
  return z;
}

}  // namespace

double mse_discrete(const Trajectory& traj, double s) {
  return interior(state_at(traj, s), traj.d()).squaredNorm() /
         static_cast<double>(traj.d());
}

double pe_discrete(const Trajectory& traj, double s,
                   const SpectralData& spectral) {
  if (spectral.grid_size != traj.d()) {
    throw ValidationError("pe_discrete: spectral grid size " +
                          std::to_string(spectral.grid_size) + " != d " +
                          std::to_string(traj.d()));
  }
  const GridFunction f = interior(state_at(traj, s), traj.d());
  return spectral_energy(spectral.eigenvalues, spectral.project(f));
}

double mse_limit(const LimitSolution& solution, double s) {
  const GridFunction v = solution.values_at(s);
  return grid_inner(v, v);
}

double pe_limit(const LimitSolution& solution, double s) {
  return spectral_energy(solution.spectral().eigenvalues, solution.modes_at(s));
}

PeBoundReport pe_time_average_bound(const LimitSolution& solution, double alpha,
                                    double tau) {
  if (!(alpha > 0.0) || !(tau > 0.0)) {
    throw ValidationError("pe_time_average_bound: alpha and tau must be > 0");
  }
  PeBoundReport r;
  r.pe = pe_limit(solution, tau);
  r.bound = mse_limit(solution, 0.0) / (alpha * tau);
  r.ratio = r.bound > 0.0 ? r.pe / r.bound : 0.0;
  r.holds = r.pe <= r.bound;
  return r;
}

RegimeReport classify_regime(std::size_t d, double T, double eta, double sigma,
                             std::optional<double> gamma,
                             RegimeThresholds thresholds) {
  if (d < 1 || !(T > 0.0) || !(eta >= 0.0) || !(sigma >= 0.0)) {
    throw ValidationError("classify_regime: need d >= 1, T > 0, eta, sigma >= 0");
  }
  RegimeReport r;
  r.d = d;
  r.T = T;
  r.eta = eta;
  r.sigma = sigma;
  r.gamma = gamma;
  const double dd = static_cast<double>(d);
  const double sqrt_t = std::sqrt(T);
  r.ratio_noise = sigma * sigma / (dd * dd * T);
  r.eta_dT = eta * dd * T;
  r.eta_sigma_sqrtT = eta * sigma * sqrt_t;
  if (r.ratio_noise < thresholds.low) {
    r.regime = NoiseRegime::Low;
  } else if (r.ratio_noise <= thresholds.high) {
    r.regime = NoiseRegime::Moderate;
  } else {
    r.regime = NoiseRegime::High;
  }
  r.alpha_hat = r.regime == NoiseRegime::High ? r.eta_sigma_sqrtT : r.eta_dT;
  if (gamma) {
    r.zeta_hat = *gamma / sqrt_t;
    r.beta_hat = *gamma * sigma / (dd * sqrt_t);
    if (r.regime == NoiseRegime::Low) {
      if (r.zeta_hat >= thresholds.low) {
        r.fluct_subregime = FluctuationRegime::ParticleInteraction;
      } else if (r.beta_hat >= thresholds.low) {
        r.fluct_subregime = FluctuationRegime::NoiseDominates;
      } else if (*gamma / dd < thresholds.low) {
        r.fluct_subregime = FluctuationRegime::InterpolationError;
      }
    }
  } else {
    r.beta_hat = sigma / (dd * sqrt_t);
  }
  return r;
}

std::string to_string(NoiseRegime regime) {
  switch (regime) {
    case NoiseRegime::Low:
      return "Low";
    case NoiseRegime::Moderate:
      return "Moderate";
    case NoiseRegime::High:
      return "High";
  }
  return "?";
}

std::string to_string(FluctuationRegime regime) {
  switch (regime) {
    case FluctuationRegime::ParticleInteraction:
      return "ParticleInteraction";
    case FluctuationRegime::NoiseDominates:
      return "NoiseDominates";
    case FluctuationRegime::InterpolationError:
      return "InterpolationError";
  }
  return "?";
}

std::string regime_json(const RegimeReport& r) {
  nlohmann::ordered_json j;
  j["d"] = r.d;
  j["T"] = r.T;
  j["eta"] = r.eta;
  j["sigma"] = r.sigma;
  j["gamma"] = r.gamma ? nlohmann::ordered_json(*r.gamma) : nlohmann::ordered_json(nullptr);
  j["ratio_noise"] = r.ratio_noise;
  j["eta_dT"] = r.eta_dT;
  j["eta_sigma_sqrtT"] = r.eta_sigma_sqrtT;
  j["regime"] = to_string(r.regime);
  j["fluct_subregime"] = r.fluct_subregime
                             ? nlohmann::ordered_json(to_string(*r.fluct_subregime))
                             : nlohmann::ordered_json(nullptr);
  j["alpha_hat"] = r.alpha_hat;
  j["beta_hat"] = r.beta_hat;
  j["zeta_hat"] = r.zeta_hat;
  return j.dump(2);
}

FluctuationValue mse_fluctuation(const Trajectory& traj,
                                 const LimitSolution& ode,
                                 const LimitSolution& u, double gamma,
                                 double s, const RegimeReport& regime) {
  require_low(regime, "mse_fluctuation");
  require_same_grid(ode, u);
  FluctuationValue v;
  v.empirical = gamma * (mse_discrete(traj, s) - mse_limit(ode, s));
  v.limit = 2.0 * grid_inner(ode.values_at(s), u.values_at(s));
  return v;
}

FluctuationValue pe_fluctuation(const Trajectory& traj,
                                const SpectralData& traj_spectral,
                                const LimitSolution& ode,
                                const LimitSolution& u, double gamma, double s,
                                const RegimeReport& regime) {
  require_low(regime, "pe_fluctuation");
  require_same_grid(ode, u);
  FluctuationValue v;
  v.empirical =
      gamma * (pe_discrete(traj, s, traj_spectral) - pe_limit(ode, s));
  const Eigen::VectorXd& lambda = ode.spectral().eigenvalues;
  v.limit = 2.0 * (lambda.array() * ode.modes_at(s).array() *
                   u.modes_at(s).array()).sum();
  return v;
}

double kolmogorov_cdf(std::size_t n, double d) {
  if (n < 1) throw ValidationError("kolmogorov_cdf: n must be >= 1");
  if (d <= 0.0) return 0.0;
  if (d >= 1.0) return 1.0;
  const double nd = static_cast<double>(n);
  const double s = d * d * nd;
  if (s > 7.24 || (s > 3.76 && n > 99)) {
    return 1.0 - 2.0 * std::exp(-(2.000071 + 0.331 / std::sqrt(nd) + 1.409 / nd) * s);
  }
  if (n > 3000) return kolmogorov_asymptotic(n, d);

  const int k = static_cast<int>(nd * d) + 1;
  const int m = 2 * k - 1;
  const double h = k - nd * d;
  Mat H(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) H(i, j) = (i - j + 1 < 0) ? 0.0 : 1.0;
  }
  for (int i = 0; i < m; ++i) {
    H(i, 0) -= std::pow(h, i + 1);
    H(m - 1, i) -= std::pow(h, m - i);
  }
  H(m - 1, 0) += (2.0 * h - 1.0 > 0.0 ? std::pow(2.0 * h - 1.0, m) : 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i - j + 1 > 0) {
        for (int g = 1; g <= i - j + 1; ++g) H(i, j) /= g;
      }
    }
  }
  Mat Q;
  int eq = 0;
  matrix_power(H, 0, Q, eq, static_cast<int>(n));
  double v = Q(k - 1, k - 1);
  for (std::size_t i = 1; i <= n; ++i) {
    v = v * static_cast<double>(i) / nd;
    if (v < 1e-140) {
      v *= 1e140;
      eq -= 140;
    }
  }
  return std::clamp(v * std::pow(10.0, eq), 0.0, 1.0);
}

KsResult ks_normal_test(std::span<const double> samples, bool studentize) {
  if (samples.size() < 3) {
    throw ValidationError("ks_normal_test: needs at least 3 samples");
  }
  std::vector<double> z;
  if (studentize) {
    z = studentized_sorted(samples);
  } else {
    z.assign(samples.begin(), samples.end());
    std::sort(z.begin(), z.end());
  }
  const double n = static_cast<double>(z.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = std_normal_cdf(z[i]);
    dmax = std::max({dmax, static_cast<double>(i + 1) / n - f,
                     f - static_cast<double>(i) / n});
  }
  KsResult r;
  r.n = z.size();
  r.statistic = dmax;
  r.p_value = std::clamp(1.0 - kolmogorov_cdf(z.size(), dmax), 0.0, 1.0);
  return r;
}

std::vector<std::pair<double, double>> qq_normal(std::span<const double> samples) {
  const auto z = studentized_sorted(samples);
  const boost::math::normal_distribution<double> normal;
  std::vector<std::pair<double, double>> out;
  out.reserve(z.size());
  const double n = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / n;
    out.emplace_back(boost::math::quantile(normal, p), z[i]);
  }
  return out;
}

SampleMoments sample_moments(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("sample_moments: no samples");
  SampleMoments m;
  m.mean = mean_of(samples);
  const double sd = sd_of(samples, m.mean);
  m.variance = sd * sd;
  m.se = sd / std::sqrt(static_cast<double>(samples.size()));
  return m;
}

ConvergenceMetrics convergence_metrics(std::span<const Trajectory> trajs,
                                       const LimitSolution& limit,
                                       std::span<const Probe> eval_grid) {
  if (trajs.empty()) throw ValidationError("convergence_metrics: no trajectories");
  if (eval_grid.empty()) throw ValidationError("convergence_metrics: no probes");
  ConvergenceMetrics out;
  const std::size_t reps = trajs.size();
  const std::size_t np = eval_grid.size();
  std::vector<std::vector<double>> per_probe(np, std::vector<double>(reps));
  std::vector<double> limit_at(np);
  for (std::size_t p = 0; p < np; ++p) {
    limit_at[p] = limit.value_at(eval_grid[p].s, eval_grid[p].x);
  }
  for (std::size_t r = 0; r < reps; ++r) {
    double sup = 0.0;
    double sq = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      const double diff =
          interpolate(trajs[r], eval_grid[p].s, eval_grid[p].x) - limit_at[p];
      per_probe[p][r] = diff;
      sup = std::max(sup, std::abs(diff));
      sq += diff * diff;
    }
    out.sup_distance.push_back(sup);
    out.l2_distance.push_back(std::sqrt(sq / static_cast<double>(np)));
  }
  out.sup_mean = mean_of(out.sup_distance);
  out.sup_sd = sd_of(out.sup_distance, out.sup_mean);
  out.l2_mean = mean_of(out.l2_distance);
  out.l2_sd = sd_of(out.l2_distance, out.l2_mean);

  if (reps >= 3) {
    for (std::size_t p = 0; p < np; ++p) {
      ProbeNormality pn;
      pn.probe = eval_grid[p];
      const auto m = sample_moments(per_probe[p]);
      pn.mean = m.mean;
      pn.sd = std::sqrt(m.variance);
      if (pn.sd > 0.0) {
        pn.ks = ks_normal_test(per_probe[p]);
        pn.qq = qq_normal(per_probe[p]);
      } else {
        pn.ks.n = reps;
      }
      out.probes.push_back(std::move(pn));
    }
  }
  return out;
}

}  // namespace sgdlab
