// Acceptance suite: one PASS/FAIL line per criterion.
#include "oracles.hpp"

#include "sgdlab/covariance.hpp"
#include "sgdlab/diagnostics.hpp"
#include "sgdlab/experiments.hpp"
#include "sgdlab/field.hpp"
#include "sgdlab/limit.hpp"
#include "sgdlab/sgdsim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace sgdlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<Outcome()>& body,
               double runtime_limit = 0.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (runtime_limit > 0.0 && secs >= runtime_limit) {
    o.pass = false;
    o.detail += "; runtime over limit";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] C%d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::shared_ptr<const SpectralData> spectral(const CovarianceModel& m, std::size_t n,
                                             double cutoff = 0.0) {
  return std::make_shared<const SpectralData>(spectral_decompose(m, n, cutoff));
}

// Values of Theta-bar at (s, x) over `reps` SGD replications.
std::vector<double> sgd_marginal(const CovarianceModel& model, std::size_t d, double T,
                                 double eta, double sigma, const InitialCondition& init,
                                 double s, double x, std::size_t reps, std::uint64_t seed) {
  SgdConfig cfg;
  cfg.d = d;
  cfg.T = T;
  cfg.tau = s;
  cfg.eta = eta;
  cfg.init = init;
  cfg.record_stride = cfg.steps();
  const FieldSampler sampler(model, d, true);
  const NoiseSpec noise = NoiseSpec::gaussian(sigma);
  std::vector<double> out;
  for (std::size_t r = 0; r < reps; ++r) {
    RngStream field_rng(seed, r, StreamRole::Field);
    RngStream noise_rng(seed, r, StreamRole::Noise);
    out.push_back(interpolate(run(cfg, sampler, noise, field_rng, noise_rng), s, x));
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

const char* kLowNoiseSweep = R"({
  "model": {"preset": "example1"},
  "scaling": {
    "preset": "low_noise",
    "d_list": [50, 100, 200],
    "T_rule": {"kind": "quadratic", "c": 1.0},
    "tau": 1.0,
    "alpha": 2.0,
    "sigma_rule": {"kind": "constant", "value": 0.0},
    "gamma_rule": "none"
  },
  "init": {"kind": "constant", "value": 1.0},
  "replications": 20,
  "seed": 20240611,
  "solver": {"n": 256, "dt": 0.001},
  "probes": [[0.25, 0.1], [0.25, 0.5], [0.25, 0.9], [0.5, 0.3], [0.5, 0.7],
             [0.75, 0.2], [0.75, 0.6], [1.0, 0.1], [1.0, 0.5], [1.0, 0.9]],
  "curve_times": [0.0, 0.25, 0.5, 0.75, 1.0]
})";

}  // namespace

int main(int argc, char** argv) {
  const fs::path out_root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");

  criterion(1, "spectral correctness", [] {
    const auto sd = spectral_decompose(CovarianceModel::example1(), 256);
    const double e = std::max({std::abs(sd.eigenvalues(0) - 1.0),
                               std::abs(sd.eigenvalues(1) - 0.5),
                               std::abs(sd.eigenvalues(2) - 0.5)});
    return Outcome{e <= 1e-6, fmt("leading eigenvalues %.12f %.12f %.12f, max error %.2e",
                                  sd.eigenvalues(0), sd.eigenvalues(1), sd.eigenvalues(2), e)};
  }, 5.0);

  ExperimentSummary sweep;
  const fs::path sweep_dir = out_root / "low_noise_sweep";
  criterion(2, "low-noise ODE limit", [&] {
    auto cfg = parse_config(kLowNoiseSweep);
    cfg.outputs = sweep_dir;
    sweep = run_experiment(cfg, resolve_threads(std::nullopt));
    const auto& m = sweep.sup_mean;
    const bool decreasing = m[0] > m[1] && m[1] > m[2];
    return Outcome{decreasing && m[2] <= 0.05 && sweep.diverged == 0,
                   fmt("mean sup distance %.4f > %.4f > %.4f, terminal <= 0.05", m[0], m[1],
                       m[2])};
  }, 600.0);

  criterion(3, "MSE decay envelope", [&] {
    const auto rows = read_csv(sweep_dir / "mse_curves.csv");
    if (rows.empty()) return Outcome{false, "mse_curves.csv missing"};
    const double reps = 20.0, alpha = 2.0, lambda = 0.5;
    // (d, s) -> sum of mse_dt, count; mse_limit(0) per d.
    std::map<std::pair<std::string, double>, std::pair<double, int>> acc;
    std::map<std::string, double> mse0;
    for (const auto& r : rows) {
      const double s = std::stod(r[1]);
      auto& a = acc[{r[4], s}];
      a.first += std::stod(r[2]);
      a.second += 1;
      if (s == 0.0) mse0[r[4]] = std::stod(r[3]);
    }
    bool ok = true;
    double worst = 0.0;
    for (const auto& d : {"50", "100", "200"}) {
      for (double s : {0.25, 0.5, 1.0}) {
        const auto& a = acc[{d, s}];
        const double mean = a.first / a.second;
        const double env =
            mse0[d] * std::exp(-2.0 * alpha * lambda * s) * (1.0 + 3.0 / std::sqrt(reps));
        ok = ok && a.second == 20 && mean <= env;
        worst = std::max(worst, mean / env);
      }
    }
    return Outcome{ok, fmt("max mse_discrete / envelope = %.4f over 3 pairs x 3 times", worst)};
  });

  criterion(4, "PE time-average bound", [] {
    const auto sd = spectral(CovarianceModel::example2(50), 256);
    const auto init = sample_initial(ProfileInit{"smooth_random", 7}, 256);
    const auto sol = solve_ode(sd, init, 1.0, 4.0, 1e-3);
    bool ok = true;
    std::string detail = "pe/bound";
    for (double tau : {1.0, 2.0, 4.0}) {
      const auto r = pe_time_average_bound(sol, 1.0, tau);
      ok = ok && r.pe <= r.bound;
      detail += fmt(" tau=%g: %.4f", tau, r.ratio);
    }
    return Outcome{ok, detail};
  }, 30.0);

  criterion(5, "moderate-noise SDE marginals", [] {
    const std::size_t d = 100, reps = 200, paths = 20000;
    const double T = 1e4, alpha = 1.0, beta = 1.0, s = 0.5, x = 0.5;
    const double sigma = beta * d * std::sqrt(T);
    const auto emp = sample_moments(sgd_marginal(CovarianceModel::example1(), d, T,
                                                 alpha / (d * T), sigma, ConstantInit{1.0}, s,
                                                 x, reps, 501));
    const auto sd = spectral(CovarianceModel::example1(), 256, 1e-10);
    const GridFunction init = GridFunction::Constant(256, 1.0);
    std::vector<double> lim;
    for (std::size_t p = 0; p < paths; ++p) {
      RngStream rng(502, p, StreamRole::Limit);
      lim.push_back(solve_theta_sde(sd, init, alpha, beta, s, 1e-3, rng, SdeScheme::ExactOU)
                        .value_at(s, x));
    }
    const auto ref = sample_moments(lim);
    const double se = std::sqrt(emp.se * emp.se + ref.se * ref.se);
    const double rel = std::abs(emp.variance / ref.variance - 1.0);
    const bool ok = std::abs(emp.mean - ref.mean) <= 3.0 * se && rel <= 0.15;
    return Outcome{ok, fmt("mean %.4f vs %.4f (%.2f SE), ", emp.mean, ref.mean,
                           std::abs(emp.mean - ref.mean) / se) +
                           fmt("variance %.4f vs %.4f (%.1f%% off, limit 15%%)", emp.variance,
                               ref.variance, 100.0 * rel)};
  }, 600.0);

  criterion(6, "high-noise limit variance", [] {
    const std::size_t d = 50, reps = 200;
    const double T = 1e4, alpha = 1.0, s = 0.5, x = 0.5;
    const double sigma = d * T;
    const double eta = alpha / (sigma * std::sqrt(T));
    const auto emp = sample_moments(sgd_marginal(CovarianceModel::example1(), d, T, eta, sigma,
                                                 ConstantInit{1.0}, s, x, reps, 601));
    const double target = alpha * alpha * eval_A(CovarianceModel::example1(), x, x) * s;
    const double rel = std::abs(emp.variance / target - 1.0);
    return Outcome{rel <= 0.15, fmt("variance %.4f vs alpha^2 A(x,x) s = %.4f (%.1f%% off)",
                                    emp.variance, target, 100.0 * rel)};
  }, 600.0);

  criterion(7, "fluctuation regime 1", [] {
    const std::size_t d = 200, reps = 200, n = 256, paths = 4000;
    const double T = d * d / 4.0, alpha = 2.0, tau = 0.5, x = 0.5, dt = 1e-3;
    const double gamma = std::sqrt(T);
    const auto model = CovarianceModel::example1();
    const auto regime = classify_regime(d, T, alpha / (d * T), 1.0, gamma);
    if (regime.regime != NoiseRegime::Low ||
        regime.fluct_subregime != FluctuationRegime::ParticleInteraction) {
      return Outcome{false, "configuration is not in the particle-interaction regime"};
    }
    const ProfileInit init{"mixed"};
    const auto emp_theta =
        sgd_marginal(model, d, T, alpha / (d * T), 1.0, init, tau, x, reps, 701);
    const auto sd = spectral(model, n, 1e-10);
    auto theta =
        std::make_shared<const LimitSolution>(solve_ode(sd, sample_initial(init, n), alpha, tau, dt));
    std::vector<double> u_emp;
    for (double v : emp_theta) u_emp.push_back(gamma * (v - theta->value_at(tau, x)));
    const FluctuationSpec spec(alpha, regime.beta_hat, regime.zeta_hat,
                               FluctuationRegime::ParticleInteraction, theta);
    std::vector<double> u_lim;
    const GridFunction zero = GridFunction::Zero(n);
    for (std::size_t p = 0; p < paths; ++p) {
      RngStream rng(702, p, StreamRole::Limit);
      u_lim.push_back(solve_fluctuation_sde(spec, sd, zero, tau, dt, rng).value_at(tau, x));
    }
    const auto ks = ks_normal_test(u_emp);
    const double v_emp = sample_moments(u_emp).variance;
    const double v_lim = sample_moments(u_lim).variance;
    const double rel = std::abs(v_emp / v_lim - 1.0);
    return Outcome{ks.p_value > 0.01 && rel <= 0.2,
                   fmt("KS p = %.3f, variance %.4f vs %.4f (%.1f%% off, limit 20%%)", ks.p_value,
                       v_emp, v_lim, 100.0 * rel)};
  }, 600.0);

  criterion(8, "Picard vs exponential Euler", [] {
    const double alpha = 1.0, tau = 1.0, dt = 1e-3;
    const auto model = CovarianceModel::example1();
    const auto sd = spectral(model, 128, 1e-10);
    auto theta = std::make_shared<const LimitSolution>(
        solve_ode(sd, sample_initial(ProfileInit{"mixed"}, 128), alpha, tau, dt));
    const FluctuationSpec spec(alpha, 0.5, 1.0, FluctuationRegime::ParticleInteraction, theta);
    RngStream rng(801, 0, StreamRole::Limit);
    const GridFunction zero = GridFunction::Zero(128);
    const auto noise = draw_fluctuation_increments(spec, *sd, tau, dt, rng);
    const auto pic = picard_solve(spec, sd, zero, noise, 100, 1e-12);
    const auto eul = integrate_fluctuation(spec, sd, zero, noise);
    double gap = 0.0;
    for (std::size_t t = 0; t < eul.times().size(); ++t) {
      gap = std::max(gap, (eul.values()[t] - pic.solution.values()[t]).cwiseAbs().maxCoeff());
    }
    const auto& dk = pic.differences;
    const double c = model.sup_c2() * alpha * tau;
    bool envelope = dk.size() >= 7;
    double fact = 1.0, worst = 0.0;
    for (std::size_t k = 1; k <= 6 && k < dk.size(); ++k) {
      fact *= static_cast<double>(k);
      const double bound = dk[0] * std::pow(c, static_cast<double>(k)) / fact;
      envelope = envelope && dk[k] <= bound;
      worst = std::max(worst, dk[k] / bound);
    }
    return Outcome{gap <= 10.0 * dt && envelope,
                   fmt("sup gap %.2e <= %.0e; max diff_k / ((C2 a tau)^k/k! diff_0) = %.3f "
                       "for k=1..6; %g iterations",
                       gap, 10.0 * dt, worst, static_cast<double>(pic.iterations))};
  });

  criterion(9, "stability inequality", [] {
    const double alpha = 1.0, tau = 1.0, dt = 1e-2;
    const std::size_t n = 64;
    const auto sd = spectral(CovarianceModel::example1(), n, 1e-10);
    auto theta = std::make_shared<const LimitSolution>(
        solve_ode(sd, sample_initial(ProfileInit{"mixed"}, n), alpha, tau, dt));
    double worst = 0.0;
    bool ok = true;
    std::uint64_t cell = 0;
    for (double beta : {0.5, 1.0, 2.0}) {
      for (double zeta : {0.5, 1.0, 2.0}) {
        const FluctuationSpec spec(alpha, beta, zeta, FluctuationRegime::ParticleInteraction,
                                   theta);
        std::vector<LimitSolution> paths;
        for (std::size_t p = 0; p < 200; ++p) {
          RngStream rng(900 + cell, p, StreamRole::Limit);
          paths.push_back(
              solve_fluctuation_sde(spec, sd, sample_initial(ConstantInit{0.5}, n), tau, dt, rng));
        }
        const auto r = stability_check(paths, spec, tau);
        ok = ok && r.ratio <= 1.0;
        worst = std::max(worst, r.ratio);
        ++cell;
      }
    }
    return Outcome{ok, fmt("max lhs/rhs over 3x3 (beta, zeta) grid = %.3e", worst)};
  });

  criterion(10, "embedding bound", [] {
    const auto model = CovarianceModel::example1();
    bool ok = true;
    std::string detail = "error/bound";
    for (std::size_t d : {10, 50, 100, 500}) {
      const double e = embedding_sup_error(model, d);
      const double bound = 2.0 * model.lipschitz_c3() / static_cast<double>(d);
      ok = ok && e <= bound;
      detail += fmt(" d=%g: %.3f", static_cast<double>(d), e / bound);
    }
    return Outcome{ok, detail};
  });

  criterion(11, "moment oracles and xi3 fast path", [] {
    const std::size_t d = 16, draws = 1000000;
    const auto model = CovarianceModel::example1();
    const FieldSampler sampler(model, d, true);
    std::mt19937_64 pick(1101);
    std::uniform_int_distribution<std::size_t> idx(0, d - 1);
    std::vector<std::array<std::size_t, 4>> quads(20);
    std::vector<std::array<std::size_t, 8>> octs(20);
    for (auto& q : quads) for (auto& i : q) i = idx(pick);
    for (auto& o : octs) for (auto& i : o) i = idx(pick);
    std::vector<double> s1(40, 0.0), s2(40, 0.0);
    RngStream rng(1102);
    GridFunction f(d);
    for (std::size_t k = 0; k < draws; ++k) {
      sampler.draw(rng, std::span<double>(f.data(), d));
      for (std::size_t t = 0; t < 20; ++t) {
        double p = 1.0;
        for (auto i : quads[t]) p *= f(i);
        s1[t] += p;
        s2[t] += p * p;
        double q = 1.0;
        for (auto i : octs[t]) q *= f(i);
        s1[20 + t] += q;
        s2[20 + t] += q * q;
      }
    }
    const double N = static_cast<double>(draws);
    double worst = 0.0;
    for (std::size_t t = 0; t < 40; ++t) {
      const double mean = s1[t] / N;
      const double se = std::sqrt((s2[t] / N - mean * mean) / (N - 1.0));
      auto pt = [&](std::size_t i) { return static_cast<double>(i + 1) / d; };
      double exact;
      if (t < 20) {
        const auto& q = quads[t];
        exact = eval_B_gaussian(model, pt(q[0]), pt(q[1]), pt(q[2]), pt(q[3]));
      } else {
        std::array<double, 8> xs;
        for (int i = 0; i < 8; ++i) xs[i] = pt(octs[t - 20][i]);
        exact = eval_E_gaussian(model, xs);
      }
      worst = std::max(worst, std::abs(mean - exact) / se);
    }
    double kernel_err = 0.0;
    for (int which = 0; which < 2; ++which) {
      Eigen::VectorXd theta(16);
      for (int i = 0; i < 16; ++i) theta(i) = std::sin(1.3 * i) + 0.1 * i * i / 16.0;
      const auto m = which == 0 ? model : CovarianceModel::example2(20);
      const auto k = which == 0 ? oracle::example1() : oracle::example2(20);
      kernel_err = std::max(
          kernel_err,
          (xi3_kernel(m, theta) - oracle::naive_xi3_kernel(k, theta)).cwiseAbs().maxCoeff());
    }
    return Outcome{worst <= 4.0 && kernel_err <= 1e-10,
                   fmt("max |MC - exact| = %.2f SE over 20 B and 20 E tuples; "
                       "xi3 kernel max error %.1e",
                       worst, kernel_err)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
