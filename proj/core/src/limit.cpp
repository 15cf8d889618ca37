#include "sgdlab/limit.hpp"

#include "sgdlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace sgdlab {

namespace {

struct TimeGrid {
  std::size_t steps;
  double h;
};

TimeGrid make_time_grid(double tau, double dt) {
  if (!(tau > 0.0)) throw ValidationError("solver: tau must be positive");
  if (!(dt > 0.0)) throw ValidationError("solver: dt must be positive");
  const auto steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(tau / dt)));
  return {steps, tau / static_cast<double>(steps)};
}

void check_init(const SpectralData& spectral, const GridFunction& init) {
  if (static_cast<std::size_t>(init.size()) != spectral.grid_size) {
    throw ValidationError("solver: initial condition has length " +
                          std::to_string(init.size()) + ", grid size is " +
                          std::to_string(spectral.grid_size));
  }
}

GridFunction residual_of(const SpectralData& spectral, const GridFunction& init,
                         const Eigen::VectorXd& c0) {
  return init - spectral.synthesize(c0);
}

bool should_record(std::size_t step, std::size_t steps, std::size_t stride) {
  return step == steps || step % stride == 0;
}

}  // namespace

double grid_inner(const GridFunction& f, const GridFunction& g) {
  return f.dot(g) / static_cast<double>(f.size());
}

LimitSolution::LimitSolution(std::shared_ptr<const SpectralData> spectral,
                             SolutionKind kind, GridFunction residual)
    : spectral_(std::move(spectral)), kind_(kind), residual_(std::move(residual)) {
  if (!spectral_) throw ValidationError("LimitSolution: null spectral data");
}

void LimitSolution::append(double time, Eigen::VectorXd modes) {
  if (!times_.empty() && !(time > times_.back())) {
    throw ValidationError("LimitSolution: times must increase strictly");
  }
  times_.push_back(time);
  values_.push_back(residual_ + spectral_->synthesize(modes));
  modes_.push_back(std::move(modes));
}

LimitSolution::Bracket LimitSolution::bracket(double s) const {
  if (times_.empty()) throw ValidationError("LimitSolution: empty solution");
  const double slack = 1e-9 * std::max(1.0, horizon());
  if (s < times_.front() - slack || s > times_.back() + slack) {
    throw ValidationError("LimitSolution: time " + std::to_string(s) +
                          " outside [0, " + std::to_string(horizon()) + "]");
  }
  if (s <= times_.front()) return {0, 0, 0.0};
  if (s >= times_.back()) return {times_.size() - 1, times_.size() - 1, 0.0};
  const auto it = std::upper_bound(times_.begin(), times_.end(), s);
  const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
  const std::size_t lo = hi - 1;
  const double w = (s - times_[lo]) / (times_[hi] - times_[lo]);
  if (w <= 1e-12) return {lo, lo, 0.0};
  if (w >= 1.0 - 1e-12) return {hi, hi, 0.0};
  return {lo, hi, w};
}

GridFunction LimitSolution::values_at(double s) const {
  const auto b = bracket(s);
  if (b.lo == b.hi) return values_[b.lo];
  return (1.0 - b.w) * values_[b.lo] + b.w * values_[b.hi];
}

Eigen::VectorXd LimitSolution::modes_at(double s) const {
  const auto b = bracket(s);
  if (b.lo == b.hi) return modes_[b.lo];
  return (1.0 - b.w) * modes_[b.lo] + b.w * modes_[b.hi];
}

double LimitSolution::value_at(double s, double x) const {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ValidationError("LimitSolution: x must lie in [0,1]");
  }
  const auto b = bracket(s);
  const std::size_t n = grid_size();
  const double nx = snap_to_integer(static_cast<double>(n) * x);
  // Grid point i/n is stored at index i - 1.
  auto at = [&](const GridFunction& v) {
    if (nx <= 1.0) return v(0);
    const auto i = static_cast<std::size_t>(std::floor(nx));
    if (i >= n) return v(static_cast<Eigen::Index>(n - 1));
    const double frac = nx - static_cast<double>(i);
    const auto ii = static_cast<Eigen::Index>(i);
    return (1.0 - frac) * v(ii - 1) + frac * v(ii);
  };
  if (b.lo == b.hi) return at(values_[b.lo]);
  return (1.0 - b.w) * at(values_[b.lo]) + b.w * at(values_[b.hi]);
}

LimitSolution solve_ode(std::shared_ptr<const SpectralData> spectral,
                        const GridFunction& init, double alpha, double tau,
                        double dt) {
  check_init(*spectral, init);
  if (!(alpha > 0.0)) throw ValidationError("solve_ode: alpha must be positive");
  const auto grid = make_time_grid(tau, dt);
  const Eigen::VectorXd c0 = spectral->project(init);
  LimitSolution sol(spectral, SolutionKind::DeterministicODE,
                    residual_of(*spectral, init, c0));
  const Eigen::VectorXd rate = alpha * spectral->eigenvalues;
  for (std::size_t n = 0; n <= grid.steps; ++n) {
    const double s = static_cast<double>(n) * grid.h;
    sol.append(s, (c0.array() * (-rate.array() * s).exp()).matrix());
  }
  return sol;
}

LimitSolution solve_theta_sde(std::shared_ptr<const SpectralData> spectral,
                              const GridFunction& init, double alpha,
                              double beta, double tau, double dt,
                              RngStream& rng, SdeScheme scheme, Drift drift,
                              std::size_t record_stride) {
  check_init(*spectral, init);
  if (!(alpha > 0.0)) {
    throw ValidationError("solve_theta_sde: alpha must be positive");
  }
  if (!(beta >= 0.0)) throw ValidationError("solve_theta_sde: beta must be >= 0");
  if (record_stride < 1) record_stride = 1;
  const auto grid = make_time_grid(tau, dt);
  const double lam_max = spectral->max_eigenvalue();
  if (drift == Drift::On && scheme == SdeScheme::EulerMaruyama &&
      lam_max > 0.0 && grid.h > 1.0 / (10.0 * alpha * lam_max) * (1.0 + 1e-12)) {
    throw ValidationError(
        "solve_theta_sde: Euler-Maruyama needs dt <= 1/(10 alpha lambda_max) = " +
        std::to_string(1.0 / (10.0 * alpha * lam_max)));
  }

  const Eigen::Index m = spectral->eigenvalues.size();
  Eigen::VectorXd c = spectral->project(init);
  LimitSolution sol(spectral, SolutionKind::PathwiseSDE,
                    residual_of(*spectral, init, c));
  sol.append(0.0, c);

  // Per-mode one-step coefficients: c <- decay c + scale Z.
  Eigen::VectorXd decay(m);
  Eigen::VectorXd scale(m);
  const double sqrt_h = std::sqrt(grid.h);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double lam = spectral->eigenvalues(k);
    const double diffusion = alpha * beta * std::sqrt(lam);
    const double rate = alpha * lam;
    if (drift == Drift::Off || rate == 0.0) {
      decay(k) = 1.0;
      scale(k) = diffusion * sqrt_h;
    } else if (scheme == SdeScheme::ExactOU) {
      decay(k) = std::exp(-rate * grid.h);
      scale(k) = diffusion *
                 std::sqrt(-std::expm1(-2.0 * rate * grid.h) / (2.0 * rate));
    } else {
      decay(k) = 1.0 - rate * grid.h;
      scale(k) = diffusion * sqrt_h;
    }
  }

  for (std::size_t n = 1; n <= grid.steps; ++n) {
    for (Eigen::Index k = 0; k < m; ++k) {
      c(k) = decay(k) * c(k) + scale(k) * rng.normal();
    }
    if (should_record(n, grid.steps, record_stride)) {
      sol.append(static_cast<double>(n) * grid.h, c);
    }
  }
  return sol;
}

FluctuationSpec::FluctuationSpec(double alpha_, double beta_, double zeta_,
                                 FluctuationRegime regime_,
                                 std::shared_ptr<const LimitSolution> theta_path_)
    : alpha(alpha_),
      beta(beta_),
      zeta(zeta_),
      regime(regime_),
      theta_path(std::move(theta_path_)) {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(zeta >= 0.0)) {
    throw ValidationError("fluctuation: alpha, beta, zeta must be >= 0");
  }
  if (regime == FluctuationRegime::NoiseDominates) zeta = 0.0;
  if (regime == FluctuationRegime::InterpolationError) {
    beta = 0.0;
    zeta = 0.0;
  }
}

Eigen::MatrixXd xi3_kernel(const CovarianceModel& model,
                           const GridFunction& theta) {
  const auto n = static_cast<std::size_t>(theta.size());
  if (n < 1) throw ValidationError("xi3_kernel: empty grid function");
  const Eigen::MatrixXd a = kernel_matrix(model, n);
  const Eigen::VectorXd a_theta = a * theta / static_cast<double>(n);
  const double quad = theta.dot(a_theta) / static_cast<double>(n);
  Eigen::MatrixXd k = quad * a;
  k.noalias() += a_theta * a_theta.transpose();
  return k;
}

FluctuationIncrements draw_fluctuation_increments(const FluctuationSpec& spec,
                                                  const SpectralData& spectral,
                                                  double tau, double dt,
                                                  RngStream& rng) {
  const auto grid = make_time_grid(tau, dt);
  const Eigen::Index m = spectral.eigenvalues.size();
  const LimitSolution* theta = spec.theta_path.get();
  if (theta != nullptr) {
    if (theta->grid_size() != spectral.grid_size ||
        theta->spectral().mode_count() != spectral.mode_count()) {
      throw ValidationError(
          "fluctuation: theta_path must use the same spectral data");
    }
    const auto ts = theta->times();
    if (ts.back() < tau - 1e-9 * std::max(1.0, tau)) {
      throw ValidationError("fluctuation: theta_path ends before tau");
    }
    for (std::size_t i = 1; i < ts.size(); ++i) {
      if (ts[i] - ts[i - 1] > grid.h * (1.0 + 1e-9)) {
        throw ValidationError(
            "fluctuation: theta_path time grid is coarser than dt");
      }
    }
  }

  const Eigen::VectorXd sqrt_lam = spectral.eigenvalues.cwiseSqrt();
  const double sqrt_h = std::sqrt(grid.h);
  FluctuationIncrements out;
  out.dt = grid.h;
  out.xi2.reserve(grid.steps);
  out.xi3.reserve(grid.steps);
  Eigen::VectorXd theta_modes = Eigen::VectorXd::Zero(m);
  for (std::size_t n = 0; n < grid.steps; ++n) {
    Eigen::VectorXd z2(m);
    for (Eigen::Index k = 0; k < m; ++k) z2(k) = rng.normal();
    Eigen::VectorXd z3(m);
    for (Eigen::Index k = 0; k < m; ++k) z3(k) = rng.normal();
    const double z_rank_one = rng.normal();

    if (theta != nullptr) {
      theta_modes = theta->modes_at(static_cast<double>(n) * grid.h);
    }
    // K = q A + v v^T with v = A theta, q = <theta, A theta>; in modes
    // v_k = lambda_k theta_k and q = sum lambda_k theta_k^2.
    const Eigen::VectorXd v = spectral.eigenvalues.cwiseProduct(theta_modes);
    const double q = theta_modes.dot(v);
    out.xi2.push_back(sqrt_h * sqrt_lam.cwiseProduct(z2));
    out.xi3.push_back(
        sqrt_h * (std::sqrt(std::max(q, 0.0)) * sqrt_lam.cwiseProduct(z3) +
                  z_rank_one * v));
  }
  return out;
}

LimitSolution integrate_fluctuation(const FluctuationSpec& spec,
                                    std::shared_ptr<const SpectralData> spectral,
                                    const GridFunction& init_U,
                                    const FluctuationIncrements& noise,
                                    std::size_t record_stride) {
  check_init(*spectral, init_U);
  if (record_stride < 1) record_stride = 1;
  Eigen::VectorXd c = spectral->project(init_U);
  LimitSolution sol(spectral, SolutionKind::PathwiseSDE,
                    residual_of(*spectral, init_U, c));
  sol.append(0.0, c);
  const Eigen::VectorXd decay =
      (-spec.alpha * noise.dt * spectral->eigenvalues.array()).exp().matrix();
  const double a2 = spec.alpha * spec.beta;
  const double a3 = spec.alpha * spec.zeta;
  const std::size_t steps = noise.steps();
  for (std::size_t n = 0; n < steps; ++n) {
    c = decay.cwiseProduct(c + a2 * noise.xi2[n] + a3 * noise.xi3[n]);
    if (should_record(n + 1, steps, record_stride)) {
      sol.append(static_cast<double>(n + 1) * noise.dt, c);
    }
  }
  return sol;
}

LimitSolution solve_fluctuation_sde(const FluctuationSpec& spec,
                                    std::shared_ptr<const SpectralData> spectral,
                                    const GridFunction& init_U, double tau,
                                    double dt, RngStream& rng,
                                    std::size_t record_stride) {
  const auto noise = draw_fluctuation_increments(spec, *spectral, tau, dt, rng);
  return integrate_fluctuation(spec, std::move(spectral), init_U, noise,
                               record_stride);
}

Eigen::MatrixXd fluctuation_mode_covariance(const FluctuationSpec& spec,
                                            const SpectralData& spectral,
                                            double tau, double dt) {
  const auto grid = make_time_grid(tau, dt);
  const Eigen::VectorXd& lam = spectral.eigenvalues;
  const Eigen::Index m = lam.size();
  const Eigen::VectorXd decay = (-spec.alpha * grid.h * lam.array()).exp().matrix();
  const Eigen::MatrixXd decay2 = decay * decay.transpose();
  const double a2 = spec.alpha * spec.alpha * grid.h;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
  for (std::size_t n = 0; n < grid.steps; ++n) {
    if (spec.theta_path) {
      theta = spec.theta_path->modes_at(static_cast<double>(n) * grid.h);
    }
    const Eigen::VectorXd v = lam.cwiseProduct(theta);
    const double q = theta.dot(v);
    p.diagonal() += a2 * (spec.beta * spec.beta + spec.zeta * spec.zeta * q) * lam;
    p.noalias() += a2 * spec.zeta * spec.zeta * v * v.transpose();
    p = p.cwiseProduct(decay2);
  }
  return p;
}

double grid_point_variance(const SpectralData& spectral,
                           const Eigen::MatrixXd& mode_cov, double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ValidationError("grid_point_variance: x must lie in [0,1]");
  }
  const std::size_t n = spectral.grid_size;
  const double nx = snap_to_integer(static_cast<double>(n) * x);
  Eigen::RowVectorXd w;
  if (nx <= 1.0) {
    w = spectral.eigenvectors.row(0);
  } else {
    const auto i = static_cast<std::size_t>(std::floor(nx));
    if (i >= n) {
      w = spectral.eigenvectors.row(static_cast<Eigen::Index>(n - 1));
    } else {
      const double frac = nx - static_cast<double>(i);
      const auto ii = static_cast<Eigen::Index>(i);
      w = (1.0 - frac) * spectral.eigenvectors.row(ii - 1) +
          frac * spectral.eigenvectors.row(ii);
    }
  }
  return (w * mode_cov * w.transpose())(0, 0);
}

PicardNonConvergence::PicardNonConvergence(std::size_t iterations,
                                           double last_ratio,
                                           double last_difference)
    : std::runtime_error("picard: no convergence after " +
                         std::to_string(iterations) +
                         " iterations, last contraction ratio " +
                         std::to_string(last_ratio)),
      last_ratio_(last_ratio),
      last_difference_(last_difference) {}

PicardResult picard_solve(const FluctuationSpec& spec,
                          std::shared_ptr<const SpectralData> spectral,
                          const GridFunction& init_U,
                          const FluctuationIncrements& noise,
                          std::size_t max_iters, double tol) {
  check_init(*spectral, init_U);
  if (max_iters < 1) throw ValidationError("picard: max_iters must be >= 1");
  const std::size_t steps = noise.steps();
  const double h = noise.dt;
  const Eigen::VectorXd& lam = spectral->eigenvalues;
  const Eigen::VectorXd c0 = spectral->project(init_U);

  // forcing[n] = U(0) + alpha beta xi_2(s_n) + alpha zeta xi_3(s_n).
  std::vector<Eigen::VectorXd> forcing(steps + 1, c0);
  for (std::size_t n = 0; n < steps; ++n) {
    forcing[n + 1] = forcing[n] + spec.alpha * spec.beta * noise.xi2[n] +
                     spec.alpha * spec.zeta * noise.xi3[n];
  }

  std::vector<Eigen::VectorXd> current(steps + 1, c0);
  std::vector<Eigen::VectorXd> next(steps + 1);
  std::vector<double> diffs;
  double last_ratio = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 1; k <= max_iters; ++k) {
    Eigen::VectorXd integral = Eigen::VectorXd::Zero(lam.size());
    next[0] = forcing[0];
    double sup = 0.0;
    for (std::size_t n = 0; n < steps; ++n) {
      integral += 0.5 * h * lam.cwiseProduct(current[n] + current[n + 1]);
      next[n + 1] = forcing[n + 1] - spec.alpha * integral;
    }
    for (std::size_t n = 0; n <= steps; ++n) {
      const GridFunction delta = spectral->synthesize(next[n] - current[n]);
      sup = std::max(sup, delta.cwiseAbs().maxCoeff());
    }
    if (!diffs.empty() && diffs.back() > 0.0) last_ratio = sup / diffs.back();
    diffs.push_back(sup);
    std::swap(current, next);
    if (sup <= tol) {
      LimitSolution sol(spectral, SolutionKind::PathwiseSDE,
                        residual_of(*spectral, init_U, c0));
      for (std::size_t n = 0; n <= steps; ++n) {
        sol.append(static_cast<double>(n) * h, current[n]);
      }
      return {std::move(sol), std::move(diffs), k};
    }
  }
  throw PicardNonConvergence(max_iters, last_ratio, diffs.back());
}

PicardResult picard_solve(const FluctuationSpec& spec,
                          std::shared_ptr<const SpectralData> spectral,
                          const GridFunction& init_U, double tau, double dt,
                          RngStream& rng, std::size_t max_iters, double tol) {
  const auto noise = draw_fluctuation_increments(spec, *spectral, tau, dt, rng);
  return picard_solve(spec, std::move(spectral), init_U, noise, max_iters, tol);
}

StabilityReport stability_check(std::span<const LimitSolution> paths,
                                const FluctuationSpec& spec, double tau) {
  if (paths.size() < 100) {
    throw ValidationError("stability_check: needs at least 100 paths, got " +
                          std::to_string(paths.size()));
  }
  const double c2 = paths.front().spectral().model.sup_c2();
  const double c5 = 3.0 * c2 * c2;

  double lhs = 0.0;
  double init_sq = 0.0;
  for (const auto& p : paths) {
    double worst = 0.0;
    for (const auto& v : p.values()) worst = std::max(worst, grid_inner(v, v));
    lhs += worst;
    init_sq += grid_inner(p.values().front(), p.values().front());
  }
  lhs /= static_cast<double>(paths.size());
  init_sq /= static_cast<double>(paths.size());

  double theta_energy = 0.0;
  if (spec.zeta > 0.0 && spec.theta_path) {
    const auto ts = spec.theta_path->times();
    const auto vs = spec.theta_path->values();
    for (std::size_t i = 1; i < ts.size() && ts[i - 1] < tau; ++i) {
      const double t_hi = std::min(ts[i], tau);
      theta_energy += 0.5 * (t_hi - ts[i - 1]) *
                      (grid_inner(vs[i - 1], vs[i - 1]) + grid_inner(vs[i], vs[i]));
    }
  }

  const double a2 = spec.alpha * spec.alpha;
  const double bracket = init_sq + c2 * a2 * spec.beta * spec.beta * tau +
                         (c5 + c2 * c2) * a2 * spec.zeta * spec.zeta * theta_energy;
  const double rhs = 4.0 * bracket * std::exp(4.0 * c2 * c2 * a2 * tau * tau);

  StabilityReport r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.paths = paths.size();
  if (rhs == 0.0) {
    r.ratio = lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    r.ratio = lhs / rhs;
  }
  r.holds = r.ratio <= 1.0;
  return r;
}

void write_solution_csv(std::ostream& os, std::span<const LimitSolution> paths,
                        bool header) {
  if (header) os << "path_id,s,x,value\n";
  os.precision(17);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& sol = paths[p];
    const auto n = sol.grid_size();
    for (std::size_t t = 0; t < sol.times().size(); ++t) {
      const auto& v = sol.values()[t];
      for (std::size_t i = 0; i < n; ++i) {
        os << p << ',' << sol.times()[t] << ','
           << static_cast<double>(i + 1) / static_cast<double>(n) << ','
           << v(static_cast<Eigen::Index>(i)) << '\n';
      }
    }
  }
}

}  // namespace sgdlab
