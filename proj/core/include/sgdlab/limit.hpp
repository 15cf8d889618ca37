#pragma once

#include "sgdlab/covariance.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace sgdlab {

enum class SolutionKind { DeterministicODE, PathwiseSDE };

/// Solution of a limiting equation on the grid {i/n : i = 1..n}.
///
/// The state is stored both as grid values and as coefficients in the
/// retained eigenbasis. `residual` is the part of the initial condition
/// outside the retained modes; the linear dynamics leave it untouched, which
/// is exact when only zero-eigenvalue modes were dropped.
class LimitSolution {
 public:
  LimitSolution(std::shared_ptr<const SpectralData> spectral,
                SolutionKind kind, GridFunction residual);

  void append(double time, Eigen::VectorXd modes);

  SolutionKind kind() const { return kind_; }
  std::size_t grid_size() const { return spectral_->grid_size; }
  const SpectralData& spectral() const { return *spectral_; }
  std::shared_ptr<const SpectralData> spectral_ptr() const { return spectral_; }
  const GridFunction& residual() const { return residual_; }

  std::span<const double> times() const { return times_; }
  std::span<const GridFunction> values() const { return values_; }
  std::span<const Eigen::VectorXd> modes() const { return modes_; }
  double horizon() const { return times_.empty() ? 0.0 : times_.back(); }

  /// Grid values at time s, linear in time between stored samples.
  GridFunction values_at(double s) const;
  /// Mode coefficients at time s, linear in time between stored samples.
  Eigen::VectorXd modes_at(double s) const;
  /// Value at (s, x): linear in x between grid points, with the value at
  /// 1/n extended down to x = 0.
  double value_at(double s, double x) const;

 private:
  struct Bracket {
    std::size_t lo;
    std::size_t hi;
    double w;
  };
  Bracket bracket(double s) const;

  std::shared_ptr<const SpectralData> spectral_;
  SolutionKind kind_;
  GridFunction residual_;
  std::vector<double> times_;
  std::vector<GridFunction> values_;
  std::vector<Eigen::VectorXd> modes_;
};

/// Exact exponential integrator for d/ds Theta = -alpha A Theta:
/// c_k(s) = c_k(0) exp(-alpha lambda_k s). `dt` only sets the output times
/// 0, dt, ..., tau (the step is adjusted to tau / round(tau / dt)).
LimitSolution solve_ode(std::shared_ptr<const SpectralData> spectral,
                        const GridFunction& init, double alpha, double tau,
                        double dt);

enum class SdeScheme { EulerMaruyama, ExactOU };

enum class Drift { On, Off };

/// One path of d Theta = -alpha A Theta ds + alpha beta d xi_1 where xi_1 has
/// increments N(0, ds A(x,y)). Each mode is an OU process
/// dc_k = -alpha lambda_k c_k ds + alpha beta sqrt(lambda_k) dW_k.
/// With Drift::Off the equation is d Theta = alpha beta d xi_1 (pass beta = 1
/// for the high-noise limit). EulerMaruyama requires
/// dt <= 1 / (10 alpha lambda_max) when the drift is on.
/// Every `record_stride`-th step plus the final one is stored.
LimitSolution solve_theta_sde(std::shared_ptr<const SpectralData> spectral,
                              const GridFunction& init, double alpha,
                              double beta, double tau, double dt,
                              RngStream& rng, SdeScheme scheme,
                              Drift drift = Drift::On,
                              std::size_t record_stride = 1);

enum class FluctuationRegime { ParticleInteraction, NoiseDominates, InterpolationError };

/// Parameters of dU = -alpha A U ds + alpha beta d xi_2 + alpha zeta d xi_3.
struct FluctuationSpec {
  FluctuationSpec(double alpha, double beta, double zeta,
                  FluctuationRegime regime,
                  std::shared_ptr<const LimitSolution> theta_path);

  double alpha;
  /// Zeroed for InterpolationError.
  double beta;
  /// Zeroed for NoiseDominates and InterpolationError.
  double zeta;
  FluctuationRegime regime;
  std::shared_ptr<const LimitSolution> theta_path;
};

/// Kernel of the xi_3 increments at state theta (grid values on {i/n}):
///   K(x,y) = int int theta(z1) theta(z2) Btilde(x, y, z1, z2) dz1 dz2
///          = A(x,y) <theta, A theta> + (A theta)(x) (A theta)(y),
/// assembled in O(n^2) with left-endpoint quadrature.
Eigen::MatrixXd xi3_kernel(const CovarianceModel& model,
                           const GridFunction& theta);

/// Frozen per-step noise in mode coordinates: xi2[n]_k and xi3[n]_k are the
/// projections of the increments of xi_2 and xi_3 over step n.
struct FluctuationIncrements {
  double dt = 0.0;
  std::vector<Eigen::VectorXd> xi2;
  std::vector<Eigen::VectorXd> xi3;
  std::size_t steps() const { return xi2.size(); }
};

/// Throws when theta_path's time spacing is coarser than dt or it ends
/// before tau.
FluctuationIncrements draw_fluctuation_increments(const FluctuationSpec& spec,
                                                  const SpectralData& spectral,
                                                  double tau, double dt,
                                                  RngStream& rng);

/// Samples one path with the exponential Euler scheme
/// c <- exp(-alpha lambda dt) (c + alpha beta dxi2 + alpha zeta dxi3).
LimitSolution solve_fluctuation_sde(const FluctuationSpec& spec,
                                    std::shared_ptr<const SpectralData> spectral,
                                    const GridFunction& init_U, double tau,
                                    double dt, RngStream& rng,
                                    std::size_t record_stride = 1);

/// Same scheme driven by caller-supplied increments.
LimitSolution integrate_fluctuation(const FluctuationSpec& spec,
                                    std::shared_ptr<const SpectralData> spectral,
                                    const GridFunction& init_U,
                                    const FluctuationIncrements& noise,
                                    std::size_t record_stride = 1);

/// Covariance of the mode coefficients generated by the exponential Euler
/// scheme at time tau for a deterministic initial condition:
/// P <- E (P + alpha^2 dt (beta^2 Lambda + zeta^2 (q Lambda + v v^T))) E
/// with E = exp(-alpha Lambda dt).
Eigen::MatrixXd fluctuation_mode_covariance(const FluctuationSpec& spec,
                                            const SpectralData& spectral,
                                            double tau, double dt);

/// Variance at x of the grid interpolant (as in LimitSolution::value_at) of
/// a field whose mode coefficients have covariance `mode_cov`.
double grid_point_variance(const SpectralData& spectral,
                           const Eigen::MatrixXd& mode_cov, double x);

struct PicardResult {
  LimitSolution solution;
  /// sup_{s,x} |U_k - U_{k-1}| for k = 1, 2, ...
  std::vector<double> differences;
  std::size_t iterations = 0;
};

class PicardNonConvergence : public std::runtime_error {
 public:
  PicardNonConvergence(std::size_t iterations, double last_ratio,
                       double last_difference);
  double last_ratio() const { return last_ratio_; }
  double last_difference() const { return last_difference_; }

 private:
  double last_ratio_;
  double last_difference_;
};

/// Fixed-point iteration
///   U_k(s) = U(0) - alpha int_0^s A U_{k-1} du + alpha beta xi_2(s)
///            + alpha zeta xi_3(s)
/// with the time integral by the trapezoidal rule on frozen increments.
PicardResult picard_solve(const FluctuationSpec& spec,
                          std::shared_ptr<const SpectralData> spectral,
                          const GridFunction& init_U,
                          const FluctuationIncrements& noise,
                          std::size_t max_iters, double tol);

/// Draws the increments from `rng` exactly as solve_fluctuation_sde does.
PicardResult picard_solve(const FluctuationSpec& spec,
                          std::shared_ptr<const SpectralData> spectral,
                          const GridFunction& init_U, double tau, double dt,
                          RngStream& rng, std::size_t max_iters, double tol);

struct StabilityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  /// lhs / rhs, or 0 when both vanish.
  double ratio = 0.0;
  bool holds = true;
  std::size_t paths = 0;
};

/// Empirical check of
///   E sup_s |U(s)|^2 <= 4 (E|U(0)|^2 + C2 a^2 b^2 tau
///                          + (C5 + C2^2) a^2 z^2 int_0^tau |Theta|^2 ds)
///                       * exp(4 C2^2 a^2 tau^2)
/// with C2 = sup A and C5 = sup |B| = 3 C2^2 for Gaussian data.
/// Requires at least 100 paths.
StabilityReport stability_check(std::span<const LimitSolution> paths,
                                const FluctuationSpec& spec, double tau);

/// Solution CSV: path_id,s,x,value.
void write_solution_csv(std::ostream& os, std::span<const LimitSolution> paths,
                        bool header = true);

/// Left-endpoint quadrature (1/n) sum f_i g_i.
double grid_inner(const GridFunction& f, const GridFunction& g);

}  // namespace sgdlab
