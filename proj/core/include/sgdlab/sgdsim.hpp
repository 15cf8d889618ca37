#pragma once

#include "sgdlab/field.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/types.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sgdlab {

class LimitSolution;

struct ConstantInit {
  double value = 0.0;
};

/// Named C^1 profiles on [0,1]:
///   "cosine"        sqrt(2) cos(2 pi x)
///   "sine"          sqrt(2) sin(2 pi x)
///   "mixed"         1 + sqrt(2) cos(2 pi x)
///   "bump"          exp(-(x - 1/2)^2 / 0.02)
///   "smooth_random" sum_{k<=5} (a_k cos(2 pi k x) + b_k sin(2 pi k x)) / k^2
///                   divided by sum_k (|a_k| + |b_k|) / k, so |f'| <= 2 pi;
///                   a_k, b_k ~ N(0,1) drawn from `seed`
struct ProfileInit {
  std::string name;
  std::uint64_t seed = 0;
};

struct CustomInit {
  GridFunction values;  // length d, values at i/d for i = 1..d
};

using InitialCondition = std::variant<ConstantInit, ProfileInit, CustomInit>;

/// Evaluates a named profile at x. Throws ValidationError for unknown names.
double profile_value(const ProfileInit& profile, double x);

/// Samples an initial condition on the grid {i/n : i = 1..n}.
GridFunction sample_initial(const InitialCondition& init, std::size_t n);

struct SgdConfig {
  std::size_t d = 1;
  /// Time resolution: iterate t sits at macroscopic time t / T.
  double T = 1.0;
  double tau = 1.0;
  double eta = 0.0;
  InitialCondition init = ConstantInit{0.0};
  /// Declared bound L in max_i |dtheta_i - dtheta_{i-1}| <= L / d, checked
  /// for Constant and Profile inits.
  double init_lipschitz = 10.0;
  /// Store every k-th iterate; 0 selects max(1, floor(N / 1000)).
  std::size_t record_stride = 0;
  /// Iterate indices stored in addition to stride multiples and N.
  std::vector<std::size_t> extra_records;
  /// When set, the raw recursion on theta runs and theta - theta_star is
  /// returned.
  std::optional<GridFunction> theta_star;

  /// floor(tau * T).
  std::size_t steps() const;
  std::size_t effective_stride() const;
  /// Throws ValidationError on inconsistent fields.
  void validate() const;
};

/// Recorded path of the centralized iterates. Each stored state has d + 1
/// entries; entry 0 duplicates entry 1 and entry i holds dtheta_i.
class Trajectory {
 public:
  struct State {
    std::size_t t_index;
    GridFunction values;
  };

  Trajectory(std::size_t d, double T, std::size_t steps);

  std::size_t d() const { return d_; }
  double T() const { return T_; }
  double dt() const { return 1.0 / T_; }
  std::size_t steps() const { return steps_; }

  /// Appends a state; `interior` holds dtheta_1..dtheta_d. Indices must be
  /// strictly increasing.
  void record(std::size_t t_index, std::span<const double> interior);
  const GridFunction* find(std::size_t t_index) const;
  /// Throws MissingStateError when the index was strided out.
  const GridFunction& state(std::size_t t_index) const;
  std::span<const State> states() const { return states_; }

 private:
  std::size_t d_;
  double T_;
  std::size_t steps_;
  std::vector<State> states_;
};

class MissingStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when max |dtheta| exceeds 1e12.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t t_index, double magnitude);
  std::size_t t_index() const { return t_index_; }
  double magnitude() const { return magnitude_; }

 private:
  std::size_t t_index_;
  double magnitude_;
};

inline constexpr double kDivergenceThreshold = 1e12;

/// One step dtheta - eta x <x, dtheta> + eta x eps, O(d).
GridFunction sgd_step(const GridFunction& state, const GridFunction& x,
                      double eps, double eta);

/// In-place variant used by run().
void sgd_step_inplace(std::span<double> state, std::span<const double> x,
                      double eps, double eta);

/// Runs floor(tau T) steps, drawing x^t from `sampler` with `field_rng` and
/// eps^t from `noise` with `noise_rng`.
Trajectory run(const SgdConfig& config, const FieldSampler& sampler,
               const NoiseSpec& noise, RngStream& field_rng,
               RngStream& noise_rng);

/// Piecewise-linear space-time interpolant at (s, x): spatially linear between
/// grid points i/d, linearly blended between iterates floor(sT) and
/// floor(sT) + 1.
double interpolate(const Trajectory& traj, double s, double x);

/// gamma (interpolate(traj, s, x) - limit(s, x)).
double fluctuation_field(const Trajectory& traj, const LimitSolution& limit,
                         double gamma, double s, double x);

/// Trajectory CSV: rep,t_index,s,i,x,value (i = 1..d).
void write_trajectory_csv(std::ostream& os, std::span<const Trajectory> trajs,
                          bool header = true);

}  // namespace sgdlab
