#include "sgdlab/sgdsim.hpp"

#include "sgdlab/grid.hpp"
#include "sgdlab/limit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace sgdlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double spatial_blend(const GridFunction& values, std::size_t d, double x) {
  const double dx = snap_to_integer(static_cast<double>(d) * x);
  const auto i = static_cast<std::size_t>(std::floor(dx));
  if (i >= d) return values(static_cast<Eigen::Index>(d));
  const double frac = dx - static_cast<double>(i);
  const auto ii = static_cast<Eigen::Index>(i);
  return (1.0 - frac) * values(ii) + frac * values(ii + 1);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double a : v) m = std::max(m, std::abs(a));
  return m;
}

}  // namespace

double profile_value(const ProfileInit& profile, double x) {
  const auto& name = profile.name;
  if (name == "cosine") return std::sqrt(2.0) * std::cos(kTwoPi * x);
  if (name == "sine") return std::sqrt(2.0) * std::sin(kTwoPi * x);
  if (name == "mixed") return 1.0 + std::sqrt(2.0) * std::cos(kTwoPi * x);
  if (name == "bump") {
    return std::exp(-(x - 0.5) * (x - 0.5) / 0.02);
  }
  if (name == "smooth_random") {
    RngStream rng(profile.seed);
    double v = 0.0;
    double scale = 0.0;
    for (int k = 1; k <= 5; ++k) {
      const double a = rng.normal();
      const double b = rng.normal();
      v += (a * std::cos(kTwoPi * k * x) + b * std::sin(kTwoPi * k * x)) /
           (static_cast<double>(k) * k);
      scale += (std::abs(a) + std::abs(b)) / k;
    }
    return scale > 0.0 ? v / scale : 0.0;
  }
  throw ValidationError("unknown initial profile '" + name + "'");
}

GridFunction sample_initial(const InitialCondition& init, std::size_t n) {
  const auto nn = static_cast<Eigen::Index>(n);
  return std::visit(
      [&](const auto& ic) -> GridFunction {
        using T = std::decay_t<decltype(ic)>;
        if constexpr (std::is_same_v<T, ConstantInit>) {
          return GridFunction::Constant(nn, ic.value);
        } else if constexpr (std::is_same_v<T, ProfileInit>) {
          GridFunction g(nn);
          for (Eigen::Index i = 0; i < nn; ++i) {
            g(i) = profile_value(ic, static_cast<double>(i + 1) /
                                         static_cast<double>(n));
          }
          return g;
        } else {
          if (ic.values.size() != nn) {
            throw ValidationError("custom initial condition has length " +
                                  std::to_string(ic.values.size()) +
                                  ", expected " + std::to_string(n));
          }
          return ic.values;
        }
      },
      init);
}

std::size_t SgdConfig::steps() const { return time_index(tau, T); }

std::size_t SgdConfig::effective_stride() const {
  if (record_stride > 0) return record_stride;
  return std::max<std::size_t>(1, steps() / 1000);
}

void SgdConfig::validate() const {
  if (d < 1) throw ValidationError("sgd: d must be >= 1");
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw ValidationError("sgd: T must be positive");
  }
  if (!(tau > 0.0)) throw ValidationError("sgd: tau must be positive");
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ValidationError("sgd: eta must be positive");
  }
  if (theta_star && static_cast<std::size_t>(theta_star->size()) != d) {
    throw ValidationError("sgd: theta_star length must equal d");
  }
  const GridFunction g = sample_initial(init, d);
  if (!std::holds_alternative<CustomInit>(init)) {
    double jump = 0.0;
    for (Eigen::Index i = 1; i < g.size(); ++i) {
      jump = std::max(jump, std::abs(g(i) - g(i - 1)));
    }
    if (jump > init_lipschitz / static_cast<double>(d) + 1e-12) {
      std::ostringstream msg;
      msg << "sgd: initial condition jump " << jump << " exceeds L/d = "
          << init_lipschitz / static_cast<double>(d);
      throw ValidationError(msg.str());
    }
  }
}

Trajectory::Trajectory(std::size_t d, double T, std::size_t steps)
    : d_(d), T_(T), steps_(steps) {}

void Trajectory::record(std::size_t t_index, std::span<const double> interior) {
  if (interior.size() != d_) {
    throw ValidationError("trajectory: state length mismatch");
  }
  if (!states_.empty() && states_.back().t_index >= t_index) {
    throw ValidationError("trajectory: time indices must increase");
  }
  GridFunction v(static_cast<Eigen::Index>(d_ + 1));
  std::copy(interior.begin(), interior.end(), v.data() + 1);
  v(0) = v(1);
  states_.push_back({t_index, std::move(v)});
}

const GridFunction* Trajectory::find(std::size_t t_index) const {
  auto it = std::lower_bound(
      states_.begin(), states_.end(), t_index,
      [](const State& s, std::size_t t) { return s.t_index < t; });
  if (it == states_.end() || it->t_index != t_index) return nullptr;
  return &it->values;
}

const GridFunction& Trajectory::state(std::size_t t_index) const {
  if (const auto* v = find(t_index)) return *v;
  throw MissingStateError("trajectory: iterate " + std::to_string(t_index) +
                          " was not recorded (record_stride too coarse)");
}

DivergenceError::DivergenceError(std::size_t t_index, double magnitude)
    : std::runtime_error("sgd diverged at iterate " + std::to_string(t_index) +
                         ": max |dtheta| = " + std::to_string(magnitude)),
      t_index_(t_index),
      magnitude_(magnitude) {}

void sgd_step_inplace(std::span<double> state, std::span<const double> x,
                      double eps, double eta) {
  const std::size_t d = state.size();
  double inner = 0.0;
  for (std::size_t j = 0; j < d; ++j) inner += x[j] * state[j];
  const double coef = eta * (eps - inner);
  for (std::size_t i = 0; i < d; ++i) state[i] += coef * x[i];
}

GridFunction sgd_step(const GridFunction& state, const GridFunction& x,
                      double eps, double eta) {
  if (state.size() != x.size()) {
    throw ValidationError("sgd_step: state and x lengths differ");
  }
  GridFunction out = state;
  sgd_step_inplace(std::span<double>(out.data(), out.size()),
                   std::span<const double>(x.data(), x.size()), eps, eta);
  return out;
}

Trajectory run(const SgdConfig& config, const FieldSampler& sampler,
               const NoiseSpec& noise, RngStream& field_rng,
               RngStream& noise_rng) {
  config.validate();
  if (sampler.d() != config.d) {
    throw ValidationError("sgd run: sampler dimension " +
                          std::to_string(sampler.d()) + " != d " +
                          std::to_string(config.d));
  }
  const std::size_t d = config.d;
  const std::size_t steps = config.steps();
  const std::size_t stride = config.effective_stride();
  std::vector<std::size_t> extras = config.extra_records;
  std::sort(extras.begin(), extras.end());

  Trajectory traj(d, config.T, steps);
  const GridFunction init = sample_initial(config.init, d);
  const bool raw = config.theta_star.has_value();

  // Working vector: dtheta, or theta itself for the raw recursion.
  std::vector<double> work(d);
  std::vector<double> centred(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) {
    work[i] = init(static_cast<Eigen::Index>(i)) +
              (raw ? (*config.theta_star)(static_cast<Eigen::Index>(i)) : 0.0);
  }

  auto current = [&]() -> std::span<const double> {
    if (!raw) return work;
    for (std::size_t i = 0; i < d; ++i) {
      centred[i] = work[i] - (*config.theta_star)(static_cast<Eigen::Index>(i));
    }
    return centred;
  };

  traj.record(0, current());
  auto extra_it = extras.begin();
  for (std::size_t t = 0; t < steps; ++t) {
    sampler.draw(field_rng, x);
    const double eps = draw_noise(noise, noise_rng);
    if (raw) {
      // theta += eta (y - <x, theta>) x with y = <x, theta*> + eps.
      double y = eps;
      for (std::size_t j = 0; j < d; ++j) {
        y += x[j] * (*config.theta_star)(static_cast<Eigen::Index>(j));
      }
      double inner = 0.0;
      for (std::size_t j = 0; j < d; ++j) inner += x[j] * work[j];
      const double coef = config.eta * (y - inner);
      for (std::size_t i = 0; i < d; ++i) work[i] += coef * x[i];
    } else {
      sgd_step_inplace(work, x, eps, config.eta);
    }

    const std::size_t t1 = t + 1;
    const double magnitude = max_abs(current());
    if (!(magnitude <= kDivergenceThreshold)) {
      throw DivergenceError(t1, magnitude);
    }
    while (extra_it != extras.end() && *extra_it < t1) ++extra_it;
    const bool wanted = (t1 % stride == 0) || t1 == steps ||
                        (extra_it != extras.end() && *extra_it == t1);
    if (wanted) traj.record(t1, current());
  }
  return traj;
}

double interpolate(const Trajectory& traj, double s, double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ValidationError("interpolate: x must lie in [0,1]");
  }
  if (!(s >= 0.0)) throw ValidationError("interpolate: s must be >= 0");
  const double st = snap_to_integer(s * traj.T());
  const auto t0 = static_cast<std::size_t>(std::floor(st));
  if (t0 > traj.steps()) {
    throw ValidationError("interpolate: s beyond the simulated horizon");
  }
  double w1 = st - static_cast<double>(t0);
  if (t0 == traj.steps()) w1 = 0.0;
  const double v0 = spatial_blend(traj.state(t0), traj.d(), x);
  if (w1 == 0.0) return v0;
  const double v1 = spatial_blend(traj.state(t0 + 1), traj.d(), x);
  return (1.0 - w1) * v0 + w1 * v1;
}

double fluctuation_field(const Trajectory& traj, const LimitSolution& limit,
                         double gamma, double s, double x) {
  return gamma * (interpolate(traj, s, x) - limit.value_at(s, x));
}

void write_trajectory_csv(std::ostream& os, std::span<const Trajectory> trajs,
                          bool header) {
  if (header) os << "rep,t_index,s,i,x,value\n";
  os.precision(17);
  for (std::size_t rep = 0; rep < trajs.size(); ++rep) {
    const auto& tr = trajs[rep];
    for (const auto& st : tr.states()) {
      const double s = static_cast<double>(st.t_index) / tr.T();
      for (std::size_t i = 1; i <= tr.d(); ++i) {
        os << rep << ',' << st.t_index << ',' << s << ',' << i << ','
           << static_cast<double>(i) / static_cast<double>(tr.d()) << ','
           << st.values(static_cast<Eigen::Index>(i)) << '\n';
      }
    }
  }
}

}  // namespace sgdlab
