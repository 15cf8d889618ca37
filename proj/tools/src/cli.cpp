#include "sgdlab_cli/cli.hpp"

#include "sgdlab/covariance.hpp"
#include "sgdlab/diagnostics.hpp"
#include "sgdlab/experiments.hpp"
#include "sgdlab/field.hpp"
#include "sgdlab/limit.hpp"
#include "sgdlab/sgdsim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sgdlab::cli {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
};

// Options shared by the solve-* and picard subcommands. Unset values fall
// back to the config file, then to built-in defaults.
struct SolveOptions {
  std::optional<std::string> model;
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<double> dt;
  std::optional<std::size_t> n;
  std::optional<double> init_constant;
  std::optional<std::string> init_profile;
  double beta = 1.0;
  double zeta = 1.0;
  std::size_t paths = 1;
  std::string scheme = "exact_ou";
  bool no_drift = false;
  std::size_t max_iters = 50;
  double tol = 1e-10;
};

void add_solve_options(CLI::App* sub, SolveOptions& o) {
  sub->add_option("--model", o.model, "Covariance preset (example1|example2)")
      ->check(CLI::IsMember({"example1", "example2"}));
  sub->add_option("--alpha", o.alpha, "Learning-rate constant alpha");
  sub->add_option("--tau", o.tau, "Time horizon");
  sub->add_option("--dt", o.dt, "Solver time step");
  sub->add_option("--n", o.n, "Spatial grid size");
  sub->add_option("--init-constant", o.init_constant, "Constant initial condition");
  sub->add_option("--init-profile", o.init_profile,
                  "Named initial profile (cosine|sine|mixed|bump|smooth_random)");
}

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig c;
  if (!g.config.empty()) c = load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.outputs = g.out;
  return c;
}

struct SolveSetup {
  ExperimentConfig config;
  std::shared_ptr<const SpectralData> spectral;
  GridFunction init;
  double alpha;
  double tau;
  double dt;
};

SolveSetup resolve_solve(const Globals& g, const SolveOptions& o) {
  SolveSetup s{base_config(g), nullptr, {}, 0.0, 0.0, 0.0};
  auto& c = s.config;
  if (o.model) {
    c.model = *o.model == "example1" ? CovarianceModel::example1()
                                     : CovarianceModel::example2();
  }
  if (o.n) c.solver.n = *o.n;
  if (o.init_constant && o.init_profile) {
    throw ValidationError("use only one of --init-constant and --init-profile");
  }
  if (o.init_constant) c.init = ConstantInit{*o.init_constant};
  if (o.init_profile) c.init = ProfileInit{*o.init_profile, c.seed};
  s.alpha = o.alpha.value_or(c.scaling.alpha);
  s.tau = o.tau.value_or(c.scaling.tau);
  s.dt = o.dt.value_or(c.solver.dt);
  if (c.solver.n < 2) throw ValidationError("--n must be >= 2");
  s.spectral = std::make_shared<const SpectralData>(
      spectral_decompose(c.model, c.solver.n));
  s.init = sample_initial(c.init, c.solver.n);
  return s;
}

fs::path out_dir(const ExperimentConfig& c) {
  fs::create_directories(c.outputs);
  return c.outputs;
}

void write_paths(const fs::path& file, const std::vector<LimitSolution>& paths,
                 std::ostream& out) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  write_solution_csv(os, paths);
  out << "wrote " << file.string() << '\n';
}

SdeScheme parse_scheme(const std::string& s) {
  if (s == "exact_ou") return SdeScheme::ExactOU;
  if (s == "euler_maruyama") return SdeScheme::EulerMaruyama;
  throw ValidationError("unknown scheme '" + s + "'");
}

std::vector<LimitSolution> fluctuation_paths(const SolveSetup& s, const SolveOptions& o,
                                             std::optional<FluctuationSpec>& spec_out) {
  auto theta = std::make_shared<const LimitSolution>(
      solve_ode(s.spectral, s.init, s.alpha, s.tau, s.dt));
  spec_out.emplace(s.alpha, o.beta, o.zeta, FluctuationRegime::ParticleInteraction, theta);
  std::vector<LimitSolution> paths;
  const GridFunction zero = GridFunction::Zero(s.init.size());
  for (std::size_t p = 0; p < o.paths; ++p) {
    RngStream rng(s.config.seed, p, StreamRole::Limit);
    paths.push_back(solve_fluctuation_sde(*spec_out, s.spectral, zero, s.tau, s.dt, rng));
  }
  return paths;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sgdlab: high-dimensional SGD scaling-limit laboratory"};
  app.name("sgdlab");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config file (JSON with comments)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");
  app.add_option("--threads", g.threads,
                 "Worker threads (fallback: SGDLAB_THREADS, then all cores)")
      ->check(CLI::PositiveNumber);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run SGD replications and export trajectories");
  std::size_t sim_pair = 0;
  std::size_t sim_stride = 0;
  simulate->add_option("--pair", sim_pair, "Index into scaling.d_list");
  simulate->add_option("--stride", sim_stride, "Record every k-th iterate (0 = N/1000)");

  // solve-ode
  SolveOptions ode_opts;
  auto* solve_ode_cmd = app.add_subcommand("solve-ode", "Solve the deterministic limit ODE");
  add_solve_options(solve_ode_cmd, ode_opts);

  // solve-sde
  SolveOptions sde_opts;
  auto* solve_sde_cmd = app.add_subcommand("solve-sde", "Sample paths of the limit SDE");
  add_solve_options(solve_sde_cmd, sde_opts);
  solve_sde_cmd->add_option("--beta", sde_opts.beta, "Noise constant beta");
  solve_sde_cmd->add_option("--paths", sde_opts.paths, "Number of sample paths");
  solve_sde_cmd->add_option("--scheme", sde_opts.scheme, "exact_ou|euler_maruyama")
      ->check(CLI::IsMember({"exact_ou", "euler_maruyama"}));
  solve_sde_cmd->add_flag("--no-drift", sde_opts.no_drift,
                          "Drop the drift (high-noise Brownian limit)");

  // solve-fluctuation
  SolveOptions fl_opts;
  auto* solve_fl_cmd =
      app.add_subcommand("solve-fluctuation", "Sample paths of the fluctuation SDE");
  add_solve_options(solve_fl_cmd, fl_opts);
  solve_fl_cmd->add_option("--beta", fl_opts.beta, "Coefficient of xi_2");
  solve_fl_cmd->add_option("--zeta", fl_opts.zeta, "Coefficient of xi_3");
  solve_fl_cmd->add_option("--paths", fl_opts.paths, "Number of sample paths");

  // picard
  SolveOptions pc_opts;
  auto* picard_cmd = app.add_subcommand("picard", "Picard iteration for the fluctuation SDE");
  add_solve_options(picard_cmd, pc_opts);
  picard_cmd->add_option("--beta", pc_opts.beta, "Coefficient of xi_2");
  picard_cmd->add_option("--zeta", pc_opts.zeta, "Coefficient of xi_3");
  picard_cmd->add_option("--max-iters", pc_opts.max_iters, "Iteration cap");
  picard_cmd->add_option("--tol", pc_opts.tol, "Sup-norm stopping tolerance");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run the configured (d, T) sweep");

  // validate-covariance
  auto* validate = app.add_subcommand("validate-covariance",
                                      "Check the embedding error against 2 C3 / d");
  std::string val_model = "example1";
  std::size_t val_d = 50;
  validate->add_option("--model", val_model, "example1|example2")
      ->check(CLI::IsMember({"example1", "example2"}));
  validate->add_option("--d", val_d, "Dimension")->check(CLI::PositiveNumber);

  // regime
  auto* regime = app.add_subcommand("regime", "Classify a (d, T, eta, sigma, gamma) setting");
  std::size_t rg_d = 0;
  double rg_T = 0.0;
  double rg_sigma = 0.0;
  double rg_alpha = 1.0;
  std::string rg_gamma = "none";
  std::string rg_eta_rule = "dT";
  double rg_low = 1e-2;
  double rg_high = 1e2;
  regime->add_option("--d", rg_d, "Dimension")->required()->check(CLI::PositiveNumber);
  regime->add_option("--T", rg_T, "Time resolution")->required();
  regime->add_option("--sigma", rg_sigma, "Noise level")->required();
  regime->add_option("--eta-alpha", rg_alpha, "alpha in eta = alpha/(dT)");
  regime->add_option("--eta-rule", rg_eta_rule, "dT or sigma_sqrtT")
      ->check(CLI::IsMember({"dT", "sigma_sqrtT"}));
  regime->add_option("--gamma", rg_gamma, "sqrtT, none or a number");
  regime->add_option("--low", rg_low, "Low threshold");
  regime->add_option("--high", rg_high, "High threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  out << std::setprecision(10);
  try {
    if (simulate->parsed()) {
      if (g.config.empty()) throw ValidationError("simulate needs --config");
      auto c = base_config(g);
      const auto pairs = resolve_pairs(c);
      if (sim_pair >= pairs.size()) throw ValidationError("--pair out of range");
      const auto& p = pairs[sim_pair];
      SgdConfig sgd;
      sgd.d = p.d;
      sgd.T = p.T;
      sgd.tau = c.scaling.tau;
      sgd.eta = p.eta;
      sgd.init = c.init;
      sgd.record_stride = sim_stride;
      const FieldSampler sampler(c.model, p.d, c.prefer_fft);
      const NoiseSpec noise(p.sigma, c.noise, c.noise_nu);
      std::vector<Trajectory> trajs;
      for (std::size_t r = 0; r < c.replications; ++r) {
        const std::uint64_t task = (static_cast<std::uint64_t>(sim_pair) << 20) + r;
        RngStream field_rng(c.seed, task, StreamRole::Field);
        RngStream noise_rng(c.seed, task, StreamRole::Noise);
        trajs.push_back(run(sgd, sampler, noise, field_rng, noise_rng));
      }
      const auto file = out_dir(c) / "trajectories.csv";
      std::ofstream os(file);
      if (!os) throw std::runtime_error("cannot write " + file.string());
      write_trajectory_csv(os, trajs);
      out << "wrote " << file.string() << '\n';
    } else if (solve_ode_cmd->parsed()) {
      const auto s = resolve_solve(g, ode_opts);
      std::vector<LimitSolution> paths;
      paths.push_back(solve_ode(s.spectral, s.init, s.alpha, s.tau, s.dt));
      out << "mse(0) = " << mse_limit(paths[0], 0.0) << ", mse(tau) = "
          << mse_limit(paths[0], s.tau) << ", pe(tau) = " << pe_limit(paths[0], s.tau)
          << '\n';
      write_paths(out_dir(s.config) / "ode_solution.csv", paths, out);
    } else if (solve_sde_cmd->parsed()) {
      const auto s = resolve_solve(g, sde_opts);
      const auto scheme = parse_scheme(sde_opts.scheme);
      std::vector<LimitSolution> paths;
      for (std::size_t p = 0; p < sde_opts.paths; ++p) {
        RngStream rng(s.config.seed, p, StreamRole::Limit);
        paths.push_back(solve_theta_sde(s.spectral, s.init, s.alpha, sde_opts.beta, s.tau,
                                        s.dt, rng, scheme,
                                        sde_opts.no_drift ? Drift::Off : Drift::On));
      }
      write_paths(out_dir(s.config) / "sde_paths.csv", paths, out);
    } else if (solve_fl_cmd->parsed()) {
      const auto s = resolve_solve(g, fl_opts);
      std::optional<FluctuationSpec> spec;
      const auto paths = fluctuation_paths(s, fl_opts, spec);
      if (paths.size() >= 100) {
        const auto rep = stability_check(paths, *spec, s.tau);
        out << "stability lhs = " << rep.lhs << ", rhs = " << rep.rhs
            << ", ratio = " << rep.ratio << (rep.holds ? " (holds)" : " (VIOLATED)")
            << '\n';
      }
      write_paths(out_dir(s.config) / "fluctuation_paths.csv", paths, out);
    } else if (picard_cmd->parsed()) {
      const auto s = resolve_solve(g, pc_opts);
      auto theta = std::make_shared<const LimitSolution>(
          solve_ode(s.spectral, s.init, s.alpha, s.tau, s.dt));
      const FluctuationSpec spec(s.alpha, pc_opts.beta, pc_opts.zeta,
                                 FluctuationRegime::ParticleInteraction, theta);
      RngStream rng(s.config.seed, 0, StreamRole::Limit);
      const GridFunction zero = GridFunction::Zero(s.init.size());
      const auto noise = draw_fluctuation_increments(spec, *s.spectral, s.tau, s.dt, rng);
      auto result = picard_solve(spec, s.spectral, zero, noise, pc_opts.max_iters, pc_opts.tol);
      const auto euler = integrate_fluctuation(spec, s.spectral, zero, noise);
      double gap = 0.0;
      for (std::size_t t = 0; t < euler.times().size(); ++t) {
        gap = std::max(gap, (euler.values()[t] - result.solution.values()[t])
                                .cwiseAbs()
                                .maxCoeff());
      }
      out << "iterations = " << result.iterations << '\n';
      for (std::size_t k = 0; k < result.differences.size(); ++k) {
        out << "  k=" << k + 1 << " sup|U_k - U_{k-1}| = " << result.differences[k] << '\n';
      }
      out << "sup |picard - exponential euler| = " << gap << '\n';
      std::vector<LimitSolution> paths;
      paths.push_back(std::move(result.solution));
      write_paths(out_dir(s.config) / "picard_solution.csv", paths, out);
    } else if (sweep->parsed()) {
      if (g.config.empty()) throw ValidationError("sweep needs --config");
      const auto c = base_config(g);
      const auto summary = run_experiment(c, resolve_threads(g.threads));
      for (std::size_t i = 0; i < summary.pairs.size(); ++i) {
        const auto& p = summary.pairs[i];
        out << "d=" << p.d << " T=" << p.T << " eta=" << p.eta << " sigma=" << p.sigma
            << " regime=" << to_string(p.regime.regime)
            << " mean_sup_distance=" << summary.sup_mean[i] << '\n';
      }
      out << "diverged " << summary.diverged << " of " << summary.tasks
          << "; outputs in " << c.outputs.string() << '\n';
    } else if (validate->parsed()) {
      const auto model = val_model == "example1" ? CovarianceModel::example1()
                                                 : CovarianceModel::example2();
      const double e = embedding_sup_error(model, val_d);
      const double bound = 2.0 * model.lipschitz_c3() / static_cast<double>(val_d);
      out << "model " << val_model << ", d = " << val_d << '\n'
          << "sup error = " << e << '\n'
          << "bound 2*C3/d = " << bound << '\n'
          << "status " << (e <= bound ? "PASS" : "FAIL") << '\n';
      return e <= bound ? 0 : 2;
    } else if (regime->parsed()) {
      std::optional<double> gamma;
      if (rg_gamma == "sqrtT") {
        gamma = std::sqrt(rg_T);
      } else if (rg_gamma != "none") {
        try {
          gamma = std::stod(rg_gamma);
        } catch (const std::exception&) {
          throw ValidationError("--gamma must be sqrtT, none or a number");
        }
      }
      if (!(rg_T > 0.0)) throw ValidationError("--T must be positive");
      const double d = static_cast<double>(rg_d);
      const double eta = rg_eta_rule == "dT" ? rg_alpha / (d * rg_T)
                                             : rg_alpha / (rg_sigma * std::sqrt(rg_T));
      const auto rep = classify_regime(rg_d, rg_T, eta, rg_sigma, gamma, {rg_low, rg_high});
      out << regime_json(rep) << '\n';
    }
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const RegimeMismatchError& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace sgdlab::cli
