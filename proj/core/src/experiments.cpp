#include "sgdlab/experiments.hpp"

#include "sgdlab/grid.hpp"
#include "sgdlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace sgdlab {

namespace {

using json = nlohmann::json;

// Config parsing

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; })) {
      bad(path + "." + key, "unknown key");
    }
  }
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) bad(path, "expected a number");
  return v.get<double>();
}

std::uint64_t unsigned_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 &&
                                 !v.is_number_unsigned())) {
    bad(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) bad(path, "expected a string");
  return v.get<std::string>();
}

bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) bad(path, "expected true or false");
  return v.get<bool>();
}

CovarianceModel parse_model(const json& j) {
  const std::string path = "model";
  if (j.contains("preset")) {
    check_keys(j, path, {"preset", "truncation"});
    const auto preset = string(j["preset"], path + ".preset");
    if (preset == "example1") {
      if (j.contains("truncation")) bad(path + ".truncation", "only for example2");
      return CovarianceModel::example1();
    }
    if (preset == "example2") {
      int trunc = 50;
      if (j.contains("truncation")) {
        trunc = static_cast<int>(unsigned_int(j["truncation"], path + ".truncation"));
      }
      return CovarianceModel::example2(trunc);
    }
    bad(path + ".preset", "expected example1 or example2, got '" + preset + "'");
  }
  check_keys(j, path, {"a0", "harmonics", "epsilon"});
  if (!j.contains("a0")) bad(path + ".a0", "missing");
  const double a0 = number(j["a0"], path + ".a0");
  std::vector<Harmonic> harmonics;
  if (j.contains("harmonics")) {
    const auto& h = j["harmonics"];
    if (!h.is_array()) bad(path + ".harmonics", "expected [[k, b_k], ...]");
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto p = path + ".harmonics[" + std::to_string(i) + "]";
      if (!h[i].is_array() || h[i].size() != 2) bad(p, "expected [k, b_k]");
      harmonics.push_back({static_cast<int>(unsigned_int(h[i][0], p + "[0]")),
                           number(h[i][1], p + "[1]")});
    }
  }
  const double eps = j.contains("epsilon") ? number(j["epsilon"], path + ".epsilon") : 1.0;
  return CovarianceModel(a0, std::move(harmonics), eps);
}

void apply_preset(ScalingConfig& s, const std::string& preset) {
  if (preset == "low_noise") {
    s.t_rule = TRuleKind::Quadratic;
    s.t_coefficient = 0.25;
    s.sigma_rule = SigmaRuleKind::Constant;
    s.eta_rule = EtaRuleKind::AlphaOverDT;
  } else if (preset == "moderate") {
    s.sigma_rule = SigmaRuleKind::DSqrtT;
    s.sigma_value = 1.0;
    s.eta_rule = EtaRuleKind::AlphaOverDT;
  } else if (preset == "high") {
    s.sigma_rule = SigmaRuleKind::DT;
    s.sigma_value = 1.0;
    s.eta_rule = EtaRuleKind::AlphaOverSigmaSqrtT;
  } else {
    bad("scaling.preset", "expected low_noise, moderate or high, got '" + preset + "'");
  }
}

ScalingConfig parse_scaling(const json& j) {
  const std::string path = "scaling";
  check_keys(j, path, {"d_list", "preset", "T_rule", "tau", "alpha", "sigma_rule",
                       "gamma_rule", "eta_rule", "thresholds"});
  ScalingConfig s;
  if (j.contains("preset")) apply_preset(s, string(j["preset"], path + ".preset"));
  if (!j.contains("d_list") || !j["d_list"].is_array() || j["d_list"].empty()) {
    bad(path + ".d_list", "expected a non-empty list of dimensions");
  }
  for (std::size_t i = 0; i < j["d_list"].size(); ++i) {
    s.d_list.push_back(static_cast<std::size_t>(
        unsigned_int(j["d_list"][i], path + ".d_list[" + std::to_string(i) + "]")));
  }
  if (j.contains("T_rule")) {
    const auto& t = j["T_rule"];
    const auto p = path + ".T_rule";
    check_keys(t, p, {"kind", "c", "values"});
    const auto kind = string(t.value("kind", json("")), p + ".kind");
    if (kind == "quadratic") {
      s.t_rule = TRuleKind::Quadratic;
      if (t.contains("c")) s.t_coefficient = number(t["c"], p + ".c");
      if (t.contains("values")) bad(p + ".values", "only for kind list");
    } else if (kind == "list") {
      s.t_rule = TRuleKind::List;
      if (!t.contains("values") || !t["values"].is_array()) bad(p + ".values", "missing");
      for (std::size_t i = 0; i < t["values"].size(); ++i) {
        s.t_values.push_back(
            number(t["values"][i], p + ".values[" + std::to_string(i) + "]"));
      }
      if (t.contains("c")) bad(p + ".c", "only for kind quadratic");
    } else {
      bad(p + ".kind", "expected quadratic or list");
    }
  }
  if (j.contains("tau")) s.tau = number(j["tau"], path + ".tau");
  if (j.contains("alpha")) s.alpha = number(j["alpha"], path + ".alpha");
  if (j.contains("sigma_rule")) {
    const auto& r = j["sigma_rule"];
    const auto p = path + ".sigma_rule";
    check_keys(r, p, {"kind", "value"});
    const auto kind = string(r.value("kind", json("")), p + ".kind");
    if (kind == "constant") {
      s.sigma_rule = SigmaRuleKind::Constant;
      s.sigma_value = 0.0;
    } else if (kind == "d_sqrtT") {
      s.sigma_rule = SigmaRuleKind::DSqrtT;
      s.sigma_value = 1.0;
    } else if (kind == "dT") {
      s.sigma_rule = SigmaRuleKind::DT;
      s.sigma_value = 1.0;
    } else {
      bad(p + ".kind", "expected constant, d_sqrtT or dT");
    }
    if (r.contains("value")) s.sigma_value = number(r["value"], p + ".value");
  }
  if (j.contains("gamma_rule")) {
    const auto& g = j["gamma_rule"];
    const auto p = path + ".gamma_rule";
    if (g.is_number()) {
      s.gamma_rule = GammaRuleKind::Constant;
      s.gamma_value = g.get<double>();
    } else {
      const auto kind = string(g, p);
      if (kind == "sqrtT") {
        s.gamma_rule = GammaRuleKind::SqrtT;
      } else if (kind == "none") {
        s.gamma_rule = GammaRuleKind::None;
      } else {
        bad(p, "expected \"sqrtT\", \"none\" or a number");
      }
    }
  }
  if (j.contains("eta_rule")) {
    const auto kind = string(j["eta_rule"], path + ".eta_rule");
    if (kind == "alpha_over_dT") {
      s.eta_rule = EtaRuleKind::AlphaOverDT;
    } else if (kind == "alpha_over_sigma_sqrtT") {
      s.eta_rule = EtaRuleKind::AlphaOverSigmaSqrtT;
    } else {
      bad(path + ".eta_rule", "expected alpha_over_dT or alpha_over_sigma_sqrtT");
    }
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    const auto p = path + ".thresholds";
    check_keys(t, p, {"low", "high"});
    if (t.contains("low")) s.thresholds.low = number(t["low"], p + ".low");
    if (t.contains("high")) s.thresholds.high = number(t["high"], p + ".high");
  }
  return s;
}

InitialCondition parse_init(const json& j, std::uint64_t default_seed) {
  const std::string path = "init";
  check_keys(j, path, {"kind", "value", "name", "seed"});
  const auto kind = string(j.value("kind", json("")), path + ".kind");
  if (kind == "constant") {
    if (j.contains("name") || j.contains("seed")) bad(path, "constant takes only value");
    return ConstantInit{j.contains("value") ? number(j["value"], path + ".value") : 0.0};
  }
  if (kind == "profile") {
    if (j.contains("value")) bad(path + ".value", "only for kind constant");
    if (!j.contains("name")) bad(path + ".name", "missing");
    ProfileInit p{string(j["name"], path + ".name"), default_seed};
    if (j.contains("seed")) p.seed = unsigned_int(j["seed"], path + ".seed");
    profile_value(p, 0.5);
    return p;
  }
  bad(path + ".kind", "expected constant or profile");
}

// Outputs

std::ofstream open_out(const std::filesystem::path& dir, const char* name) {
  std::ofstream os(dir / name);
  if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
  os << std::setprecision(17);
  return os;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PairContext {
  ScalingPair pair;
  std::shared_ptr<const SpectralData> spectral;
  std::shared_ptr<const LimitSolution> limit;
  std::shared_ptr<const SpectralData> traj_spectral;
  std::optional<FluctuationSpec> fluct;
  Eigen::MatrixXd fluct_cov;
  std::unique_ptr<FieldSampler> sampler;
  std::vector<std::size_t> extra_records;
};

struct CurveRow {
  double s, mse_dt, mse_lim, pe_dt, pe_lim;
};

struct TaskResult {
  bool diverged = false;
  std::string divergence;
  double sup = 0.0;
  double l2 = 0.0;
  std::vector<double> probe_diff;
  std::vector<double> u_empirical;
  std::vector<CurveRow> curves;
  double seconds = 0.0;
};

TaskResult run_task(const ExperimentConfig& config, const PairContext& ctx,
                    std::size_t pair_idx, std::size_t rep) {
  const auto t0 = std::chrono::steady_clock::now();
  TaskResult out;
  const auto& p = ctx.pair;
  SgdConfig sgd;
  sgd.d = p.d;
  sgd.T = p.T;
  sgd.tau = config.scaling.tau;
  sgd.eta = p.eta;
  sgd.init = config.init;
  sgd.record_stride = std::max<std::size_t>(1, sgd.steps());
  sgd.extra_records = ctx.extra_records;

  const std::uint64_t task_id = (static_cast<std::uint64_t>(pair_idx) << 20) + rep;
  RngStream field_rng(config.seed, task_id, StreamRole::Field);
  RngStream noise_rng(config.seed, task_id, StreamRole::Noise);
  const NoiseSpec noise(p.sigma, config.noise, config.noise_nu);

  std::optional<Trajectory> traj;
  try {
    traj.emplace(run(sgd, *ctx.sampler, noise, field_rng, noise_rng));
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.divergence = e.what();
    out.seconds = seconds_since(t0);
    return out;
  }

  const auto metrics = convergence_metrics(std::span<const Trajectory>(&*traj, 1),
                                           *ctx.limit, config.probes);
  out.sup = metrics.sup_distance.front();
  out.l2 = metrics.l2_distance.front();
  for (const auto& pr : config.probes) {
    const double diff = interpolate(*traj, pr.s, pr.x) - ctx.limit->value_at(pr.s, pr.x);
    out.probe_diff.push_back(diff);
    if (p.gamma) out.u_empirical.push_back(*p.gamma * diff);
  }
  for (double s : config.curve_times) {
    out.curves.push_back({s, mse_discrete(*traj, s), mse_limit(*ctx.limit, s),
                          pe_discrete(*traj, s, *ctx.traj_spectral),
                          pe_limit(*ctx.limit, s)});
  }
  out.seconds = seconds_since(t0);
  return out;
}

std::vector<double> default_curve_times(double tau) {
  std::vector<double> t;
  for (int k = 0; k <= 10; ++k) t.push_back(tau * k / 10.0);
  return t;
}

std::optional<FluctuationRegime> subregime_of(const RegimeReport& r) {
  return r.regime == NoiseRegime::Low ? r.fluct_subregime : std::nullopt;
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& s = scaling;
  if (s.d_list.empty()) throw ValidationError("config: scaling.d_list is empty");
  for (auto d : s.d_list) {
    if (d < 1) throw ValidationError("config: scaling.d_list entries must be >= 1");
  }
  if (s.t_rule == TRuleKind::List && s.t_values.size() != s.d_list.size()) {
    throw ValidationError("config: scaling.T_rule.values must pair with d_list");
  }
  if (s.t_rule == TRuleKind::Quadratic && !(s.t_coefficient > 0.0)) {
    throw ValidationError("config: scaling.T_rule.c must be positive");
  }
  if (!(s.tau > 0.0)) throw ValidationError("config: scaling.tau must be positive");
  if (!(s.alpha > 0.0)) throw ValidationError("config: scaling.alpha must be positive");
  if (!(s.sigma_value >= 0.0)) {
    throw ValidationError("config: scaling.sigma_rule.value must be >= 0");
  }
  if (s.eta_rule == EtaRuleKind::AlphaOverSigmaSqrtT && s.sigma_value == 0.0) {
    throw ValidationError("config: eta_rule alpha_over_sigma_sqrtT needs sigma > 0");
  }
  if (!(s.thresholds.low > 0.0) || !(s.thresholds.high >= s.thresholds.low)) {
    throw ValidationError("config: scaling.thresholds need 0 < low <= high");
  }
  if (replications < 1) throw ValidationError("config: replications must be >= 1");
  if (solver.n < 2) throw ValidationError("config: solver.n must be >= 2");
  if (!(solver.dt > 0.0) || solver.dt > s.tau) {
    throw ValidationError("config: solver.dt must lie in (0, tau]");
  }
  if (probes.empty()) throw ValidationError("config: probes is empty");
  for (const auto& p : probes) {
    if (!(p.s >= 0.0 && p.s <= s.tau) || !(p.x >= 0.0 && p.x <= 1.0)) {
      throw ValidationError("config: probe (" + std::to_string(p.s) + ", " +
                            std::to_string(p.x) + ") outside [0,tau] x [0,1]");
    }
  }
  for (double t : curve_times) {
    if (!(t >= 0.0 && t <= s.tau)) {
      throw ValidationError("config: curve_times must lie in [0, tau]");
    }
  }
  if (noise == NoiseDistribution::StudentT && !(noise_nu > 4.0)) {
    throw ValidationError("config: noise.nu must exceed 4 for student_t");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: parse error: ") + e.what());
  }
  check_keys(j, "config", {"model", "scaling", "init", "noise", "sampler",
                           "replications", "seed", "solver", "outputs", "probes",
                           "curve_times"});
  ExperimentConfig c;
  c.canonical = j.dump();
  if (j.contains("seed")) c.seed = unsigned_int(j["seed"], "seed");
  if (j.contains("model")) c.model = parse_model(j["model"]);
  if (!j.contains("scaling")) throw ValidationError("config: scaling: missing");
  c.scaling = parse_scaling(j["scaling"]);
  if (j.contains("init")) c.init = parse_init(j["init"], c.seed);
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    check_keys(n, "noise", {"distribution", "nu"});
    const auto dist = n.contains("distribution")
                          ? string(n["distribution"], "noise.distribution")
                          : std::string("gaussian");
    if (dist == "gaussian") {
      c.noise = NoiseDistribution::Gaussian;
    } else if (dist == "rademacher") {
      c.noise = NoiseDistribution::Rademacher;
    } else if (dist == "student_t") {
      c.noise = NoiseDistribution::StudentT;
    } else {
      bad("noise.distribution", "expected gaussian, rademacher or student_t");
    }
    if (n.contains("nu")) c.noise_nu = number(n["nu"], "noise.nu");
  }
  if (j.contains("sampler")) {
    check_keys(j["sampler"], "sampler", {"prefer_fft"});
    if (j["sampler"].contains("prefer_fft")) {
      c.prefer_fft = boolean(j["sampler"]["prefer_fft"], "sampler.prefer_fft");
    }
  }
  if (j.contains("replications")) {
    c.replications = static_cast<std::size_t>(unsigned_int(j["replications"], "replications"));
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check_keys(s, "solver", {"n", "dt", "scheme"});
    if (s.contains("n")) c.solver.n = static_cast<std::size_t>(unsigned_int(s["n"], "solver.n"));
    if (s.contains("dt")) c.solver.dt = number(s["dt"], "solver.dt");
    if (s.contains("scheme")) {
      const auto scheme = string(s["scheme"], "solver.scheme");
      if (scheme == "exact_ou") {
        c.solver.scheme = SdeScheme::ExactOU;
      } else if (scheme == "euler_maruyama") {
        c.solver.scheme = SdeScheme::EulerMaruyama;
      } else {
        bad("solver.scheme", "expected exact_ou or euler_maruyama");
      }
    }
  }
  if (j.contains("outputs")) c.outputs = string(j["outputs"], "outputs");
  if (j.contains("probes")) {
    const auto& p = j["probes"];
    if (!p.is_array()) bad("probes", "expected [[s, x], ...]");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto path = "probes[" + std::to_string(i) + "]";
      if (!p[i].is_array() || p[i].size() != 2) bad(path, "expected [s, x]");
      c.probes.push_back({number(p[i][0], path + "[0]"), number(p[i][1], path + "[1]")});
    }
  } else {
    c.probes.push_back({c.scaling.tau, 0.5});
  }
  if (j.contains("curve_times")) {
    const auto& t = j["curve_times"];
    if (!t.is_array()) bad("curve_times", "expected a list of times");
    for (std::size_t i = 0; i < t.size(); ++i) {
      c.curve_times.push_back(number(t[i], "curve_times[" + std::to_string(i) + "]"));
    }
  } else {
    c.curve_times = default_curve_times(c.scaling.tau);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::vector<ScalingPair> resolve_pairs(const ExperimentConfig& config) {
  const auto& s = config.scaling;
  std::vector<ScalingPair> pairs;
  for (std::size_t i = 0; i < s.d_list.size(); ++i) {
    ScalingPair p;
    p.d = s.d_list[i];
    const double d = static_cast<double>(p.d);
    p.T = s.t_rule == TRuleKind::Quadratic ? s.t_coefficient * d * d : s.t_values[i];
    if (!(p.T > 0.0)) throw ValidationError("config: resolved T must be positive");
    switch (s.sigma_rule) {
      case SigmaRuleKind::Constant:
        p.sigma = s.sigma_value;
        break;
      case SigmaRuleKind::DSqrtT:
        p.sigma = s.sigma_value * d * std::sqrt(p.T);
        break;
      case SigmaRuleKind::DT:
        p.sigma = s.sigma_value * d * p.T;
        break;
    }
    switch (s.gamma_rule) {
      case GammaRuleKind::None:
        break;
      case GammaRuleKind::SqrtT:
        p.gamma = std::sqrt(p.T);
        break;
      case GammaRuleKind::Constant:
        p.gamma = s.gamma_value;
        break;
    }
    if (s.eta_rule == EtaRuleKind::AlphaOverDT) {
      p.eta = s.alpha / (d * p.T);
    } else {
      if (!(p.sigma > 0.0)) {
        throw ValidationError("config: eta_rule alpha_over_sigma_sqrtT needs sigma > 0");
      }
      p.eta = s.alpha / (p.sigma * std::sqrt(p.T));
    }
    p.regime = classify_regime(p.d, p.T, p.eta, p.sigma, p.gamma, s.thresholds);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::size_t resolve_threads(std::optional<std::size_t> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("SGDLAB_THREADS")) {
    char* end = nullptr;
    const auto v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ValidationError(std::string("SGDLAB_THREADS must be a positive integer, got '") +
                          env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentSummary run_experiment(const ExperimentConfig& config, std::size_t threads) {
  config.validate();
  threads = std::max<std::size_t>(1, threads);
  json timings = json::object();
  auto t_start = std::chrono::steady_clock::now();

  ExperimentSummary summary;
  summary.pairs = resolve_pairs(config);
  const std::size_t n_pairs = summary.pairs.size();
  const std::size_t reps = config.replications;
  const double tau = config.scaling.tau;
  const double alpha = config.scaling.alpha;

  std::filesystem::create_directories(config.outputs);

  // Limits, samplers and spectral data once per pair.
  auto t0 = std::chrono::steady_clock::now();
  auto spectral = std::make_shared<const SpectralData>(
      spectral_decompose(config.model, config.solver.n));
  const GridFunction init_n = sample_initial(config.init, config.solver.n);
  std::vector<PairContext> ctx(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto& c = ctx[i];
    c.pair = summary.pairs[i];
    c.spectral = spectral;
    c.limit = std::make_shared<const LimitSolution>(
        solve_ode(spectral, init_n, alpha, tau, config.solver.dt));
    c.traj_spectral = std::make_shared<const SpectralData>(
        spectral_decompose(config.model, c.pair.d));
    c.sampler = std::make_unique<FieldSampler>(config.model, c.pair.d, config.prefer_fft);
    const auto sub = subregime_of(c.pair.regime);
    if (sub) {
      c.fluct.emplace(alpha, c.pair.regime.beta_hat, c.pair.regime.zeta_hat, *sub,
                      c.limit);
    }
    std::set<std::size_t> extras;
    for (const auto& p : config.probes) {
      const auto t = time_index(p.s, c.pair.T);
      extras.insert(t);
      extras.insert(t + 1);
    }
    for (double s : config.curve_times) extras.insert(time_index(s, c.pair.T));
    c.extra_records.assign(extras.begin(), extras.end());
  }
  timings["limits"] = seconds_since(t0);

  // Work queue of (pair, replication) tasks; results land in fixed slots.
  t0 = std::chrono::steady_clock::now();
  const std::size_t n_tasks = n_pairs * reps;
  std::vector<TaskResult> results(n_tasks);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= n_tasks) return;
      try {
        results[task] = run_task(config, ctx[task / reps], task / reps, task % reps);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n_tasks);
      }
    }
  };
  const std::size_t n_workers = std::min(threads, n_tasks);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  timings["simulate_wall"] = seconds_since(t0);
  double cpu = 0.0;
  for (const auto& r : results) cpu += r.seconds;
  timings["simulate_task_sum"] = cpu;

  summary.tasks = n_tasks;
  for (const auto& r : results) summary.diverged += r.diverged ? 1 : 0;

  // Fluctuation limit variances at the probes.
  t0 = std::chrono::steady_clock::now();
  for (auto& c : ctx) {
    if (c.fluct && c.pair.gamma) {
      c.fluct_cov = fluctuation_mode_covariance(*c.fluct, *c.spectral, tau, config.solver.dt);
    }
  }
  timings["fluctuation_limit"] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const auto& dir = config.outputs;
  auto mse = open_out(dir, "mse_curves.csv");
  auto pe = open_out(dir, "pe_curves.csv");
  auto fl = open_out(dir, "fluctuation_samples.csv");
  auto fll = open_out(dir, "fluctuation_limit.csv");
  auto conv = open_out(dir, "convergence.csv");
  auto norm = open_out(dir, "normality.csv");
  auto qq = open_out(dir, "qq.csv");
  mse << "rep,s,mse_dt,mse_limit,d,T\n";
  pe << "rep,s,pe_dt,pe_limit,d,T\n";
  fl << "rep,s,x,u_empirical,d,T\n";
  fll << "s,x,mean,variance,d,T\n";
  conv << "rep,status,sup_distance,l2_distance,d,T\n";
  norm << "s,x,n,mean,sd,ks_statistic,ks_pvalue,d,T\n";
  qq << "s,x,theoretical,sample,d,T\n";

  json regimes = json::array();
  json pairs_json = json::array();
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto& c = ctx[i];
    const auto& p = c.pair;
    const std::string tail = "," + std::to_string(p.d) + "," + [&] {
      std::ostringstream os;
      os << std::setprecision(17) << p.T;
      return os.str();
    }() + "\n";

    std::vector<std::vector<double>> per_probe(config.probes.size());
    std::vector<double> sups;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& res = results[i * reps + r];
      if (res.diverged) {
        conv << r << ",diverged,nan,nan" << tail;
        continue;
      }
      sups.push_back(res.sup);
      conv << r << ",ok," << res.sup << ',' << res.l2 << tail;
      for (const auto& row : res.curves) {
        mse << r << ',' << row.s << ',' << row.mse_dt << ',' << row.mse_lim << tail;
        pe << r << ',' << row.s << ',' << row.pe_dt << ',' << row.pe_lim << tail;
      }
      for (std::size_t k = 0; k < config.probes.size(); ++k) {
        per_probe[k].push_back(res.probe_diff[k]);
        if (!res.u_empirical.empty()) {
          fl << r << ',' << config.probes[k].s << ',' << config.probes[k].x << ','
             << res.u_empirical[k] << tail;
        }
      }
    }
    double mean_sup = 0.0;
    for (double v : sups) mean_sup += v;
    summary.sup_mean.push_back(sups.empty() ? std::nan("") : mean_sup / sups.size());

    for (std::size_t k = 0; k < config.probes.size(); ++k) {
      const auto& pr = config.probes[k];
      if (c.fluct && p.gamma) {
        fll << pr.s << ',' << pr.x << ",0,";
        if (pr.s > 0.0) {
          const auto cov =
              fluctuation_mode_covariance(*c.fluct, *c.spectral, pr.s, config.solver.dt);
          fll << grid_point_variance(*c.spectral, cov, pr.x);
        } else {
          fll << 0.0;
        }
        fll << tail;
      }
      const auto& v = per_probe[k];
      if (v.size() < 3) continue;
      const auto m = sample_moments(v);
      const double sd = std::sqrt(m.variance);
      norm << pr.s << ',' << pr.x << ',' << v.size() << ',' << m.mean << ',' << sd;
      if (sd > 0.0) {
        const auto ks = ks_normal_test(v);
        norm << ',' << ks.statistic << ',' << ks.p_value << tail;
        for (const auto& [th, sm] : qq_normal(v)) {
          qq << pr.s << ',' << pr.x << ',' << th << ',' << sm << tail;
        }
      } else {
        norm << ",nan,nan" << tail;
      }
    }

    regimes.push_back(json::parse(regime_json(p.regime)));
    json pj;
    pj["d"] = p.d;
    pj["T"] = p.T;
    pj["eta"] = p.eta;
    pj["sigma"] = p.sigma;
    pj["gamma"] = p.gamma ? json(*p.gamma) : json(nullptr);
    pj["regime"] = to_string(p.regime.regime);
    pj["fluct_subregime"] = p.regime.fluct_subregime
                                ? json(to_string(*p.regime.fluct_subregime))
                                : json(nullptr);
    pj["alpha"] = alpha;
    pj["tau"] = tau;
    pj["C2"] = config.model.sup_c2();
    pj["C3"] = config.model.lipschitz_c3();
    pj["lambda_min_positive"] = [&] {
      double m = 0.0;
      for (Eigen::Index k = 0; k < spectral->eigenvalues.size(); ++k) {
        const double l = spectral->eigenvalues(k);
        if (l > 1e-12 * std::max(1.0, config.model.sup_c2())) m = l;
      }
      return m;
    }();
    pj["sup_mean"] = summary.sup_mean.back();
    pj["diverged"] = reps - sups.size();
    pairs_json.push_back(std::move(pj));
  }
  {
    auto rj = open_out(dir, "regime.json");
    rj << regimes.dump(2) << '\n';
  }
  timings["write"] = seconds_since(t0);
  timings["total"] = seconds_since(t_start);

  json manifest;
  manifest["config_hash"] = fnv1a_hex(config.canonical);
  manifest["seed"] = config.seed;
  manifest["replications"] = reps;
  manifest["threads"] = threads;
  manifest["pairs"] = std::move(pairs_json);
  manifest["diverged"] = summary.diverged;
  manifest["timings"] = std::move(timings);
  {
    auto mj = open_out(dir, "manifest.json");
    mj << manifest.dump(2) << '\n';
  }

  if (n_tasks > 0 && 10 * summary.diverged > n_tasks) {
    throw SweepAbortedError("sweep aborted: " + std::to_string(summary.diverged) + " of " +
                            std::to_string(n_tasks) + " replications diverged");
  }
  return summary;
}

}  // namespace sgdlab
