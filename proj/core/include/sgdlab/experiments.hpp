#pragma once

#include "sgdlab/covariance.hpp"
#include "sgdlab/diagnostics.hpp"
#include "sgdlab/field.hpp"
#include "sgdlab/limit.hpp"
#include "sgdlab/sgdsim.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sgdlab {

enum class TRuleKind { Quadratic, List };
enum class SigmaRuleKind { Constant, DSqrtT, DT };
enum class GammaRuleKind { None, SqrtT, Constant };
enum class EtaRuleKind { AlphaOverDT, AlphaOverSigmaSqrtT };

struct ScalingConfig {
  std::vector<std::size_t> d_list;
  /// Quadratic: T = c d^2. List: T_values[i] pairs with d_list[i].
  TRuleKind t_rule = TRuleKind::Quadratic;
  double t_coefficient = 0.25;
  std::vector<double> t_values;
  double tau = 1.0;
  double alpha = 1.0;
  /// Constant: sigma = value. DSqrtT: sigma = value d sqrt(T).
  /// DT: sigma = value d T.
  SigmaRuleKind sigma_rule = SigmaRuleKind::Constant;
  double sigma_value = 0.0;
  GammaRuleKind gamma_rule = GammaRuleKind::None;
  double gamma_value = 0.0;
  EtaRuleKind eta_rule = EtaRuleKind::AlphaOverDT;
  RegimeThresholds thresholds;
};

struct SolverConfig {
  std::size_t n = 256;
  double dt = 1e-3;
  SdeScheme scheme = SdeScheme::ExactOU;
};

struct ExperimentConfig {
  CovarianceModel model = CovarianceModel::example1();
  ScalingConfig scaling;
  InitialCondition init = ConstantInit{1.0};
  NoiseDistribution noise = NoiseDistribution::Gaussian;
  double noise_nu = 0.0;
  bool prefer_fft = true;
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::filesystem::path outputs = "out";
  std::vector<Probe> probes;
  /// Times of the MSE/PE curves; defaults to 11 equispaced points on [0, tau].
  std::vector<double> curve_times;
  /// Canonical JSON of the parsed document, hashed into the manifest.
  std::string canonical;

  void validate() const;
};

/// Parses the JSON config (comments allowed). Unknown keys, wrong types and
/// inconsistent values throw ValidationError naming the offending key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Resolved constants of one (d, T) pair.
struct ScalingPair {
  std::size_t d = 0;
  double T = 0.0;
  double eta = 0.0;
  double sigma = 0.0;
  std::optional<double> gamma;
  RegimeReport regime;
};

std::vector<ScalingPair> resolve_pairs(const ExperimentConfig& config);

struct ExperimentSummary {
  std::vector<ScalingPair> pairs;
  /// Mean sup-probe distance per pair over converged replications.
  std::vector<double> sup_mean;
  std::size_t diverged = 0;
  std::size_t tasks = 0;
};

class SweepAbortedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& data);

/// Threads from `requested`, else SGDLAB_THREADS, else hardware concurrency.
std::size_t resolve_threads(std::optional<std::size_t> requested);

/// Runs every (pair, replication) task on a pool of `threads` workers and
/// writes mse_curves.csv, pe_curves.csv, fluctuation_samples.csv,
/// fluctuation_limit.csv, convergence.csv, normality.csv, qq.csv,
/// regime.json and manifest.json to config.outputs. Throws
/// SweepAbortedError when more than 10% of the tasks diverge.
ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 std::size_t threads);

}  // namespace sgdlab
