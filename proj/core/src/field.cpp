#include "sgdlab/field.hpp"

#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace sgdlab {

namespace {

// FFTW's planner is not thread-safe; execution with the new-array API is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_circulant(const Eigen::MatrixXd& s, double tol) {
  const Eigen::Index d = s.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (std::abs(s(i, j) - s(0, (j - i + d) % d)) > tol) return false;
    }
  }
  return true;
}

Eigen::VectorXd circulant_eigenvalues(const Eigen::VectorXd& first_row) {
  const auto d = static_cast<int>(first_row.size());
  std::vector<double> in(first_row.data(), first_row.data() + d);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(d / 2 + 1));
  {
    std::lock_guard lock(planner_mutex());
    fftw_plan p = fftw_plan_dft_r2c_1d(
        d, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
        FFTW_ESTIMATE);
    fftw_execute(p);
    fftw_destroy_plan(p);
  }
  Eigen::VectorXd eig(d);
  for (int k = 0; k < d; ++k) {
    const int h = k <= d / 2 ? k : d - k;
    eig(k) = out[static_cast<std::size_t>(h)].real();
  }
  return eig;
}

}  // namespace

struct FieldSampler::FftPlan {
  fftw_plan plan = nullptr;
  ~FftPlan() {
    if (plan != nullptr) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

FieldSampler::FieldSampler(const CovarianceModel& model, std::size_t d,
                           bool prefer_fft)
    : model_(model), d_(d), mode_(SamplerMode::Dense) {
  if (d < 1) throw ValidationError("make_sampler: d must be >= 1");
  const double psd_tol = 1e-8 * model.sup_c2();
  const Eigen::MatrixXd sigma = kernel_matrix(model, d);
  const double circ_tol = 1e-12 * std::max(1.0, model.sup_c2());

  if (prefer_fft && d >= 2 && is_circulant(sigma, circ_tol)) {
    spectrum_ = circulant_eigenvalues(sigma.row(0).transpose());
    if (spectrum_.minCoeff() < -psd_tol) {
      throw InvalidKernelError("make_sampler: circulant spectrum has eigenvalue " +
                               std::to_string(spectrum_.minCoeff()));
    }
    mode_ = SamplerMode::CirculantFFT;
    const auto half = static_cast<Eigen::Index>(d / 2 + 1);
    half_scale_.resize(half);
    for (Eigen::Index k = 0; k < half; ++k) {
      half_scale_(k) =
          std::sqrt(std::max(spectrum_(k), 0.0) / static_cast<double>(d));
    }
    std::vector<std::complex<double>> in(static_cast<std::size_t>(half));
    std::vector<double> out(d);
    plan_ = std::make_unique<FftPlan>();
    std::lock_guard lock(planner_mutex());
    plan_->plan = fftw_plan_dft_c2r_1d(
        static_cast<int>(d), reinterpret_cast<fftw_complex*>(in.data()),
        out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    return;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
  if (solver.eigenvalues().minCoeff() < -psd_tol) {
    throw InvalidKernelError("make_sampler: Sigma_d has eigenvalue " +
                             std::to_string(solver.eigenvalues().minCoeff()));
  }
  const Eigen::VectorXd root =
      solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = solver.eigenvectors() * root.asDiagonal();
}

FieldSampler::~FieldSampler() = default;
FieldSampler::FieldSampler(FieldSampler&&) noexcept = default;
FieldSampler& FieldSampler::operator=(FieldSampler&&) noexcept = default;

void FieldSampler::draw(RngStream& rng, std::span<double> out) const {
  if (out.size() != d_) {
    throw ValidationError("draw_field: output length mismatch");
  }
  const auto d = static_cast<Eigen::Index>(d_);
  if (mode_ == SamplerMode::Dense) {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
    Eigen::Map<Eigen::VectorXd>(out.data(), d).noalias() = factor_ * z;
    return;
  }

  // Hermitian half spectrum: z_0 and z_{d/2} (d even) real with unit
  // variance, the rest complex with E|z|^2 = 1.
  const Eigen::Index half = half_scale_.size();
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(half));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (Eigen::Index k = 0; k < half; ++k) {
    const bool real_mode = (k == 0) || (d % 2 == 0 && k == d / 2);
    const double a = rng.normal();
    if (real_mode) {
      spec[static_cast<std::size_t>(k)] = {half_scale_(k) * a, 0.0};
    } else {
      const double b = rng.normal();
      spec[static_cast<std::size_t>(k)] = {half_scale_(k) * a * inv_sqrt2,
                                           half_scale_(k) * b * inv_sqrt2};
    }
  }
  fftw_execute_dft_c2r(plan_->plan,
                       reinterpret_cast<fftw_complex*>(spec.data()),
                       out.data());
}

GridFunction FieldSampler::draw(RngStream& rng) const {
  GridFunction x(static_cast<Eigen::Index>(d_));
  draw(rng, std::span<double>(x.data(), d_));
  return x;
}

FieldSampler make_sampler(const CovarianceModel& model, std::size_t d,
                          bool prefer_fft) {
  return FieldSampler(model, d, prefer_fft);
}

GridFunction draw_field(const FieldSampler& sampler, RngStream& rng) {
  return sampler.draw(rng);
}

NoiseSpec::NoiseSpec(double sigma, NoiseDistribution distribution, double nu)
    : sigma_(sigma), distribution_(distribution), nu_(nu) {
  if (!(sigma_ >= 0.0) || !std::isfinite(sigma_)) {
    throw ValidationError("noise: sigma must be finite and >= 0");
  }
  if (distribution_ == NoiseDistribution::StudentT && !(nu_ > 4.0)) {
    throw ValidationError(
        "noise: StudentT requires nu > 4 for a finite fourth moment");
  }
}

double NoiseSpec::kurtosis() const {
  switch (distribution_) {
    case NoiseDistribution::Gaussian:
      return 3.0;
    case NoiseDistribution::Rademacher:
      return 1.0;
    case NoiseDistribution::StudentT:
      return 3.0 * (nu_ - 2.0) / (nu_ - 4.0);
  }
  return 0.0;
}

double draw_noise(const NoiseSpec& spec, RngStream& rng) {
  if (spec.sigma() == 0.0) return 0.0;
  switch (spec.distribution()) {
    case NoiseDistribution::Gaussian:
      return spec.sigma() * rng.normal();
    case NoiseDistribution::Rademacher:
      return (rng.bits() & 1ULL) != 0 ? spec.sigma() : -spec.sigma();
    case NoiseDistribution::StudentT: {
      std::student_t_distribution<double> t(spec.nu());
      const double scale = std::sqrt((spec.nu() - 2.0) / spec.nu());
      return spec.sigma() * scale * t(rng.engine());
    }
  }
  return 0.0;
}

}  // namespace sgdlab
