#include "sgdlab/covariance.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

namespace sgdlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void build_pairings(std::array<bool, 8>& used,
                    std::array<std::array<int, 2>, 4>& current, int depth,
                    std::vector<std::array<std::array<int, 2>, 4>>& out) {
  if (depth == 4) {
    out.push_back(current);
    return;
  }
  int first = 0;
  while (used[first]) ++first;
  used[first] = true;
  for (int partner = first + 1; partner < 8; ++partner) {
    if (used[partner]) continue;
    used[partner] = true;
    current[depth] = {first, partner};
    build_pairings(used, current, depth + 1, out);
    used[partner] = false;
  }
  used[first] = false;
}

}  // namespace

CovarianceModel::CovarianceModel(double a0, std::vector<Harmonic> harmonics,
                                 double epsilon)
    : a0_(a0), harmonics_(std::move(harmonics)), epsilon_(epsilon) {
  if (!(a0_ >= 0.0)) {
    throw ValidationError("covariance: a0 must be >= 0");
  }
  if (!(epsilon_ > 0.0)) {
    throw ValidationError("covariance: epsilon must be > 0");
  }
  std::set<int> seen;
  for (const auto& h : harmonics_) {
    if (h.k < 1) {
      throw ValidationError("covariance: harmonic index k must be >= 1");
    }
    if (!(h.b >= 0.0)) {
      throw ValidationError("covariance: harmonic weight b_" +
                            std::to_string(h.k) + " must be >= 0");
    }
    if (!seen.insert(h.k).second) {
      throw ValidationError("covariance: duplicate harmonic k=" +
                            std::to_string(h.k));
    }
  }
  std::sort(harmonics_.begin(), harmonics_.end(),
            [](const Harmonic& l, const Harmonic& r) { return l.k < r.k; });

  sup_c2_ = a0_;
  for (const auto& h : harmonics_) {
    sup_c2_ += h.b;
    lipschitz_c3_ += kTwoPi * h.k * h.b;
    curvature_ += 4.0 * std::numbers::pi * std::numbers::pi *
                  static_cast<double>(h.k) * h.k * h.b;
  }
}

CovarianceModel CovarianceModel::example1() {
  return CovarianceModel(1.0, {{1, 1.0}}, 1.0);
}

CovarianceModel CovarianceModel::example2(int truncation) {
  if (truncation < 1) {
    throw ValidationError("example2: truncation must be >= 1");
  }
  std::vector<Harmonic> hs;
  hs.reserve(static_cast<std::size_t>(truncation));
  const double pi4 = std::pow(std::numbers::pi, 4);
  for (int k = 1; k <= truncation; ++k) {
    const double k4 = std::pow(static_cast<double>(k), 4);
    hs.push_back({k, 6.0 / (pi4 * k4)});
  }
  return CovarianceModel(7.0 / 120.0, std::move(hs), 1.0);
}

CovarianceModel CovarianceModel::constant(double c) {
  return CovarianceModel(c, {}, 1.0);
}

double CovarianceModel::summability_sum() const {
  double s = 0.0;
  for (const auto& h : harmonics_) {
    s += std::pow(static_cast<double>(h.k), 5.0 + epsilon_) * h.b * h.b;
  }
  return s;
}

double CovarianceModel::at_lag(double lag) const {
  double v = a0_;
  for (const auto& h : harmonics_) {
    v += h.b * std::cos(kTwoPi * h.k * lag);
  }
  return v;
}

double SpectralData::max_eigenvalue() const {
  return eigenvalues.size() == 0 ? 0.0 : eigenvalues.maxCoeff();
}

Eigen::VectorXd SpectralData::project(const GridFunction& f) const {
  if (static_cast<std::size_t>(f.size()) != grid_size) {
    throw ValidationError("project: grid function length " +
                          std::to_string(f.size()) + " != grid size " +
                          std::to_string(grid_size));
  }
  return eigenvectors.transpose() * f / static_cast<double>(grid_size);
}

GridFunction SpectralData::synthesize(const Eigen::VectorXd& c) const {
  return eigenvectors * c;
}

double eval_A(const CovarianceModel& model, double x, double y) {
  return model(x, y);
}

double eval_B_gaussian(const CovarianceModel& m, double x1, double x2,
                       double x3, double x4) {
  return m(x1, x2) * m(x3, x4) + m(x1, x3) * m(x2, x4) +
         m(x1, x4) * m(x2, x3);
}

double eval_Btilde(const CovarianceModel& m, double x1, double x2, double x3,
                   double x4) {
  return m(x1, x2) * m(x3, x4) + m(x1, x4) * m(x2, x3);
}

const std::vector<std::array<std::array<int, 2>, 4>>& eight_point_pairings() {
  static const auto table = [] {
    std::vector<std::array<std::array<int, 2>, 4>> out;
    std::array<bool, 8> used{};
    std::array<std::array<int, 2>, 4> current{};
    build_pairings(used, current, 0, out);
    return out;
  }();
  return table;
}

double eval_E_gaussian(const CovarianceModel& m,
                       const std::array<double, 8>& x) {
  double total = 0.0;
  for (const auto& pairing : eight_point_pairings()) {
    double prod = 1.0;
    for (const auto& [i, j] : pairing) prod *= m(x[i], x[j]);
    total += prod;
  }
  return total;
}

Eigen::MatrixXd kernel_matrix(const CovarianceModel& model, std::size_t d) {
  if (d < 1) throw ValidationError("kernel_matrix: d must be >= 1");
  const auto n = static_cast<Eigen::Index>(d);
  const double inv = 1.0 / static_cast<double>(d);
  // Stationary kernel: one evaluation per lag.
  Eigen::VectorXd by_lag(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    by_lag(l) = model.at_lag(static_cast<double>(l) * inv);
  }
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      s(i, j) = by_lag(std::abs(i - j));
    }
  }
  return s;
}

Eigen::MatrixXd sigma_matrix(const CovarianceModel& model, std::size_t d) {
  Eigen::MatrixXd s = kernel_matrix(model, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      s, Eigen::EigenvaluesOnly);
  const double min_eig = solver.eigenvalues().minCoeff();
  if (min_eig < -1e-8 * model.sup_c2()) {
    throw InvalidKernelError("sigma_matrix: minimum eigenvalue " +
                             std::to_string(min_eig) + " below tolerance");
  }
  return s;
}

double embedding_sup_error(const CovarianceModel& model, std::size_t d,
                           std::size_t resolution_factor) {
  if (d < 1) throw ValidationError("embedding_sup_error: d must be >= 1");
  if (resolution_factor < 8) {
    throw ValidationError("embedding_sup_error: resolution factor must be >= 8");
  }
  const std::size_t r = resolution_factor * d;
  const double inv_r = 1.0 / static_cast<double>(r);
  const double inv_d = 1.0 / static_cast<double>(d);
  // Cell index ceil(d x) for x = m / r, with x = 0 assigned to cell 1.
  std::vector<std::size_t> cell(r + 1);
  for (std::size_t m = 0; m <= r; ++m) {
    cell[m] = std::max<std::size_t>(1, (m * d + r - 1) / r);
  }
  double worst = 0.0;
  for (std::size_t a = 0; a <= r; ++a) {
    const double x = static_cast<double>(a) * inv_r;
    for (std::size_t b = 0; b <= r; ++b) {
      const double y = static_cast<double>(b) * inv_r;
      const double w = model(static_cast<double>(cell[a]) * inv_d,
                             static_cast<double>(cell[b]) * inv_d);
      worst = std::max(worst, std::abs(w - model(x, y)));
    }
  }
  return worst;
}

SpectralData spectral_decompose(const CovarianceModel& model, std::size_t n,
                                double mode_cutoff) {
  if (n < 2) throw ValidationError("spectral_decompose: n must be >= 2");
  if (!(mode_cutoff >= 0.0)) {
    throw ValidationError("spectral_decompose: mode_cutoff must be >= 0");
  }
  const double nd = static_cast<double>(n);
  Eigen::MatrixXd op = kernel_matrix(model, n) / nd;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op);
  if (solver.info() != Eigen::Success) {
    throw InvalidKernelError("spectral_decompose: eigensolver failed");
  }
  const double clip = 1e-10 * model.sup_c2();
  const Eigen::VectorXd& ascending = solver.eigenvalues();
  if (ascending(0) < -clip) {
    throw InvalidKernelError("spectral_decompose: eigenvalue " +
                             std::to_string(ascending(0)) +
                             " violates positive semidefiniteness");
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ascending.size() - 1; i >= 0; --i) {
    const double lam = std::max(ascending(i), 0.0);
    if (lam >= mode_cutoff) keep.push_back(i);
  }

  SpectralData out{model, n, Eigen::VectorXd(static_cast<Eigen::Index>(keep.size())),
                   Eigen::MatrixXd(static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(keep.size()))};
  const double scale = std::sqrt(nd);
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    out.eigenvalues(col) = std::max(ascending(keep[c]), 0.0);
    out.eigenvectors.col(col) = solver.eigenvectors().col(keep[c]) * scale;
  }
  return out;
}

}  // namespace sgdlab
