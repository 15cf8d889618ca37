#pragma once

#include "sgdlab/types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace sgdlab {

/// One cosine harmonic b * cos(2 pi k (x - y)).
struct Harmonic {
  int k = 1;
  double b = 0.0;
};

/// Stationary sinusoidal covariance kernel on [0,1]^2,
///
///   A(x, y) = a0 + sum_k b_k cos(2 pi k (x - y)),
///
/// with a0 >= 0 and b_k >= 0, which makes A positive semidefinite.  The model
/// also caches the two constants the rest of the library needs at runtime:
/// the sup bound C2 = a0 + sum b_k and the Lipschitz bound
/// C3 = 2 pi sum k b_k.
class CovarianceModel {
 public:
  /// Throws ValidationError for a0 < 0, b_k < 0, k < 1, duplicate k, or
  /// epsilon <= 0.  `epsilon` is the declared exponent slack of the
  /// summability condition sum k^(5+eps) b_k^2 < inf (always finite here).
  CovarianceModel(double a0, std::vector<Harmonic> harmonics,
                  double epsilon = 1.0);

  /// a0 = 1, b_1 = 1: A(x,y) = 1 + cos(2 pi (x - y)).
  static CovarianceModel example1();
  /// a0 = 7/120, b_k = 6 / (pi^4 k^4) truncated at k <= truncation. Its
  /// untruncated sum is (|x-y| - 1/2)^2 - 2 (|x-y| - 1/2)^4.
  static CovarianceModel example2(int truncation = 50);
  /// A(x,y) = c.
  static CovarianceModel constant(double c);

  double a0() const { return a0_; }
  std::span<const Harmonic> harmonics() const { return harmonics_; }
  double epsilon() const { return epsilon_; }
  double sup_c2() const { return sup_c2_; }
  double lipschitz_c3() const { return lipschitz_c3_; }
  /// 4 pi^2 sum k^2 b_k, bounding |A(x,x) + A(y,y) - 2A(x,y)| / |x-y|^2.
  double curvature_bound() const { return curvature_; }
  /// Finite truncation of sum_k k^(5+eps) b_k^2.
  double summability_sum() const;

  /// A as a function of the lag x - y.
  double at_lag(double lag) const;
  double operator()(double x, double y) const { return at_lag(x - y); }

 private:
  double a0_;
  std::vector<Harmonic> harmonics_;
  double epsilon_;
  double sup_c2_ = 0.0;
  double lipschitz_c3_ = 0.0;
  double curvature_ = 0.0;
};

/// Eigenpairs of the grid operator g -> (1/n) sum_j A(i/n, j/n) g_j.
struct SpectralData {
  CovarianceModel model;
  std::size_t grid_size = 0;
  /// Descending, clipped at zero.
  Eigen::VectorXd eigenvalues;
  /// n x m; columns orthonormal under <f,g> = (1/n) sum f_i g_i.
  Eigen::MatrixXd eigenvectors;

  std::size_t mode_count() const {
    return static_cast<std::size_t>(eigenvalues.size());
  }
  double max_eigenvalue() const;
  /// Mode coefficients <f, phi_k> of a grid function.
  Eigen::VectorXd project(const GridFunction& f) const;
  /// sum_k c_k phi_k.
  GridFunction synthesize(const Eigen::VectorXd& coefficients) const;
};

double eval_A(const CovarianceModel& model, double x, double y);

/// Gaussian fourth moment (Isserlis):
/// A12 A34 + A13 A24 + A14 A23.
double eval_B_gaussian(const CovarianceModel& model, double x1, double x2,
                       double x3, double x4);

/// B(x1,x2,x3,x4) - A(x1,x3) A(x2,x4) = A12 A34 + A14 A23.
double eval_Btilde(const CovarianceModel& model, double x1, double x2,
                   double x3, double x4);

/// Gaussian eighth moment: sum over the 105 pairings of {1..8}.
double eval_E_gaussian(const CovarianceModel& model,
                       const std::array<double, 8>& x);

/// The 105 perfect matchings of {0..7}, each as four index pairs.
const std::vector<std::array<std::array<int, 2>, 4>>& eight_point_pairings();

/// Sigma_d(i,j) = A(i/d, j/d) for i, j in 1..d.  Throws InvalidKernelError
/// when the smallest eigenvalue is below -1e-8 * C2.
Eigen::MatrixXd sigma_matrix(const CovarianceModel& model, std::size_t d);

/// Same matrix without the eigenvalue check.
Eigen::MatrixXd kernel_matrix(const CovarianceModel& model, std::size_t d);

/// sup |W_{Sigma_d}(x,y) - A(x,y)| over a (resolution_factor * d + 1)^2
/// evaluation grid, W being the piecewise-constant embedding
/// W(x,y) = Sigma_d(ceil(dx), ceil(dy)) (cells at 0 take index 1).
double embedding_sup_error(const CovarianceModel& model, std::size_t d,
                           std::size_t resolution_factor = 8);

/// Eigendecomposition of Sigma_n / n keeping modes with lambda >= mode_cutoff.
/// Eigenvalues in [-1e-10 C2, 0) are clipped to zero; anything lower throws
/// InvalidKernelError.
SpectralData spectral_decompose(const CovarianceModel& model, std::size_t n,
                                double mode_cutoff = 0.0);

}  // namespace sgdlab
