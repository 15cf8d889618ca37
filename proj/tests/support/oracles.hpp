#pragma once

// Reference implementations used as test oracles. They deliberately avoid the
// library's own helpers: kernels are rebuilt from the cosine formula and
// moments come from recursion rather than the library's pairing table.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

struct Kernel {
  double a0;
  std::vector<std::pair<int, double>> harmonics;

  double operator()(double x, double y) const {
    double v = a0;
    for (const auto& [k, b] : harmonics) v += b * std::cos(2.0 * kPi * k * (x - y));
    return v;
  }
};

inline Kernel example1() { return {1.0, {{1, 1.0}}}; }

inline Kernel example2(int trunc = 50) {
  Kernel k{7.0 / 120.0, {}};
  for (int j = 1; j <= trunc; ++j) {
    k.harmonics.emplace_back(j, 6.0 / (std::pow(kPi, 4) * std::pow(j, 4)));
  }
  return k;
}

/// Untruncated Example 2 kernel as a function of the lag.
inline double example2_closed_form(double lag) {
  const double u = std::abs(lag) - 0.5;
  return u * u - 2.0 * u * u * u * u;
}

/// Sigma_n(i,j) = A(i/n, j/n), 1-based grid.
inline Eigen::MatrixXd grid_matrix(const Kernel& a, int n) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = a((i + 1.0) / n, (j + 1.0) / n);
  }
  return m;
}

/// Classical RK4 for d theta/ds = -alpha (Sigma_n / n) theta.
inline Eigen::VectorXd rk4_ode(const Kernel& a, const Eigen::VectorXd& init,
                               double alpha, double tau, int steps) {
  const int n = static_cast<int>(init.size());
  const Eigen::MatrixXd op = -alpha * grid_matrix(a, n) / n;
  const double h = tau / steps;
  Eigen::VectorXd y = init;
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXd k1 = op * y;
    const Eigen::VectorXd k2 = op * (y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = op * (y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = op * (y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// (I - eta x x^T) state + eta eps x with an explicit matrix.
inline Eigen::VectorXd dense_sgd_step(const Eigen::VectorXd& state,
                                      const Eigen::VectorXd& x, double eps,
                                      double eta) {
  const Eigen::Index d = state.size();
  const Eigen::MatrixXd m =
      Eigen::MatrixXd::Identity(d, d) - eta * x * x.transpose();
  return m * state + eta * eps * x;
}

/// K(x_i, x_j) = (1/n^2) sum_{a,b} theta_a theta_b Btilde(x_i, x_j, z_a, z_b)
/// with Btilde(x1,x2,x3,x4) = A(x1,x2) A(x3,x4) + A(x1,x4) A(x2,x3).
inline Eigen::MatrixXd naive_xi3_kernel(const Kernel& a,
                                        const Eigen::VectorXd& theta) {
  const int n = static_cast<int>(theta.size());
  auto g = [n](int i) { return (i + 1.0) / n; };
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < n; ++p) {
        for (int q = 0; q < n; ++q) {
          const double bt = a(g(i), g(j)) * a(g(p), g(q)) +
                            a(g(i), g(q)) * a(g(j), g(p));
          s += theta(p) * theta(q) * bt;
        }
      }
      k(i, j) = s / (static_cast<double>(n) * n);
    }
  }
  return k;
}

/// Gaussian moment E[prod W(x_i)] by the recursion
/// E[W1 ... Wm] = sum_{j>1} A(x1, xj) E[prod_{i != 1, j} W(x_i)].
inline double gaussian_moment(const Kernel& a, std::vector<double> x) {
  if (x.empty()) return 1.0;
  if (x.size() % 2 == 1) return 0.0;
  double total = 0.0;
  const double first = x.front();
  for (std::size_t j = 1; j < x.size(); ++j) {
    std::vector<double> rest;
    for (std::size_t i = 1; i < x.size(); ++i) {
      if (i != j) rest.push_back(x[i]);
    }
    total += a(first, x[j]) * gaussian_moment(a, rest);
  }
  return total;
}

}  // namespace oracle
