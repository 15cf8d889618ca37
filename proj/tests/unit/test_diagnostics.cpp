#include "oracles.hpp"

#include "sgdlab/diagnostics.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

using namespace sgdlab;

namespace {

// Trajectory holding the ODE grid values at every iterate t/T.
Trajectory trajectory_from(const LimitSolution& sol, double T, double tau) {
  const std::size_t d = sol.grid_size();
  const auto steps = static_cast<std::size_t>(std::floor(tau * T));
  Trajectory traj(d, T, steps);
  for (std::size_t t = 0; t <= steps; ++t) {
    const GridFunction v = sol.values_at(static_cast<double>(t) / T);
    traj.record(t, std::span<const double>(v.data(), d));
  }
  return traj;
}

Trajectory constant_trajectory(std::size_t d, double c) {
  Trajectory traj(d, 10.0, 10);
  const std::vector<double> v(d, c);
  for (std::size_t t = 0; t <= 10; ++t) traj.record(t, v);
  return traj;
}

std::shared_ptr<const SpectralData> spectral(const CovarianceModel& m, std::size_t n) {
  return std::make_shared<const SpectralData>(spectral_decompose(m, n));
}

double normal_quantile(double p) {
  // Bisection on the normal CDF.
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(MseDiscrete, TrivialValues) {
  EXPECT_EQ(mse_discrete(constant_trajectory(16, 0.0), 0.5), 0.0);
  EXPECT_NEAR(mse_discrete(constant_trajectory(16, 1.7), 0.5), 1.7 * 1.7, 1e-14);
}

TEST(PeDiscrete, ConstantAndOracle) {
  const auto sd = spectral(CovarianceModel::example1(), 16);
  EXPECT_NEAR(pe_discrete(constant_trajectory(16, 0.0), 0.3, *sd), 0.0, 1e-15);
  EXPECT_NEAR(pe_discrete(constant_trajectory(16, 2.0), 0.3, *sd), 4.0, 1e-12);

  const auto sd2 = spectral(CovarianceModel::example2(30), 24);
  const Eigen::MatrixXd a = oracle::grid_matrix(oracle::example2(30), 24);
  std::mt19937_64 eng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory traj(24, 1.0, 1);
    std::vector<double> v(24);
    for (auto& x : v) x = nd(eng);
    traj.record(0, v);
    traj.record(1, v);
    const Eigen::Map<const Eigen::VectorXd> f(v.data(), 24);
    const double pe = pe_discrete(traj, 0.0, *sd2);
    EXPECT_GE(pe, 0.0);
    EXPECT_NEAR(pe, f.dot(a * f) / (24.0 * 24.0), 1e-12);
  }
  EXPECT_THROW(pe_discrete(constant_trajectory(16, 1.0), 0.0, *sd2), ValidationError);
}

TEST(LimitFunctionals, ConstantAndExample1) {
  const auto sd = spectral(CovarianceModel::constant(0.6), 8);
  const auto sol = solve_ode(sd, GridFunction::Constant(8, 1.5), 1.0, 1.0, 0.5);
  EXPECT_NEAR(mse_limit(sol, 0.0), 2.25, 1e-12);
  EXPECT_NEAR(pe_limit(sol, 0.0), 2.25 * 0.6, 1e-12);

  const auto sd1 = spectral(CovarianceModel::example1(), 128);
  const auto mixed = sample_initial(ProfileInit{"mixed"}, 128);
  const auto s1 = solve_ode(sd1, mixed, 2.0, 2.0, 0.01);
  for (double tau : {0.25, 0.5, 1.0, 2.0}) {
    EXPECT_LE(mse_limit(s1, tau), mse_limit(s1, 0.0) * std::exp(-2.0 * 2.0 * 0.5 * tau));
  }
}

TEST(PeBound, ZeroInitAndExample2) {
  const auto sd = spectral(CovarianceModel::example2(50), 128);
  const auto zero = solve_ode(sd, GridFunction::Zero(128), 1.0, 1.0, 0.1);
  const auto z = pe_time_average_bound(zero, 1.0, 1.0);
  EXPECT_EQ(z.pe, 0.0);
  EXPECT_EQ(z.ratio, 0.0);
  EXPECT_TRUE(z.holds);

  const auto init = sample_initial(ProfileInit{"smooth_random", 11}, 128);
  const auto sol = solve_ode(sd, init, 1.0, 4.0, 1e-3);
  for (double tau : {1.0, 2.0, 4.0}) {
    const auto r = pe_time_average_bound(sol, 1.0, tau);
    EXPECT_TRUE(r.holds);
    EXPECT_LT(r.ratio, 1.0);
  }
  for (std::size_t i = 1; i < sol.times().size(); ++i) {
    const double t0 = sol.times()[i - 1], t1 = sol.times()[i];
    EXPECT_LE((pe_limit(sol, t1) - pe_limit(sol, t0)) / (t1 - t0), 1e-14);
  }
}

TEST(ClassifyRegime, LowNoiseExample) {
  const std::size_t d = 100;
  const double T = 1e4;
  const auto r = classify_regime(d, T, 2.0 / (d * T), 1.0, std::sqrt(T));
  EXPECT_NEAR(r.ratio_noise, 1e-8, 1e-22);
  EXPECT_EQ(r.regime, NoiseRegime::Low);
  EXPECT_NEAR(r.alpha_hat, 2.0, 1e-12);
  EXPECT_NEAR(r.zeta_hat, 1.0, 1e-15);
  EXPECT_NEAR(r.beta_hat, 1e-2, 1e-15);
  ASSERT_TRUE(r.fluct_subregime.has_value());
  EXPECT_EQ(*r.fluct_subregime, FluctuationRegime::ParticleInteraction);
}

TEST(ClassifyRegime, ModerateAndHigh) {
  const std::size_t d = 100;
  const double T = 1e4;
  const auto m = classify_regime(d, T, 1.0 / (d * T), d * std::sqrt(T));
  EXPECT_NEAR(m.ratio_noise, 1.0, 1e-12);
  EXPECT_EQ(m.regime, NoiseRegime::Moderate);
  EXPECT_FALSE(m.fluct_subregime.has_value());
  EXPECT_NEAR(m.beta_hat, 1.0, 1e-12);

  const double sigma = d * T;
  const auto h = classify_regime(d, T, 1.0 / (sigma * std::sqrt(T)), sigma);
  EXPECT_NEAR(h.ratio_noise, T, 1e-8);
  EXPECT_EQ(h.regime, NoiseRegime::High);
  EXPECT_NEAR(h.alpha_hat, 1.0, 1e-12);

  const auto edge = classify_regime(10, 1.0, 1.0, 1.0, std::nullopt, {1e-2, 1.0});
  EXPECT_EQ(edge.regime, NoiseRegime::Moderate);
  const auto above = classify_regime(10, 1.0, 1.0, 10.0 + 1e-9, std::nullopt, {1e-2, 1.0});
  EXPECT_EQ(above.regime, NoiseRegime::High);
}

TEST(ClassifyRegime, Subregimes) {
  const auto nd = classify_regime(10, 1e6, 1e-7, 500.0, 1.0);
  EXPECT_EQ(nd.regime, NoiseRegime::Low);
  EXPECT_EQ(nd.fluct_subregime, FluctuationRegime::NoiseDominates);
  const auto ie = classify_regime(100, 1e4, 1e-6, 1.0, 0.05);
  EXPECT_EQ(ie.fluct_subregime, FluctuationRegime::InterpolationError);
  const auto none = classify_regime(100, 1e8, 1e-10, 1.0, 10.0);
  EXPECT_FALSE(none.fluct_subregime.has_value());
}

TEST(ClassifyRegime, SigmaScaling) {
  for (double c : {2.0, 3.0, 0.1, 17.5}) {
    const auto a = classify_regime(37, 123.0, 1e-3, 0.7);
    const auto b = classify_regime(37, 123.0, 1e-3, 0.7 * c);
    EXPECT_NEAR(b.ratio_noise, c * c * a.ratio_noise, 1e-15 * b.ratio_noise);
  }
  EXPECT_THROW(classify_regime(0, 1.0, 1.0, 1.0), ValidationError);
}

TEST(ClassifyRegime, JsonDocument) {
  const auto r = classify_regime(100, 1e4, 2e-6, 1.0, 100.0);
  const auto j = nlohmann::json::parse(regime_json(r));
  EXPECT_EQ(j.at("regime"), "Low");
  EXPECT_EQ(j.at("fluct_subregime"), "ParticleInteraction");
  EXPECT_NEAR(j.at("ratio_noise").get<double>(), 1e-8, 1e-20);
  const auto m = nlohmann::json::parse(regime_json(classify_regime(1, 1.0, 1.0, 1.0)));
  EXPECT_TRUE(m.at("gamma").is_null());
  EXPECT_TRUE(m.at("fluct_subregime").is_null());
}

TEST(Fluctuation, LinearInGammaAndRegimeGuard) {
  const std::size_t n = 32;
  const auto sd = spectral(CovarianceModel::example1(), n);
  const auto ode = solve_ode(sd, GridFunction::Constant(n, 1.0), 1.0, 1.0, 0.01);
  const auto traj = trajectory_from(solve_ode(sd, sample_initial(ProfileInit{"mixed"}, n),
                                              1.0, 1.0, 0.01),
                                    100.0, 1.0);
  auto zero_u = solve_ode(sd, GridFunction::Zero(n), 1.0, 1.0, 0.01);
  const auto low = classify_regime(n, 100.0, 1.0 / (n * 100.0), 0.0, 10.0);
  const auto a = mse_fluctuation(traj, ode, zero_u, 1.0, 0.5, low);
  const auto b = mse_fluctuation(traj, ode, zero_u, 2.0, 0.5, low);
  EXPECT_DOUBLE_EQ(b.empirical, 2.0 * a.empirical);
  EXPECT_EQ(a.limit, 0.0);
  const auto pa = pe_fluctuation(traj, *sd, ode, zero_u, 1.0, 0.5, low);
  const auto pb = pe_fluctuation(traj, *sd, ode, zero_u, 2.0, 0.5, low);
  EXPECT_DOUBLE_EQ(pb.empirical, 2.0 * pa.empirical);
  EXPECT_EQ(pa.limit, 0.0);

  const auto u = solve_ode(sd, sample_initial(ProfileInit{"cosine"}, n), 1.0, 1.0, 0.01);
  const auto c = mse_fluctuation(traj, ode, u, 1.0, 0.0, low);
  EXPECT_NEAR(c.limit, 2.0 * grid_inner(ode.values_at(0.0), u.values_at(0.0)), 1e-12);

  const auto same = trajectory_from(ode, 1000.0, 1.0);
  EXPECT_NEAR(mse_fluctuation(same, ode, zero_u, 3.0, 0.5, low).empirical, 0.0, 1e-10);

  const auto moderate = classify_regime(n, 100.0, 1.0, n * 10.0);
  EXPECT_THROW(mse_fluctuation(traj, ode, u, 1.0, 0.5, moderate), RegimeMismatchError);
  EXPECT_THROW(pe_fluctuation(traj, *sd, ode, u, 1.0, 0.5, moderate), RegimeMismatchError);
}

TEST(Kolmogorov, MatchesHighPrecisionValues) {
  // Durbin matrix evaluated in 60-digit arithmetic.
  struct Case {
    std::size_t n;
    double d;
    double p;
  };
  for (const Case& c : {Case{10, 0.274, 0.62847961545650428}, Case{20, 0.1, 0.023744905407845036},
                        Case{50, 0.2, 0.96856122223046549}, Case{200, 0.05, 0.31973727456044239},
                        Case{200, 0.12, 0.9942542395071674},
                        Case{1000, 0.02, 0.18910286892978785},
                        Case{3, 0.5, 0.6666666666666667}}) {
    EXPECT_NEAR(kolmogorov_cdf(c.n, c.d), c.p, 1e-12) << c.n << " " << c.d;
  }
  // Upper-tail shortcut: n d^2 = 6.25 with n > 99.
  EXPECT_NEAR(kolmogorov_cdf(100, 0.25), 0.99999459112822357, 1e-6);
  EXPECT_EQ(kolmogorov_cdf(10, 0.0), 0.0);
  EXPECT_EQ(kolmogorov_cdf(10, 1.0), 1.0);
  EXPECT_GT(kolmogorov_cdf(5000, 0.02), kolmogorov_cdf(5000, 0.01));
  EXPECT_NEAR(kolmogorov_cdf(5000, 0.015), kolmogorov_cdf(3000, 0.015 * std::sqrt(5000.0 / 3000.0)),
              0.01);
}

TEST(KsTest, ExactQuantilesAndPower) {
  const std::size_t n = 400;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = normal_quantile((i + 0.5) / n);
  }
  const auto exact = ks_normal_test(q, false);
  EXPECT_NEAR(exact.statistic, 0.5 / n, 1e-6);
  EXPECT_GT(exact.p_value, 0.99);

  std::mt19937_64 eng(9);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> e(n);
  for (auto& x : e) x = ex(eng);
  EXPECT_LT(ks_normal_test(e).p_value, 1e-4);
  EXPECT_THROW(ks_normal_test(std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST(KsTest, GaussianSelfTest) {
  int rejections = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(derive_seed(31, t, StreamRole::Noise));
    std::vector<double> v(200);
    for (auto& x : v) x = 3.0 + 2.0 * rng.normal();
    if (ks_normal_test(v).p_value < 0.01) ++rejections;
  }
  // Studentizing makes the nominal test conservative.
  EXPECT_LE(rejections, 6);
}

TEST(QqNormal, PlottingPositions) {
  std::vector<double> v(20);
  for (int i = 0; i < 20; ++i) v[i] = 19.0 - i;
  const auto qq = qq_normal(v);
  ASSERT_EQ(qq.size(), 20u);
  EXPECT_NEAR(qq.front().first, -1.9599639845400545, 1e-12);
  EXPECT_NEAR(qq.back().first, 1.9599639845400545, 1e-12);
  for (std::size_t i = 1; i < qq.size(); ++i) {
    EXPECT_LT(qq[i - 1].first, qq[i].first);
    EXPECT_LT(qq[i - 1].second, qq[i].second);
  }
  const auto m = sample_moments(v);
  EXPECT_NEAR(qq.front().second, (0.0 - m.mean) / std::sqrt(m.variance), 1e-12);
}

TEST(SampleMoments, Values) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto m = sample_moments(v);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.variance, 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.se, std::sqrt(5.0 / 12.0), 1e-15);
}

TEST(ConvergenceMetrics, ExactTrajectoryAndProbeStatistics) {
  const std::size_t n = 64;
  const auto sd = spectral(CovarianceModel::example1(), n);
  const auto ode = solve_ode(sd, sample_initial(ProfileInit{"mixed"}, n), 1.0, 1.0, 1e-3);
  const std::vector<Probe> probes{{0.25, 0.5}, {0.5, 0.25}, {1.0, 1.0}};
  std::vector<Trajectory> one{trajectory_from(ode, 1000.0, 1.0)};
  const auto m1 = convergence_metrics(one, ode, probes);
  ASSERT_EQ(m1.sup_distance.size(), 1u);
  EXPECT_LE(m1.sup_distance[0], 1e-10);
  EXPECT_TRUE(m1.probes.empty());

  std::vector<Trajectory> reps;
  for (double c : {0.0, 0.1, -0.1, 0.2}) {
    const GridFunction init =
        sample_initial(ProfileInit{"mixed"}, n) + GridFunction::Constant(n, c);
    reps.push_back(trajectory_from(solve_ode(sd, init, 1.0, 1.0, 1e-3), 1000.0, 1.0));
  }
  const auto m = convergence_metrics(reps, ode, probes);
  ASSERT_EQ(m.probes.size(), 3u);
  EXPECT_NEAR(m.sup_distance[1], 0.1 * std::exp(-0.25), 1e-9);
  EXPECT_NEAR(m.probes[0].mean, 0.05 * std::exp(-0.25), 1e-9);
  EXPECT_GE(m.l2_mean, 0.0);
  EXPECT_LE(m.l2_mean, m.sup_mean + 1e-15);
}
