#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "cmmv/simulate.hpp"

using namespace cmmv;

namespace {

CmmvModel bachelier(double a, double b, double horizon) {
  return CmmvModel(IncreasingPolynomial(b, {std::sqrt(a)}, {}), horizon);
}

// f_T = x^3 + x
CmmvModel cubic(double horizon) {
  return CmmvModel(IncreasingPolynomial(0.0, {0.0, std::sqrt(3.0)}, {1.0}), horizon);
}

// Index-scale cubic, f_T' = (4 - 0.03x)^2 + 1.
CmmvModel index_cubic() { return CmmvModel(IncreasingPolynomial(2100.0, {4.0, -0.03}, {1.0}), 184.0); }

double rms_relative(const std::vector<double>& got, const std::vector<double>& want,
                    std::size_t lo, std::size_t hi) {
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += std::pow(got[i] / want[i] - 1.0, 2);
  return std::sqrt(acc / static_cast<double>(hi - lo));
}

}  // namespace

TEST(SimulatePaths, BachelierIncrementsAreGaussian) {
  const double a = 2.0;
  const auto path = simulate_paths(bachelier(a, 100.0, 100.0), 10'000, 99.0, 1, 4).at(0);
  EXPECT_EQ(path.brownian.front(), 0.0);
  EXPECT_EQ(path.price.front(), 100.0);
  double chi2 = 0.0;
  for (std::size_t i = 1; i < path.price.size(); ++i) {
    const double z = (path.price[i] - path.price[i - 1]) / (a * std::sqrt(path.dt));
    chi2 += z * z;
  }
  const double n = 10'000.0;
  EXPECT_LT(std::abs(chi2 - n), 2.576 * std::sqrt(2.0 * n));
}

TEST(SimulatePaths, SingleStep) {
  const auto m = cubic(10.0);
  const auto path = simulate_paths(m, 1, 4.0, 1, 9).at(0);
  ASSERT_EQ(path.price.size(), 2u);
  EXPECT_NEAR(path.price[0], m.eval(0.0, 0.0), 1e-12);
  EXPECT_NEAR(path.price[1], m.eval(4.0, path.brownian[1]), 1e-10);
  EXPECT_DOUBLE_EQ(path.time(1), 4.0);
}

TEST(SimulatePaths, Martingale) {
  const auto m = cubic(10.0);
  const auto paths = simulate_paths(m, 4, 8.0, 10'000, 21);
  double mean = 0.0, sq = 0.0;
  for (const auto& p : paths) {
    mean += p.price.back();
    sq += p.price.back() * p.price.back();
  }
  mean /= 1e4;
  const double se = std::sqrt((sq / 1e4 - mean * mean) / 1e4);
  EXPECT_LT(std::abs(mean - m.eval(0.0, 0.0)), 3.0 * se);
}

TEST(SimulatePaths, ReproducibleAndIndependent) {
  const auto m = cubic(10.0);
  const auto a = simulate_paths(m, 50, 5.0, 3, 8);
  const auto b = simulate_paths(m, 50, 5.0, 3, 8);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].price, b[i].price);
  EXPECT_NE(a[0].brownian, a[1].brownian);
  EXPECT_THROW(simulate_paths(m, 50, 10.0, 1, 8), Error);
}

TEST(QuadraticVariation, SmoothPathVanishes) {
  for (std::size_t m : {10u, 100u, 1000u}) {
    std::vector<double> x(m + 1);
    for (std::size_t i = 0; i <= m; ++i) x[i] = static_cast<double>(i) / static_cast<double>(m);
    EXPECT_NEAR(quadratic_variation(x).back(), 1.0 / static_cast<double>(m), 1e-12);
  }
  EXPECT_THROW(quadratic_variation(std::vector<double>{1.0}), Error);
}

TEST(QuadraticVariation, BrownianAndScaling) {
  const auto b = simulate_paths(bachelier(1.0, 0.0, 101.0), 100'000, 100.0, 1, 5).at(0);
  const double qv_b = quadratic_variation(b.brownian).back();
  EXPECT_NEAR(qv_b, 100.0, 5.0);
  const auto s = simulate_paths(bachelier(3.0, 50.0, 101.0), 100'000, 100.0, 1, 5).at(0);
  EXPECT_NEAR(quadratic_variation(s.price).back(), 9.0 * qv_b, 1e-9 * qv_b);
}

TEST(QuadraticVariation, ConvergesAtHalfOrder) {
  std::vector<double> logm, logerr;
  for (std::size_t m : {1'000u, 10'000u, 100'000u}) {
    const auto paths = simulate_paths(bachelier(1.0, 0.0, 2.0), m, 1.0, 40, 77);
    double acc = 0.0;
    for (const auto& p : paths) acc += std::pow(quadratic_variation(p.brownian).back() - 1.0, 2);
    logm.push_back(std::log(static_cast<double>(m)));
    logerr.push_back(0.5 * std::log(acc / 40.0));
  }
  const double slope = (logerr[2] - logerr[0]) / (logm[2] - logm[0]);
  EXPECT_NEAR(slope, -0.5, 0.15);
}

TEST(RecoverS1, BachelierIsConstant) {
  const auto p = simulate_paths(bachelier(2.0, 10.0, 101.0), 100'000, 100.0, 1, 6).at(0);
  const auto s1 = recover_s1(p.price, p.dt, 501);
  EXPECT_EQ(s1.floored, 0u);
  const std::vector<double> two(s1.values.size(), 2.0);
  EXPECT_LT(rms_relative(s1.values, two, 10'000, 90'000), 0.05);
}

TEST(RecoverS1, CubicMatchesLocalSlope) {
  const auto m = cubic(100.0);
  const auto p = simulate_paths(m, 100'000, 99.0, 1, 7).at(0);
  const auto s1 = recover_s1(p.price, p.dt, 501);
  std::vector<double> truth(p.price.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = m.derivative(1, p.time(i), p.brownian[i]);
  EXPECT_LT(rms_relative(s1.values, truth, 10'000, 90'000), 0.05);
}

TEST(RecoverS1, ExactQvInjection) {
  const double dt = 0.01;
  std::vector<double> qv(1001);
  for (std::size_t i = 0; i < qv.size(); ++i) qv[i] = std::pow(dt * static_cast<double>(i), 2);
  const auto s1 = s1_from_qv(qv, dt, 20);
  for (std::size_t i = 10; i + 10 < qv.size(); ++i) {
    EXPECT_NEAR(s1.values[i], std::sqrt(2.0 * dt * static_cast<double>(i)), 1e-9);
  }
}

TEST(RecoverBrownian, BachelierExact) {
  const double a = 2.0;
  const auto p = simulate_paths(bachelier(a, 10.0, 101.0), 10'000, 100.0, 1, 6).at(0);
  const std::vector<double> s1(p.price.size(), a);
  const auto b = recover_brownian(p.price, s1, 7);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_NEAR(b[i], (p.price[i] - p.price[0]) / a, 1e-9);
  }
}

TEST(RecoverBrownian, CubicTracksTheDrivingPath) {
  const double t1 = 183.0;
  const auto p = simulate_paths(index_cubic(), 100'000, t1, 1, 7).at(0);
  const std::size_t w = 1001;
  const auto s1 = recover_s1(p.price, p.dt, w);
  const auto b = recover_brownian(p.price, s1.values, w / 2);
  double worst = 0.0;
  for (std::size_t i = 10'000; i < 90'000; ++i) worst = std::max(worst, std::abs(b[i] - p.brownian[i]));
  EXPECT_LT(worst, 0.05 * std::sqrt(t1));
  EXPECT_NEAR(quadratic_variation(b).back(), t1, 0.05 * t1);
}

TEST(RecoverBrownian, ConstantPrice) {
  const std::vector<double> s(500, 42.0);
  const auto s1 = recover_s1(s, 0.1, 10);
  EXPECT_EQ(s1.floored, s.size());
  for (double v : recover_brownian(s, s1.values)) EXPECT_EQ(v, 0.0);
}

TEST(RecoverSn, ExactCovariationInjection) {
  const auto p = simulate_paths(bachelier(1.0, 0.0, 50.0), 5'000, 40.0, 1, 3).at(0);
  std::vector<double> prev(p.brownian.size());
  for (std::size_t i = 0; i < prev.size(); ++i) prev[i] = 3.0 * p.brownian[i] + 5.0;
  for (double v : recover_sn(prev, p.brownian, 0, 10, 100)) EXPECT_NEAR(v, 3.0, 1e-9);
}

TEST(RecoverSn, FirstLevelAgreesWithQvRoute) {
  const auto p = simulate_paths(index_cubic(), 100'000, 183.0, 1, 11).at(0);
  const std::size_t w = 1001;
  const auto s1 = recover_s1(p.price, p.dt, w);
  const auto b = recover_brownian(p.price, s1.values, w / 2);
  const auto via_cov = recover_sn(p.price, b, 0, 1, w / 2);
  EXPECT_LT(rms_relative(via_cov, s1.values, 10'000, 90'000), 0.05);
}

TEST(RecoverPath, BachelierSecondLevelVanishes) {
  const double a = 2.0, t1 = 99.0;
  const auto p = simulate_paths(bachelier(a, 10.0, 100.0), 1'000'000, t1, 1, 1).at(0);
  const auto r = recover_path(p, 100.0);
  ASSERT_EQ(r.levels.size(), 4u);
  EXPECT_NEAR(r.derivatives[1], a, 0.05 * a);
  EXPECT_LT(std::abs(r.derivatives[2]), 0.05 * a / std::sqrt(t1));
}

TEST(RecoverPath, CubicDerivativesAtOrigin) {
  const auto m = cubic(100.0);
  const auto p = simulate_paths(m, 1'000'000, 99.0, 1, 1).at(0);
  const auto r = recover_path(p, 100.0);
  ASSERT_EQ(r.derivatives.size(), 5u);
  EXPECT_EQ(r.derivatives[0], m.eval(0.0, 0.0));
  EXPECT_NEAR(r.derivatives[1] / m.derivative(1, 0.0, 0.0), 1.0, 0.1);
  EXPECT_NEAR(r.derivatives[3] / 6.0, 1.0, 0.1);
  // Sup-norm of f_hat_T - f_T on |x| <= 2 sqrt(T) relative to the range of f_T there.
  const Polynomial fhat = r.expansion.map_at(100.0);
  const Polynomial& f = m.terminal().terminal();
  double worst = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double x = -20.0 + 0.2 * i;
    worst = std::max(worst, std::abs(fhat(x) - f(x)));
  }
  EXPECT_LT(worst, 0.1 * (f(20.0) - f(-20.0)));
}

TEST(RecoverF, ExactAndZero) {
  const auto m = CmmvModel(IncreasingPolynomial(3.0, {1.0, 0.5}, {2.0}), 30.0);
  std::vector<double> d;
  for (std::size_t k = 0; k <= 3; ++k) d.push_back(m.derivative(k, 0.0, 0.0));
  const auto e = recover_f(d, 30.0);
  const auto got = e.map_at(30.0).coeffs();
  const auto& want = m.terminal().terminal().coeffs();
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-10 * (1 + std::abs(want[k])));
  for (double t : {0.0, 7.5, 30.0})
    for (double x : {-4.0, 0.0, 2.5}) EXPECT_NEAR(e.eval(x, t), m.eval(t, x), 1e-9 * (1 + std::abs(m.eval(t, x))));
  const auto z = recover_f(std::vector<double>(5, 0.0), 30.0);
  for (double x : {-3.0, 0.0, 8.0}) EXPECT_EQ(z.eval(x, 10.0), 0.0);
}

TEST(BoxSmooth, AveragesAndTruncates) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto s = box_smooth(x, 1);
  EXPECT_DOUBLE_EQ(s[0], 1.5);
  EXPECT_DOUBLE_EQ(s[2], 3.0);
  EXPECT_DOUBLE_EQ(s[4], 4.5);
  EXPECT_EQ(box_smooth(x, 0), x);
}

TEST(PathCsv, HeaderAndStride) {
  const auto p = simulate_paths(cubic(10.0), 10, 5.0, 1, 2).at(0);
  std::ostringstream out;
  write_path_csv(out, p, 5);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,B,S");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3u);
}
