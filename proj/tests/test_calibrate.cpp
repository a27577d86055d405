#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cmmv/calibrate.hpp"
#include "cmmv/synthetic.hpp"
#include "oracles.hpp"

using namespace cmmv;

namespace {

constexpr double kT = 184.0;

// f_T = c + 17x - 0.12x^2 + 3e-4 x^3 with f_0(0) = 2100.
CmmvModel cubic_truth() {
  const IncreasingPolynomial base(0.0, {4.0, -0.03}, {1.0});
  const double shift = 2100.0 - base.terminal().gaussian_convolution(kT)(0.0);
  return CmmvModel(IncreasingPolynomial(shift, {4.0, -0.03}, {1.0}), kT);
}

OptionChain chain_at_zero(const CmmvModel& truth, std::vector<double> strikes) {
  SyntheticConfig cfg;
  cfg.strikes = std::move(strikes);
  cfg.n_dates = 1;
  const auto m = synthesize_market(truth, cfg);
  return build_chain(m.rows, cfg.start, m.expiry);
}

M2Dataset m2_world(const CmmvModel& truth, std::size_t n, double strike = 2100.0,
                   double noise = 0.0, std::uint64_t seed = 3) {
  SyntheticConfig cfg;
  cfg.n_dates = n;
  cfg.seed = seed;
  const auto m = synthesize_market(truth, cfg);
  CounterRng rng(seed, 9);
  M2Dataset d{{}, {}, {}, strike, truth.horizon()};
  for (std::size_t i = 0; i < n; ++i) {
    d.times.push_back(static_cast<double>(i));
    d.stock.push_back(m.forward[i]);
    const double c = call_price(truth, static_cast<double>(i), m.brownian[i], strike);
    d.option.push_back(c * (1.0 + noise * rng.normal()));
  }
  return d;
}

double rel_coeff_error(const Polynomial& got, const Polynomial& want) {
  double worst = 0.0;
  for (std::size_t k = 0; k < want.coeffs().size(); ++k) {
    const double g = k < got.coeffs().size() ? got.coeffs()[k] : 0.0;
    worst = std::max(worst, std::abs(g - want.coeffs()[k]) / std::abs(want.coeffs()[k]));
  }
  for (std::size_t k = want.coeffs().size(); k < got.coeffs().size(); ++k) {
    worst = std::max(worst, std::abs(got.coeffs()[k]));
  }
  return worst;
}

void expect_increasing_on_range(const CmmvModel& m) {
  const Polynomial d = m.terminal().terminal().derivative();
  const double r = 8.0 * std::sqrt(m.horizon());
  for (int i = 0; i <= 400; ++i) EXPECT_GT(d(-r + 2.0 * r * i / 400.0), 0.0);
}

}  // namespace

TEST(M1Slopes, MatchAnalyticDistribution) {
  const auto truth = cubic_truth();
  const auto chain = chain_at_zero(truth, strike_grid(1200, 2600, 57));
  const auto est = m1_slopes(chain);
  ASSERT_EQ(est.slopes.size(), 57u);
  for (std::size_t i = 0; i < est.slopes.size(); ++i) {
    const double want = oracle::cdf(truth.invert(kT, est.strikes[i]) / std::sqrt(kT)) - 1.0;
    EXPECT_NEAR(est.slopes[i], want, 2e-3) << est.strikes[i];
  }
}

TEST(M1Slopes, AffineSegmentIsExact) {
  const std::vector<double> k{100, 103, 110, 111, 120, 135, 136, 150};
  std::vector<double> c;
  for (double s : k) c.push_back(80.0 - 0.37 * s);
  const auto est = m1_slopes(k, c);
  for (double s : est.slopes) EXPECT_NEAR(s, -0.37, 1e-12);
  EXPECT_EQ(est.clamped, 0u);
}

TEST(M1Slopes, DeepInTheMoneyIsClamped) {
  std::vector<double> k, c;
  for (int i = 0; i < 10; ++i) {
    k.push_back(10.0 + 5.0 * i);
    c.push_back(100.0 - k.back());
  }
  const auto est = m1_slopes(k, c);
  EXPECT_GT(est.clamped, 0u);
  for (double s : est.slopes) {
    EXPECT_GE(s, kSlopeFloor);
    EXPECT_LE(s, kSlopeCeil);
  }
  EXPECT_EQ(m1_xi(est, kT).dropped, est.slopes.size());
}

TEST(M1Slopes, MonotonizedCdf) {
  const std::vector<double> k{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> c{5.0, 4.2, 3.5, 2.6, 2.0, 1.2, 0.9, 0.6};
  const auto est = m1_slopes(k, c);
  for (std::size_t i = 1; i < est.slopes.size(); ++i) EXPECT_GE(est.slopes[i], est.slopes[i - 1]);
  EXPECT_GT(est.monotonized, 0u);
}

TEST(M1Slopes, TooFewStrikes) {
  const std::vector<double> k{1, 2}, c{1, 0.5};
  try {
    m1_slopes(k, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_data);
  }
}

TEST(M1Xi, Examples) {
  const SlopeEstimate med{{2100.0}, {-0.5}};
  EXPECT_EQ(m1_xi(med, 184.0).points.at(0).xi, 0.0);
  const SlopeEstimate one{{1.0}, {oracle::cdf(1.0) - 1.0}};
  EXPECT_NEAR(m1_xi(one, 1.0).points.at(0).xi, 1.0, 1e-9);
  const SlopeEstimate bounds{{1.0, 2.0, 3.0}, {-1.0, -0.5, 0.0}};
  const auto q = m1_xi(bounds, 1.0);
  EXPECT_EQ(q.points.size(), 1u);
  EXPECT_EQ(q.dropped, 2u);
}

TEST(M1Xi, PointsLieOnTheTrueGraph) {
  const auto truth = cubic_truth();
  const auto chain = chain_at_zero(truth, strike_grid(1200, 2600, 96));
  const auto q = m1_xi(m1_slopes(chain), kT);
  EXPECT_GT(q.points.size(), 90u);
  for (std::size_t i = 0; i < q.points.size(); ++i) {
    const auto& p = q.points[i];
    EXPECT_NEAR(p.xi, truth.invert(kT, p.strike), 2e-2 * std::sqrt(kT));
    if (i > 0) {
      EXPECT_GE(p.xi, q.points[i - 1].xi);
    }
  }
}

TEST(M1Fit, ExactCubicPoints) {
  std::vector<QuantilePoint> pts;
  for (int i = 0; i <= 40; ++i) {
    const double x = -2.5 + 0.125 * i;
    pts.push_back({x, x * x * x / 3.0 + x, 1.0});
  }
  const auto fit = m1_fit(pts, 3, 1.0);
  const auto& c = fit.model.terminal().terminal().coeffs();
  ASSERT_EQ(c.size(), 4u);
  EXPECT_NEAR(c[0], 0.0, 1e-3);
  EXPECT_NEAR(c[1], 1.0, 1e-3);
  EXPECT_NEAR(c[2], 0.0, 1e-3);
  EXPECT_NEAR(c[3] * 3.0, 1.0, 1e-3);
  EXPECT_LT(fit.rms, 1e-6);
  EXPECT_EQ(fit.residuals.size(), pts.size());
}

TEST(M1Fit, AffinePointsDegenerateGracefully) {
  std::vector<QuantilePoint> pts;
  for (int i = 0; i <= 40; ++i) {
    const double x = (-2.5 + 0.125 * i) * std::sqrt(kT);
    pts.push_back({x, 2100.0 + 16.0 * x, 1.0});
  }
  const auto fit = m1_fit(pts, 3, kT);
  const auto& c = fit.model.terminal().terminal().coeffs();
  EXPECT_NEAR(c[0], 2100.0, 1e-6 * 2100.0);
  EXPECT_NEAR(c[1], 16.0, 1e-6 * 16.0);
  EXPECT_LT(std::abs(c[2]), 1e-6);
  EXPECT_LT(std::abs(c[3]), 1e-6);
}

TEST(M1Fit, ChainRoundTripAndMonotone) {
  const auto truth = cubic_truth();
  const auto fit = m1_calibrate(chain_at_zero(truth, strike_grid(1200, 2600, 96)), 3);
  EXPECT_LT(rel_coeff_error(fit.model.terminal().terminal(), truth.terminal().terminal()), 1e-2);
  expect_increasing_on_range(fit.model);
}

TEST(M1Fit, AnchorFixesTheSpot) {
  const auto truth = cubic_truth();
  FitOptions opt;
  opt.anchor_spot = 2150.0;
  const auto fit = m1_calibrate(chain_at_zero(truth, strike_grid(1200, 2600, 96)), 3, opt);
  EXPECT_NEAR(fit.model.eval(0.0, 0.0), 2150.0, 1e-9);
}

TEST(M1Fit, Preconditions) {
  std::vector<QuantilePoint> pts{{-1, 1, 1}, {0, 2, 1}, {1, 3, 1}, {2, 4, 1}};
  EXPECT_THROW(m1_fit(pts, 2, 1.0), Error);
  EXPECT_THROW(m1_fit(pts, 3, 1.0), Error);
  FitOptions opt;
  opt.max_rms = 1e-30;
  std::vector<QuantilePoint> noisy{{-1, 1, 1}, {0, 2.5, 1}, {1, 2.6, 1}, {2, 4, 1}};
  EXPECT_THROW(m1_fit(noisy, 1, 1.0, opt), Error);
}

TEST(NormalizedMapTest, AnchorHoldsForAnyParameters) {
  NormalizedMap map;
  map.n = 2;
  map.scale = 10.0;
  map.slope = 3.0;
  map.offset = 50.0;
  map.horizon = 100.0;
  map.anchor_value = 77.0;
  map.anchor_time = 12.0;
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector v(static_cast<Eigen::Index>(map.dimension()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
    const CmmvModel m(map.decode(v), 100.0);
    EXPECT_NEAR(m.eval(12.0, 0.0), 77.0, 1e-9 * (1.0 + std::abs(m.terminal().constant())));
  }
}

TEST(M2Objective, ZeroAtTruth) {
  const auto truth = cubic_truth();
  const auto data = m2_world(truth, 44);
  EXPECT_LT(m2_objective(truth.terminal(), data), 1e-12);
  const auto& f = truth.terminal();
  EXPECT_EQ(m2_objective(f.constant(), f.p_coeffs(), f.q_coeffs(), data),
            m2_objective(f, data));
}

TEST(M2Objective, ConstantCandidateIsInfinite) {
  const auto data = m2_world(cubic_truth(), 44);
  EXPECT_EQ(m2_objective(2100.0, {0.0}, {0.0}, data), std::numeric_limits<double>::infinity());
  EXPECT_EQ(m2_objective(2100.0, {}, {}, data), std::numeric_limits<double>::infinity());
}

TEST(M2Objective, ShiftedConstantIsWorse) {
  const auto truth = cubic_truth();
  const auto data = m2_world(truth, 44);
  const auto& f = truth.terminal();
  EXPECT_GT(m2_objective(f.constant() + 1.0, f.p_coeffs(), f.q_coeffs(), data),
            m2_objective(f, data));
}

TEST(M2Objective, InvariantUnderReordering) {
  const auto truth = cubic_truth();
  const auto data = m2_world(truth, 44, 2050.0, 1e-3);
  M2Dataset rev = data;
  std::reverse(rev.times.begin(), rev.times.end());
  std::reverse(rev.stock.begin(), rev.stock.end());
  std::reverse(rev.option.begin(), rev.option.end());
  const IncreasingPolynomial g(2090.0, {3.8, -0.02}, {1.1});
  EXPECT_NEAR(m2_objective(g, rev), m2_objective(g, data), 1e-12 * m2_objective(g, data));
}

TEST(M2Calibrate, NoiselessRoundTrip) {
  const auto truth = cubic_truth();
  const auto fit = m2_calibrate(m2_world(truth, 44), 3);
  EXPECT_LT(rel_coeff_error(fit.model.terminal().terminal(), truth.terminal().terminal()), 1e-2);
  EXPECT_EQ(fit.residuals.size(), 44u);
  EXPECT_EQ(fit.terminations.size(), 3u);
  EXPECT_LE(fit.evaluations, 50'000u);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) {
    EXPECT_LE(fit.trace[i].best_value, fit.trace[i - 1].best_value);
  }
  expect_increasing_on_range(fit.model);
}

TEST(M2Calibrate, NoisyPricesPredictWithinNoiseScale) {
  const auto truth = cubic_truth();
  const double noise = 5e-4;
  const auto noisy = m2_world(truth, 184, 2100.0, noise);
  const auto clean = m2_world(truth, 184, 2100.0);
  const auto fit = m2_calibrate(noisy.subset(0, 44), 3);
  double scale = 0.0;
  for (std::size_t i = 0; i < 44; ++i) scale += std::pow(noise * clean.option[i], 2);
  scale = std::sqrt(scale / 44.0);
  const auto test = clean.subset(44, clean.size());
  const double rmse = std::sqrt(m2_objective(fit.model.terminal(), test) /
                                static_cast<double>(test.size()));
  EXPECT_LT(rmse, 2.0 * scale);
}

TEST(M2Calibrate, AffineTruthCubicFit) {
  const CmmvModel truth(IncreasingPolynomial(2100.0, {4.0}, {}), kT);
  const auto fit = m2_calibrate(m2_world(truth, 44), 3);
  const auto& c = fit.model.terminal().terminal().coeffs();
  EXPECT_LT(std::abs(c[2]), 1e-4);
  EXPECT_LT(std::abs(c[3]), 1e-4);
  EXPECT_NEAR(c[1], 16.0, 1e-3);
}

TEST(M2Calibrate, Preconditions) {
  const auto data = m2_world(cubic_truth(), 44);
  EXPECT_THROW(m2_calibrate(data.subset(0, 9), 3), Error);
  EXPECT_THROW(m2_calibrate(data, 4), Error);
  M2Dataset bad = data;
  bad.times[5] = bad.times[4];
  EXPECT_THROW(m2_calibrate(bad, 3), Error);
}

TEST(SelectDegree, M1CubicTruthPicksThree) {
  const auto truth = cubic_truth();
  const auto q = m1_xi(m1_slopes(chain_at_zero(truth, strike_grid(1200, 2600, 96))), kT);
  const auto sel = select_degree_m1(q.points, kT);
  EXPECT_EQ(sel.degree, 3);
  EXPECT_EQ(sel.scores.size(), 4u);
}

TEST(SelectDegree, M1NoisyAffinePicksOne) {
  CounterRng rng(2, 0);
  std::vector<QuantilePoint> pts;
  for (int i = 0; i <= 60; ++i) {
    const double x = (-2.5 + 5.0 * i / 60.0) * std::sqrt(kT);
    pts.push_back({x, 2100.0 + 16.0 * x + 2.0 * rng.normal(), 1.0});
  }
  EXPECT_EQ(select_degree_m1(pts, kT).degree, 1);
}

TEST(SelectDegree, TiesGoToTheLowerDegree) {
  const auto sel = detail::pick_degree({{1, 1.0, {}}, {3, 0.99, {}}, {5, 0.5, "boom"}}, "s");
  EXPECT_EQ(sel.degree, 1);
  const auto sel2 = detail::pick_degree({{1, 1.0, {}}, {3, 0.5, {}}, {5, 0.49, {}}}, "s");
  EXPECT_EQ(sel2.degree, 3);
  EXPECT_THROW(detail::pick_degree({{1, 1.0, "x"}}, "s"), Error);
}

TEST(SelectDegree, M2ChronologicalSplitCubicTruth) {
  const auto truth = cubic_truth();
  const auto sel = select_degree_m2(m2_world(truth, 60), {1, 3});
  EXPECT_EQ(sel.degree, 3);
}
