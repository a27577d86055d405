#ifndef CMMV_CALIBRATE_HPP
#define CMMV_CALIBRATE_HPP

// Recovery of the terminal map f_T.
//   M1: one chain -> slopes dC/dK -> terminal CDF -> quantile points
//       (xi_K, K) -> increasing polynomial through them.
//   M2: spot and one option through time -> CMA-ES on the squared option
//       pricing error, solving f_t(x_t) = S_t for the Brownian state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmmv/cmaes.hpp"
#include "cmmv/core.hpp"
#include "cmmv/error.hpp"
#include "cmmv/marketdata.hpp"
#include "cmmv/normal.hpp"
#include "cmmv/pricing.hpp"
#include "cmmv/rng.hpp"

namespace cmmv {

inline constexpr double kSlopeFloor = -1.0 + 1e-9;
inline constexpr double kSlopeCeil = -1e-9;

struct SlopeEstimate {
  std::vector<double> strikes;
  std::vector<double> slopes;
  std::size_t clamped = 0;
  std::size_t monotonized = 0;
};

/// Weights w_j with sum_j w_j y_j = p'(nodes[at]) for the interpolating
/// polynomial p through (nodes, y).
inline std::vector<double> derivative_weights(std::span<const double> nodes, std::size_t at) {
  const std::size_t n = nodes.size();
  const double z = nodes[at];
  std::vector<double> w(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == at) {
      for (std::size_t m = 0; m < n; ++m)
        if (m != at) w[j] += 1.0 / (z - nodes[m]);
      continue;
    }
    double num = 1.0, den = 1.0;
    for (std::size_t m = 0; m < n; ++m) {
      if (m == j) continue;
      den *= nodes[j] - nodes[m];
      if (m != at) num *= z - nodes[m];
    }
    w[j] = num / den;
  }
  return w;
}

/// Points in each difference stencil: centered in the interior, one-sided at
/// the ends of the strike grid.
inline constexpr std::size_t kSlopeStencil = 5;

/// dC/dK by differentiating the local interpolant of the quotes, clamped into
/// (-1, 0) and made nondecreasing by a running max.
inline SlopeEstimate m1_slopes(std::span<const double> strikes, std::span<const double> calls) {
  const std::size_t n = strikes.size();
  if (n < 3 || calls.size() != n) {
    throw Error(ErrorKind::insufficient_data, "slopes need at least 3 strikes");
  }
  SlopeEstimate out;
  out.strikes.assign(strikes.begin(), strikes.end());
  out.slopes.resize(n);
  const std::size_t width = std::min(kSlopeStencil, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t first = std::min(i > width / 2 ? i - width / 2 : 0, n - width);
    const auto w = derivative_weights(strikes.subspan(first, width), i - first);
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += w[j] * calls[first + j];
    if (s < kSlopeFloor || s > kSlopeCeil) {
      s = std::clamp(s, kSlopeFloor, kSlopeCeil);
      ++out.clamped;
    }
    if (i > 0 && s < out.slopes[i - 1]) {
      s = out.slopes[i - 1];
      ++out.monotonized;
    }
    out.slopes[i] = s;
  }
  return out;
}

inline SlopeEstimate m1_slopes(const OptionChain& chain) {
  return m1_slopes(chain.strikes, chain.forward_calls);
}

struct QuantilePoint {
  double xi = 0.0;
  double strike = 0.0;
  double weight = 1.0;
};

struct QuantilePoints {
  std::vector<QuantilePoint> points;
  std::size_t dropped = 0;
};

/// xi_K = sqrt(T) Phi^{-1}(1 + dC/dK); weight = mean adjacent strike gap.
inline QuantilePoints m1_xi(const SlopeEstimate& slopes, double horizon) {
  QuantilePoints out;
  const std::size_t n = slopes.strikes.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = slopes.slopes[i];
    if (!(s > kSlopeFloor && s < kSlopeCeil)) {
      ++out.dropped;
      continue;
    }
    const double left = i > 0 ? slopes.strikes[i] - slopes.strikes[i - 1] : 0.0;
    const double right = i + 1 < n ? slopes.strikes[i + 1] - slopes.strikes[i] : 0.0;
    const double gaps = (i > 0) + (i + 1 < n);
    out.points.push_back({std::sqrt(horizon) * norm_quantile(1.0 + s), slopes.strikes[i],
                          gaps > 0 ? (left + right) / gaps : 1.0});
  }
  return out;
}

/// f(x) = offset + slope * scale * g(x / scale) with g' = Pn^2 + Qn^2, so the
/// search runs on O(1) coefficients and the identity g(u) = u is the affine
/// seed. With an anchor, the constant is not searched but set so that
/// f_{anchor_time}(0) = anchor_value.
struct NormalizedMap {
  std::size_t n = 1;  // deg P
  double scale = 1.0;
  double offset = 0.0;
  double slope = 1.0;
  double horizon = 1.0;
  std::optional<double> anchor_value;
  double anchor_time = 0.0;

  std::size_t dimension() const { return 2 * n + (anchor_value ? 1 : 2); }

  /// g' = 1 carried by the constant of P, or of Q when in_q and Q exists.
  Vector seed(bool in_q = false) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dimension()));
    v(static_cast<Eigen::Index>((anchor_value ? 0 : 1) + (in_q && n > 0 ? n + 1 : 0))) = 1.0;
    return v;
  }

  IncreasingPolynomial decode(const Vector& v) const {
    const std::size_t base = anchor_value ? 0 : 1;
    const double root = std::sqrt(slope);
    std::vector<double> p(n + 1), q(n);
    double pw = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      p[k] = root * v(static_cast<Eigen::Index>(base + k)) / pw;
      if (k < n) q[k] = root * v(static_cast<Eigen::Index>(base + n + 1 + k)) / pw;
      pw *= scale;
    }
    const double constant = offset + (anchor_value ? 0.0 : slope * scale * v(0));
    IncreasingPolynomial f(constant, std::move(p), std::move(q));
    if (!anchor_value) return f;
    const double at_origin =
        f.terminal().gaussian_convolution(horizon - anchor_time)(0.0);
    return IncreasingPolynomial(constant + (*anchor_value - at_origin), f.p_coeffs(), f.q_coeffs());
  }
};

struct FitOptions {
  std::uint64_t seed = 1;
  std::optional<double> anchor_spot;  // f_0(0) for M1, f_{t_0}(0) default S_0 for M2
  double max_rms = std::numeric_limits<double>::infinity();
  std::size_t max_evaluations = 20'000;
  std::size_t restarts = 2;
  double sigma0 = 0.3;
};

struct FitResult {
  CmmvModel model;
  double objective = 0.0;
  double rms = 0.0;
  std::size_t evaluations = 0;
  std::vector<Termination> terminations;
  std::vector<GenerationRecord> trace;  // best-ever across restarts
  std::vector<double> residuals;
};

namespace detail {

/// CMA-ES with restarts alternating the two affine seeds, perturbed from the
/// third restart on; budget shared evenly.
template <class Loss>
std::pair<Vector, CmaEsResult> run_restarts(const NormalizedMap& map, const Loss& loss,
                                            const FitOptions& opt, FitResult* report) {
  const std::size_t restarts = std::max<std::size_t>(opt.restarts, 1);
  const Objective objective = [&](const Vector& v) {
    try {
      return loss(map.decode(v));
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  Vector best;
  CmaEsResult best_run;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Vector x0 = map.seed(r % 2 == 1);
    if (r > 1) {
      CounterRng rng(opt.seed, 0xC0FFEEull + r);
      for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) += 0.1 * rng.normal();
    }
    auto config = CmaEsConfig::defaults(map.dimension(), opt.sigma0, opt.seed + 7919 * r);
    config.max_evaluations = opt.max_evaluations / restarts;
    CmaEsResult run = minimize(objective, x0, config);
    report->terminations.push_back(run.termination);
    for (auto rec : run.history) {
      rec.evaluations += report->evaluations;
      rec.best_value = std::min(rec.best_value, best_value);
      report->trace.push_back(std::move(rec));
    }
    report->evaluations += run.evaluations;
    if (run.best_value < best_value) {
      best_value = run.best_value;
      best = run.best_point;
      best_run = std::move(run);
    }
  }
  if (!std::isfinite(best_value)) {
    throw Error(ErrorKind::fit_failed, "no restart produced a finite objective");
  }
  return {best, best_run};
}

}  // namespace detail

/// Weighted mean squared error of f(xi) - K.
inline double m1_loss(const Polynomial& f, std::span<const QuantilePoint> pts) {
  double acc = 0.0, wsum = 0.0;
  for (const auto& p : pts) {
    const double r = f(p.xi) - p.strike;
    acc += p.weight * r * r;
    wsum += p.weight;
  }
  return acc / wsum;
}

inline FitResult m1_fit(std::span<const QuantilePoint> pts, int degree, double horizon,
                        const FitOptions& opt = {}) {
  if (degree < 1 || degree % 2 == 0) {
    throw Error(ErrorKind::invalid_parameterization, "degree must be odd and positive");
  }
  if (pts.size() < static_cast<std::size_t>(degree) + 2) {
    throw Error(ErrorKind::insufficient_data, "M1 fit needs at least degree + 2 points");
  }
  // Weighted least-squares line K = b + a xi for the affine seed.
  double w = 0.0, mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    w += p.weight;
    mx += p.weight * p.xi;
    my += p.weight * p.strike;
  }
  mx /= w;
  my /= w;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += p.weight * (p.xi - mx) * (p.xi - mx);
    sxy += p.weight * (p.xi - mx) * (p.strike - my);
  }
  const double a = sxx > 0.0 ? sxy / sxx : 0.0;
  if (!(a > 0.0)) throw Error(ErrorKind::fit_failed, "quantile points are not increasing");

  NormalizedMap map;
  map.n = static_cast<std::size_t>(degree - 1) / 2;
  map.scale = std::sqrt(horizon);
  map.slope = a;
  map.offset = my - a * mx;
  map.horizon = horizon;
  map.anchor_value = opt.anchor_spot;
  const auto loss = [&](const IncreasingPolynomial& f) { return m1_loss(f.terminal(), pts); };

  FitResult result{CmmvModel(IncreasingPolynomial(map.offset, {std::sqrt(a)}, {}), horizon), 0.0, 0.0, 0, {}, {}, {}};
  const auto [best, run] = detail::run_restarts(map, loss, opt, &result);
  result.model = CmmvModel(map.decode(best), horizon);
  result.objective = run.best_value;
  result.rms = std::sqrt(run.best_value);
  for (const auto& p : pts) result.residuals.push_back(result.model.terminal()(p.xi) - p.strike);
  if (!(result.rms <= opt.max_rms)) {
    throw Error(ErrorKind::fit_failed, "M1 residual RMS " + std::to_string(result.rms) +
                                           " above " + std::to_string(opt.max_rms) + " after " +
                                           std::to_string(result.evaluations) + " evaluations");
  }
  return result;
}

/// Chain -> slopes -> quantile points -> fit.
inline FitResult m1_calibrate(const OptionChain& chain, int degree, const FitOptions& opt = {}) {
  const auto points = m1_xi(m1_slopes(chain), chain.days_to_expiry);
  return m1_fit(points.points, degree, chain.days_to_expiry, opt);
}

struct M2Dataset {
  std::vector<double> times;   // days since the first observation
  std::vector<double> stock;   // S_t in forward-value units
  std::vector<double> option;  // C_t in forward-value units
  double strike = 0.0;
  double horizon = 0.0;

  std::size_t size() const { return times.size(); }

  void validate() const {
    const std::size_t n = times.size();
    if (stock.size() != n || option.size() != n) {
      throw Error(ErrorKind::insufficient_data, "M2 series differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if ((i > 0 && !(times[i] > times[i - 1])) || !(times[i] < horizon)) {
        throw Error(ErrorKind::insufficient_data, "M2 times must increase and stay below T");
      }
    }
  }

  M2Dataset subset(std::size_t first, std::size_t last) const {
    M2Dataset d{{times.begin() + first, times.begin() + last},
                {stock.begin() + first, stock.begin() + last},
                {option.begin() + first, option.begin() + last}, strike, horizon};
    return d;
  }
};

/// Squared pricing error of the candidate on every observation, or +inf if
/// some spot cannot be inverted.
inline std::vector<double> m2_residuals(const IncreasingPolynomial& f, const M2Dataset& data) {
  std::vector<double> out(data.size());
  const Polynomial& terminal = f.terminal();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double remaining = data.horizon - data.times[i];
    const double x = invert_increasing(terminal.gaussian_convolution(remaining), data.stock[i]);
    out[i] = expected_call(terminal, x, std::sqrt(remaining), data.strike) - data.option[i];
  }
  return out;
}

inline double m2_objective(const IncreasingPolynomial& f, const M2Dataset& data) {
  try {
    double acc = 0.0;
    for (double r : m2_residuals(f, data)) acc += r * r;
    return std::isfinite(acc) ? acc : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline double m2_objective(double constant, std::vector<double> p, std::vector<double> q,
                           const M2Dataset& data) {
  try {
    return m2_objective(IncreasingPolynomial(constant, std::move(p), std::move(q)), data);
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline FitOptions m2_default_options() {
  FitOptions o;
  o.restarts = 3;
  o.max_evaluations = 50'000;
  return o;
}

inline FitResult m2_calibrate(const M2Dataset& data, int degree,
                              const FitOptions& opt = m2_default_options()) {
  data.validate();
  if (data.size() < 10) throw Error(ErrorKind::insufficient_data, "M2 needs 10 observations");
  if (degree < 1 || degree % 2 == 0) {
    throw Error(ErrorKind::invalid_parameterization, "degree must be odd and positive");
  }
  // Affine seed: Bachelier with the realized absolute volatility of S.
  double qv = 0.0;
  for (std::size_t i = 1; i < data.size(); ++i) {
    qv += (data.stock[i] - data.stock[i - 1]) * (data.stock[i] - data.stock[i - 1]);
  }
  const double vol = std::sqrt(qv / (data.times.back() - data.times.front()));
  if (!(vol > 0.0)) throw Error(ErrorKind::fit_failed, "underlying series is constant");

  NormalizedMap map;
  map.n = static_cast<std::size_t>(degree - 1) / 2;
  map.scale = std::sqrt(data.horizon);
  map.slope = vol;
  map.offset = data.stock.front();
  map.horizon = data.horizon;
  map.anchor_value = opt.anchor_spot.value_or(data.stock.front());
  map.anchor_time = data.times.front();
  const auto loss = [&](const IncreasingPolynomial& f) { return m2_objective(f, data); };

  FitResult result{CmmvModel(IncreasingPolynomial(map.offset, {std::sqrt(vol)}, {}), data.horizon), 0.0, 0.0, 0, {}, {}, {}};
  const auto [best, run] = detail::run_restarts(map, loss, opt, &result);
  result.model = CmmvModel(map.decode(best), data.horizon);
  result.objective = run.best_value;
  result.rms = std::sqrt(run.best_value / static_cast<double>(data.size()));
  result.residuals = m2_residuals(result.model.terminal(), data);
  bool all_stalled = true;
  for (auto t : result.terminations) all_stalled = all_stalled && t == Termination::stalled;
  if (!(result.rms <= opt.max_rms) || (all_stalled && !std::isfinite(result.objective))) {
    throw Error(ErrorKind::fit_failed,
                "M2 RMS " + std::to_string(result.rms) + " after " +
                    std::to_string(result.evaluations) + " evaluations");
  }
  return result;
}

struct DegreeScore {
  int degree = 0;
  double test_error = std::numeric_limits<double>::infinity();
  std::string failure;
};

struct DegreeSelection {
  int degree = 0;
  std::vector<DegreeScore> scores;
  std::string split;
};

/// A larger degree must beat the best smaller one by more than this
/// relative margin; anything closer counts as a tie.
inline constexpr double kDegreeTieTolerance = 0.05;

/// Test-error improvements below this relative RMS of the data scale are ties.
inline constexpr double kDegreeErrorFloor = 1e-6;

namespace detail {

inline DegreeSelection pick_degree(std::vector<DegreeScore> scores, std::string split,
                                   double scale = 0.0) {
  DegreeSelection sel{0, std::move(scores), std::move(split)};
  const double floor = (kDegreeErrorFloor * scale) * (kDegreeErrorFloor * scale);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : sel.scores) {
    if (s.failure.empty() && s.test_error < best * (1.0 - kDegreeTieTolerance) &&
        !(best - s.test_error <= floor)) {
      best = s.test_error;
      sel.degree = s.degree;
    }
  }
  if (sel.degree == 0) throw Error(ErrorKind::fit_failed, "every candidate degree failed");
  return sel;
}

}  // namespace detail

/// Random 70/30 split of quantile points (fixed seed); test error is the
/// weighted mean squared strike error.
inline DegreeSelection select_degree_m1(std::span<const QuantilePoint> pts, double horizon,
                                        std::vector<int> degrees = {1, 3, 5, 7},
                                        const FitOptions& opt = {}) {
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(opt.seed, 0x5EED);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i))]);
  }
  const std::size_t n_test = static_cast<std::size_t>(std::round(0.3 * static_cast<double>(pts.size())));
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<QuantilePoint> train, test;
  for (auto i : train_idx) train.push_back(pts[i]);
  for (auto i : test_idx) test.push_back(pts[i]);

  std::vector<DegreeScore> scores;
  for (int d : degrees) {
    DegreeScore s{d, std::numeric_limits<double>::infinity(), {}};
    try {
      const auto fit = m1_fit(train, d, horizon, opt);
      s.test_error = m1_loss(fit.model.terminal().terminal(), test);
    } catch (const Error& e) {
      s.failure = e.what();
    }
    scores.push_back(std::move(s));
  }
  double scale = 0.0;
  for (const auto& p : pts) scale += std::abs(p.strike) / static_cast<double>(pts.size());
  return detail::pick_degree(std::move(scores),
                             "random 70/30 strike split, seed " + std::to_string(opt.seed), scale);
}

/// Chronological split: the earliest `train_fraction` of observations train,
/// the rest test.
inline DegreeSelection select_degree_m2(const M2Dataset& data, std::vector<int> degrees = {1, 3, 5, 7},
                                        double train_fraction = 0.3,
                                        const FitOptions& opt = m2_default_options()) {
  const auto n_train =
      static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(data.size())));
  const M2Dataset train = data.subset(0, n_train);
  const M2Dataset test = data.subset(n_train, data.size());
  std::vector<DegreeScore> scores;
  for (int d : degrees) {
    DegreeScore s{d, std::numeric_limits<double>::infinity(), {}};
    try {
      if (n_train < static_cast<std::size_t>(d) + 2) {
        throw Error(ErrorKind::insufficient_data, "training window too short");
      }
      FitOptions o = opt;
      o.anchor_spot = data.stock.front();
      const auto fit = m2_calibrate(train, d, o);
      s.test_error = m2_objective(fit.model.terminal(), test) / static_cast<double>(test.size());
    } catch (const Error& e) {
      s.failure = e.what();
    }
    scores.push_back(std::move(s));
  }
  double scale = 0.0;
  for (double c : data.option) scale += std::abs(c) / static_cast<double>(data.size());
  return detail::pick_degree(std::move(scores),
                             "chronological, first " + std::to_string(n_train) +
                                 " observations train",
                             scale);
}

}  // namespace cmmv

#endif  // CMMV_CALIBRATE_HPP
