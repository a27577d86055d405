#ifndef CMMV_PRICING_HPP
#define CMMV_PRICING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cmmv/core.hpp"
#include "cmmv/error.hpp"
#include "cmmv/normal.hpp"
#include "cmmv/quadrature.hpp"
#include "cmmv/rng.hpp"

namespace cmmv {

inline constexpr std::size_t kDefaultQuadratureNodes = 64;

/// Kinks further than this many standard deviations below the mean are
/// integrated by plain Gauss-Hermite over the (then polynomial) payoff.
inline constexpr double kKinkSplitWidth = 6.0;

struct VolPoint {
  double strike = 0.0;
  double maturity_days = 0.0;
  double implied_vol = 0.0;
};

/// Integral of u^k phi(u) over (z, inf) for k = 0..n-1.
inline std::vector<double> upper_truncated_moments(double z, std::size_t n) {
  std::vector<double> m(n, 0.0);
  if (n == 0) return m;
  const double density = norm_pdf(z);
  m[0] = norm_sf(z);
  if (n > 1) m[1] = density;
  double zpow = 1.0;  // z^{k-1}
  for (std::size_t k = 2; k < n; ++k) {
    zpow *= z;
    m[k] = zpow * density + static_cast<double>(k - 1) * m[k - 2];
  }
  return m;
}

/// E[(f(x + scale Z) - strike)^+] for a nondecreasing polynomial f.
inline double expected_call(const Polynomial& f, double x, double scale, double strike,
                            std::size_t nodes = kDefaultQuadratureNodes) {
  if (scale == 0.0) return std::max(f(x) - strike, 0.0);
  const double kink = invert_increasing(f, strike);
  const double z = (kink - x) / scale;
  if (z < -kKinkSplitWidth) {
    return std::max(gauss_hermite_expectation(
                        [&](double y) { return std::max(f(y) - strike, 0.0); }, x, scale, nodes),
                    0.0);
  }
  // Above the kink the payoff is the polynomial f(x + scale u) - strike.
  Polynomial branch = f.taylor_at(x, scale);
  const std::vector<double> m = upper_truncated_moments(z, branch.size());
  double price = -strike * m[0];
  for (std::size_t j = 0; j < branch.size(); ++j) price += branch[j] * m[j];
  return std::max(price, 0.0);
}

/// g_t^{K,T}(x) = E[(f_T(x + sqrt(T-t) Z) - K)^+].
inline double call_price(const CmmvModel& model, double t, double x, double strike,
                         std::size_t nodes = kDefaultQuadratureNodes) {
  const double remaining = model.remaining(t);
  const Polynomial& terminal = model.terminal().terminal();
  if (remaining == 0.0) return std::max(terminal(x) - strike, 0.0);
  return expected_call(terminal, x, std::sqrt(remaining), strike, nodes);
}

/// Put by parity in forward-value units.
inline double put_price(const CmmvModel& model, double t, double x, double strike,
                        std::size_t nodes = kDefaultQuadratureNodes) {
  const double call = call_price(model, t, x, strike, nodes);
  return std::max(call - (model.eval(t, x) - strike), 0.0);
}

/// Largest decrease g(x_i) - g(x_{i+1}) along an increasing grid of x over
/// [-4 sqrt(T), 4 sqrt(T)]. Nonpositive when the price is increasing in x.
inline double monotone_price_in_x(const CmmvModel& model, double t, double strike,
                                  std::size_t grid_points = 50) {
  const double half_width = 4.0 * std::sqrt(model.horizon());
  double worst = -std::numeric_limits<double>::infinity();
  double prev = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double x = -half_width + 2.0 * half_width * static_cast<double>(i) /
                                       static_cast<double>(grid_points - 1);
    const double g = call_price(model, t, x, strike);
    if (i > 0) worst = std::max(worst, prev - g);
    prev = g;
  }
  return worst;
}

/// Black-Scholes call on a forward with explicit discount factor.
inline double black_call(double forward, double strike, double tau_years, double vol,
                         double discount) {
  const double intrinsic = std::max(forward - strike, 0.0);
  if (tau_years <= 0.0 || vol <= 0.0) return discount * intrinsic;
  const double sd = vol * std::sqrt(tau_years);
  const double d1 = (std::log(forward / strike) + 0.5 * sd * sd) / sd;
  return discount * (forward * norm_cdf(d1) - strike * norm_cdf(d1 - sd));
}

inline double black_vega(double forward, double strike, double tau_years, double vol,
                         double discount) {
  const double sd = vol * std::sqrt(tau_years);
  const double d1 = (std::log(forward / strike) + 0.5 * sd * sd) / sd;
  return discount * forward * norm_pdf(d1) * std::sqrt(tau_years);
}

/// Black-Scholes-on-forward implied vol: bisection on [1e-6, 5], then Newton
/// polish until |BS(vol) - price| <= 1e-10 * forward, plus one final step.
inline double implied_vol(double price, double forward, double strike, double tau_years,
                          double discount) {
  const double lower = discount * std::max(forward - strike, 0.0);
  const double upper = discount * forward;
  if (!(price > lower)) {
    throw Error(ErrorKind::no_implied_vol, "price " + std::to_string(price) +
                                               " at or below intrinsic bound " +
                                               std::to_string(lower));
  }
  if (!(price < upper)) {
    throw Error(ErrorKind::no_implied_vol, "price " + std::to_string(price) +
                                               " at or above forward bound " +
                                               std::to_string(upper));
  }
  if (!(tau_years > 0.0) || !(strike > 0.0) || !(forward > 0.0)) {
    throw Error(ErrorKind::no_implied_vol, "nonpositive maturity, strike or forward");
  }
  constexpr double kLowVol = 1e-6, kHighVol = 5.0;
  const double tol = 1e-10 * forward;
  auto err = [&](double v) { return black_call(forward, strike, tau_years, v, discount) - price; };
  double lo = kLowVol, hi = kHighVol;
  if (err(lo) > 0.0) {
    throw Error(ErrorKind::no_implied_vol, "price below the vol bracket lower end");
  }
  if (err(hi) < 0.0) {
    throw Error(ErrorKind::no_implied_vol, "price above the vol bracket upper end");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-6; ++i) {
    const double mid = 0.5 * (lo + hi);
    (err(mid) < 0.0 ? lo : hi) = mid;
  }
  double vol = 0.5 * (lo + hi);
  for (int i = 0; i < 50; ++i) {
    const double e = err(vol);
    const double vega = black_vega(forward, strike, tau_years, vol, discount);
    if (std::abs(e) <= tol) {
      const double last = vega > 0.0 ? vol - e / vega : vol;
      return last > lo && last < hi ? last : vol;
    }
    if (e < 0.0) lo = vol; else hi = vol;
    double next = vega > 0.0 ? vol - e / vega : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == vol) break;
    vol = next;
  }
  if (std::abs(err(vol)) > tol) {
    throw Error(ErrorKind::no_implied_vol, "Newton polish did not reach tolerance");
  }
  return vol;
}

struct McResult {
  double price = 0.0;
  double std_error = 0.0;
};

using TerminalPayoff = std::function<double(double)>;

/// Payoff on the Euler path S_{t}, ..., S_{T} (n_steps + 1 values).
struct PathPayoff {
  std::function<double(std::span<const double>)> payoff;
  std::size_t n_steps = 100;
};

using Payoff = std::variant<TerminalPayoff, PathPayoff>;

/// Monte Carlo price of a payoff on the CMMV price from state (t, x). Path
/// i draws from CounterRng(seed, i), so results do not depend on scheduling.
inline McResult mc_price(const CmmvModel& model, const Payoff& payoff, double t, double x,
                         std::size_t n_paths, std::uint64_t seed) {
  if (n_paths == 0) throw Error(ErrorKind::protocol_misuse, "n_paths must be positive");
  const double remaining = model.remaining(t);
  double sum = 0.0, sum_sq = 0.0;

  if (const auto* terminal_payoff = std::get_if<TerminalPayoff>(&payoff)) {
    const Polynomial& terminal = model.terminal().terminal();
    const double scale = std::sqrt(remaining);
    for (std::size_t i = 0; i < n_paths; ++i) {
      CounterRng rng(seed, i);
      const double v = (*terminal_payoff)(terminal(x + scale * rng.normal()));
      sum += v;
      sum_sq += v * v;
    }
  } else {
    const auto& path_payoff = std::get<PathPayoff>(payoff);
    const std::size_t steps = std::max<std::size_t>(path_payoff.n_steps, 1);
    const double dt = remaining / static_cast<double>(steps);
    std::vector<Polynomial> maps, slopes;
    maps.reserve(steps);
    slopes.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      maps.push_back(model.map_at(t + dt * static_cast<double>(k)));
      slopes.push_back(maps.back().derivative());
    }
    std::vector<double> path(steps + 1);
    const double sqrt_dt = std::sqrt(dt);
    const double start = model.eval(t, x);
    for (std::size_t i = 0; i < n_paths; ++i) {
      CounterRng rng(seed, i);
      path[0] = start;
      for (std::size_t k = 0; k < steps; ++k) {
        // dS = nu(S, t) dB with nu = f_t'(psi_t(S)).
        const double state = invert_increasing(maps[k], path[k]);
        path[k + 1] = path[k] + slopes[k](state) * sqrt_dt * rng.normal();
      }
      const double v = path_payoff.payoff(path);
      sum += v;
      sum_sq += v * v;
    }
  }
  const double n = static_cast<double>(n_paths);
  const double mean = sum / n;
  const double var = n > 1.0 ? std::max(sum_sq / n - mean * mean, 0.0) * n / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace cmmv

#endif  // CMMV_PRICING_HPP
