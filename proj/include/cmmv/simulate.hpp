#ifndef CMMV_SIMULATE_HPP
#define CMMV_SIMULATE_HPP

// Path simulation S_t = f_t(B_t) and the discretized recovery
//   <S,S> -> S^1 -> B = int dS / S^1 -> S^n = d<S^{n-1}, B>/dt -> f.
// Local slopes are taken over finite windows; the window of level n is
// w1 * growth^(n-1) steps, capped at the path length.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "cmmv/core.hpp"
#include "cmmv/error.hpp"
#include "cmmv/rng.hpp"

namespace cmmv {

struct PathGrid {
  double dt = 0.0;
  std::vector<double> brownian;
  std::vector<double> price;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;

  std::size_t steps() const { return brownian.empty() ? 0 : brownian.size() - 1; }
  double time(std::size_t i) const { return dt * static_cast<double>(i); }
};

/// Paths on 0 = t_0 < ... < t_m = t1 with exact Gaussian increments; path i
/// draws from CounterRng(seed, i).
inline std::vector<PathGrid> simulate_paths(const CmmvModel& model, std::size_t n_steps, double t1,
                                            std::size_t n_paths, std::uint64_t seed) {
  if (!(t1 < model.horizon()) || !(t1 > 0.0) || n_steps == 0) {
    throw Error(ErrorKind::out_of_horizon, "observation horizon must lie in (0, T)");
  }
  const HermiteExpansion f = hermite_expand(model);
  const double dt = t1 / static_cast<double>(n_steps);
  const double sd = std::sqrt(dt);
  std::vector<PathGrid> out;
  out.reserve(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    PathGrid g{dt, std::vector<double>(n_steps + 1), std::vector<double>(n_steps + 1), seed, p};
    CounterRng rng(seed, p);
    double b = 0.0;
    for (std::size_t i = 0; i <= n_steps; ++i) {
      if (i > 0) b += sd * rng.normal();
      g.brownian[i] = b;
      g.price[i] = f.eval(b, dt * static_cast<double>(i));
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Running sum of (x_{i+1} - x_i)(y_{i+1} - y_i); element 0 is 0.
inline std::vector<double> covariation(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() != x.size()) {
    throw Error(ErrorKind::insufficient_data, "covariation needs two aligned points");
  }
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) {
    out[i] = out[i - 1] + (x[i] - x[i - 1]) * (y[i] - y[i - 1]);
  }
  return out;
}

inline std::vector<double> quadratic_variation(std::span<const double> x) { return covariation(x, x); }

struct SeriesEstimate {
  std::vector<double> values;
  std::size_t floored = 0;
};

/// Centered moving average with half-width h, truncated at the ends.
inline std::vector<double> box_smooth(std::span<const double> x, std::size_t h) {
  if (h == 0) return {x.begin(), x.end()};
  std::vector<double> c(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) c[i + 1] = c[i] + x[i];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i > h ? i - h : 0;
    const std::size_t hi = std::min(i + h, x.size() - 1);
    out[i] = (c[hi + 1] - c[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

/// S^1 = sqrt(d<S,S>/dt) from the slope of a running QV series over a
/// centered window of w steps; nonpositive slopes are floored at 1e-12.
inline SeriesEstimate s1_from_qv(std::span<const double> qv, double dt, std::size_t window) {
  if (window < 2) throw Error(ErrorKind::insufficient_data, "window must span two steps");
  if (qv.size() < 2) throw Error(ErrorKind::insufficient_data, "QV series needs two points");
  const std::size_t n = qv.size(), h = window / 2;
  SeriesEstimate out{std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > h ? i - h : 0;
    const std::size_t hi = std::min(i + h, n - 1);
    double slope = (qv[hi] - qv[lo]) / (static_cast<double>(hi - lo) * dt);
    if (!(slope > 1e-24)) {
      slope = 1e-24;
      ++out.floored;
    }
    out.values[i] = std::sqrt(slope);
  }
  return out;
}

inline SeriesEstimate recover_s1(std::span<const double> price, double dt, std::size_t window) {
  if (window < 2) throw Error(ErrorKind::insufficient_data, "window must span two steps");
  return s1_from_qv(quadratic_variation(price), dt, window);
}

/// B_hat = sum dS_i / S^1_{i - lag}. With lag >= half the S^1 window the
/// integrand uses no information beyond t_i.
inline std::vector<double> recover_brownian(std::span<const double> price,
                                            std::span<const double> s1, std::size_t lag = 0) {
  if (s1.size() != price.size()) throw Error(ErrorKind::insufficient_data, "misaligned S^1");
  std::vector<double> b(price.size(), 0.0);
  for (std::size_t i = 1; i < price.size(); ++i) {
    const std::size_t j = i - 1 > lag ? i - 1 - lag : 0;
    b[i] = b[i - 1] + (price[i] - price[i - 1]) / s1[j];
  }
  return b;
}

/// S^n = d<S^{n-1}, B>/dt as a local regression slope of lag-L increments of
/// S^{n-1} on those of B_hat smoothed by the same kernel that smooths
/// S^{n-1}; half-window h, truncated at the ends.
inline std::vector<double> recover_sn(std::span<const double> previous, std::span<const double> bhat,
                                      std::size_t smooth_half_width, std::size_t lag,
                                      std::size_t half_window) {
  const std::size_t n = previous.size();
  if (bhat.size() != n || lag == 0 || lag >= n) {
    throw Error(ErrorKind::insufficient_data, "recover_sn needs aligned series longer than lag");
  }
  const std::vector<double> smooth = box_smooth(bhat, smooth_half_width);
  const std::size_t k = n - lag;
  std::vector<double> cxy(k + 1, 0.0), cyy(k + 1, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double dx = previous[j + lag] - previous[j];
    const double dy = smooth[j + lag] - smooth[j];
    cxy[j + 1] = cxy[j] + dx * dy;
    cyy[j + 1] = cyy[j] + dy * dy;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = std::min(i > half_window ? i - half_window : 0, k - 1);
    const std::size_t hi = std::max(std::min(i + half_window, k), lo + 1);
    out[i] = (cxy[hi] - cxy[lo]) / (cyy[hi] - cyy[lo]);
  }
  return out;
}

struct RecoveryConfig {
  std::size_t first_window = 3000;
  std::size_t window_growth = 20;
  std::size_t n_max = 4;
};

struct RecoveryResult {
  std::vector<std::vector<double>> levels;  // S^1 ... S^{n_max}
  std::vector<double> bhat;
  std::vector<double> derivatives;          // f^(k)_0(0) estimates, k = 0..n_max
  std::size_t floored = 0;
  HermiteExpansion expansion;
  std::optional<CmmvModel> model;           // when the estimate is increasing
};

/// f_t(x) = sum_k d_k / k! phi_k(x, t).
inline HermiteExpansion recover_f(std::span<const double> derivatives, double horizon) {
  HermiteExpansion e{{}, horizon};
  double fact = 1.0;
  for (std::size_t k = 0; k < derivatives.size(); ++k) {
    if (k > 0) fact *= static_cast<double>(k);
    e.alphas.push_back(derivatives[k] / fact);
  }
  return e;
}

inline RecoveryResult recover_path(const PathGrid& path, double horizon, const RecoveryConfig& cfg = {}) {
  const std::size_t m = path.steps();
  if (m < 4) throw Error(ErrorKind::insufficient_data, "path too short for recovery");
  auto window = [&](std::size_t level) {
    std::size_t w = cfg.first_window;
    for (std::size_t i = 1; i < level && w <= m; ++i) w *= cfg.window_growth;
    return std::min(w, m + 1);
  };
  RecoveryResult r;
  const std::size_t w1 = std::min(cfg.first_window, m);
  SeriesEstimate s1 = recover_s1(path.price, path.dt, w1);
  r.floored = s1.floored;
  r.bhat = recover_brownian(path.price, s1.values, w1 / 2);
  r.levels.push_back(std::move(s1.values));
  for (std::size_t level = 2; level <= cfg.n_max; ++level) {
    const std::size_t prev_w = window(level - 1), w = window(level);
    const std::size_t lag = std::min(prev_w, m / 2);
    const std::size_t half = w > m ? m + 1 : w / 2;
    r.levels.push_back(recover_sn(r.levels.back(), r.bhat, prev_w / 2, lag, half));
  }
  r.derivatives.push_back(path.price.front());
  for (const auto& s : r.levels) r.derivatives.push_back(s.front());
  r.expansion = recover_f(r.derivatives, horizon);
  try {
    const Polynomial ft = r.expansion.map_at(horizon);
    r.model = CmmvModel(increasing_from_derivative(ft.derivative(), ft[0]), horizon);
  } catch (const Error&) {
  }
  return r;
}

inline void write_path_csv(std::ostream& out, const PathGrid& path, std::size_t stride = 1) {
  const auto old = out.precision(10);
  out << "t,B,S\n";
  for (std::size_t i = 0; i < path.brownian.size(); i += std::max<std::size_t>(stride, 1)) {
    out << path.time(i) << ',' << path.brownian[i] << ',' << path.price[i] << '\n';
  }
  out.precision(old);
}

}  // namespace cmmv

#endif  // CMMV_SIMULATE_HPP
