#ifndef CMMV_CORE_HPP
#define CMMV_CORE_HPP

// CMMV functions f_t(x) = (f_T * h_{T-t})(x) for polynomial terminal maps,
// their derivatives, inverses psi_t and the induced local volatility.

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cmmv/error.hpp"
#include "cmmv/polynomial.hpp"

namespace cmmv {

struct InversionTolerance {
  double abs = 1e-10;
  double rel = 1e-12;
};

/// Solves p(x) = target for a nondecreasing polynomial p. The bracket grows by
/// doubling away from x = 0; the root is then refined by Newton steps kept
/// inside the bracket, falling back to bisection.
inline double invert_increasing(const Polynomial& p, double target,
                                InversionTolerance tol = {}) {
  if (!std::isfinite(target)) {
    throw Error(ErrorKind::flat_region, "target price is not finite");
  }
  const Polynomial dp = p.derivative();
  double lo = 0.0, hi = 0.0;
  double flo = p(0.0) - target;
  if (flo == 0.0) return 0.0;
  const bool search_right = flo < 0.0;
  double step = 1.0;
  double fhi = flo;
  for (int i = 0; i < 1100; ++i) {
    const double x = search_right ? step : -step;
    const double fx = p(x) - target;
    if ((search_right && fx >= 0.0) || (!search_right && fx <= 0.0)) {
      hi = x;
      fhi = fx;
      break;
    }
    lo = x;
    flo = fx;
    step *= 2.0;
  }
  if ((search_right && fhi < 0.0) || (!search_right && fhi > 0.0) || fhi == flo) {
    throw Error(ErrorKind::flat_region, "no sign change found while bracketing target " +
                                            std::to_string(target));
  }
  if (!search_right) {
    std::swap(lo, hi);
    std::swap(flo, fhi);
  }
  if (fhi == 0.0) return hi;
  // Invariant: p(lo) - target < 0 < p(hi) - target.
  double x = 0.5 * (lo + hi);
  const double threshold = tol.abs + tol.rel * std::abs(target);
  for (int it = 0; it < 200; ++it) {
    const double fx = p(x) - target;
    if (fx == 0.0) return x;
    if (fx < 0.0) lo = x; else hi = x;
    const double d = dp(x);
    double next = (d > 0.0) ? x - fx / d : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double moved = std::abs(next - x);
    x = next;
    if (moved <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(x))) break;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(x))) break;
  }
  if (std::abs(p(x) - target) > threshold) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "cannot resolve target " << target << " inside [" << lo << ", " << hi << "]";
    throw Error(ErrorKind::flat_region, msg.str());
  }
  return x;
}

/// Writes a strictly positive polynomial d as P^2 + Q^2 (P + iQ is the
/// monic factor over the roots in the upper half plane, scaled by
/// sqrt(lead)) and returns its antiderivative with the given constant.
inline IncreasingPolynomial increasing_from_derivative(const Polynomial& d, double constant) {
  const int deg = d.degree();
  if (deg < 0 || deg % 2 != 0 || d[static_cast<std::size_t>(deg)] <= 0.0) {
    throw Error(ErrorKind::invalid_parameterization,
                "derivative must have even degree and positive leading coefficient");
  }
  const double lead = d[static_cast<std::size_t>(deg)];
  using Complex = std::complex<double>;
  std::vector<Complex> h{Complex(std::sqrt(lead), 0.0)};
  if (deg > 0) {
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -d[static_cast<std::size_t>(i)] / lead;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::invalid_parameterization, "root finding failed");
    }
    for (Eigen::Index i = 0; i < deg; ++i) {
      const Complex root = solver.eigenvalues()(i);
      if (std::abs(root.imag()) <= 1e-12 * (1.0 + std::abs(root))) {
        throw Error(ErrorKind::invalid_parameterization, "derivative has a real root");
      }
      if (root.imag() < 0.0) continue;
      // h <- h * (x - root)
      std::vector<Complex> next(h.size() + 1, Complex(0.0, 0.0));
      for (std::size_t k = 0; k < h.size(); ++k) {
        next[k + 1] += h[k];
        next[k] -= root * h[k];
      }
      h = std::move(next);
    }
  }
  std::vector<double> p(h.size()), q(h.size() - 1);
  for (std::size_t k = 0; k < h.size(); ++k) p[k] = h[k].real();
  for (std::size_t k = 0; k + 1 < h.size(); ++k) q[k] = h[k].imag();
  return IncreasingPolynomial(constant, std::move(p), std::move(q));
}

/// CMMV model: increasing terminal map f_T plus horizon T (variance-time in
/// days). Immutable; all queries are const and thread-safe.
class CmmvModel {
 public:
  CmmvModel(IncreasingPolynomial terminal, double horizon)
      : terminal_(std::move(terminal)), horizon_(horizon) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
      throw Error(ErrorKind::invalid_parameterization, "horizon must be positive");
    }
  }

  const IncreasingPolynomial& terminal() const noexcept { return terminal_; }
  double horizon() const noexcept { return horizon_; }

  /// f_t as a polynomial in x.
  Polynomial map_at(double t) const {
    return terminal_.terminal().gaussian_convolution(remaining(t));
  }

  double eval(double t, double x) const { return map_at(t)(x); }

  /// f_t^{(k)}(x): differentiate f_T, then convolve.
  double derivative(std::size_t k, double t, double x) const {
    return terminal_.terminal().derivative(k).gaussian_convolution(remaining(t))(x);
  }

  /// psi_t(price) = f_t^{-1}(price).
  double invert(double t, double price, InversionTolerance tol = {}) const {
    return invert_increasing(map_at(t), price, tol);
  }

  /// nu(y, t) = f_t'(psi_t(y)).
  double local_vol(double t, double price) const {
    const Polynomial ft = map_at(t);
    return ft.derivative()(invert_increasing(ft, price));
  }

  /// T - t, validated.
  double remaining(double t) const {
    if (t > horizon_ || !std::isfinite(t)) {
      throw Error(ErrorKind::out_of_horizon,
                  "t = " + std::to_string(t) + " beyond horizon " + std::to_string(horizon_));
    }
    return horizon_ - t;
  }

  friend bool operator==(const CmmvModel&, const CmmvModel&) = default;

 private:
  IncreasingPolynomial terminal_;
  double horizon_;
};

/// phi_n(x, t) = t^{n/2} He_n(x / sqrt(t)); phi_n(x, 0) = x^n.
inline double hermite_phi(std::size_t n, double x, double t) {
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = x;
  for (std::size_t k = 1; k < n; ++k) {
    const double next = x * cur - static_cast<double>(k) * t * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// phi_n(., t) as a polynomial in x.
inline Polynomial hermite_phi_polynomial(std::size_t n, double t) {
  Polynomial prev{1.0};
  if (n == 0) return prev;
  Polynomial cur{0.0, 1.0};
  const Polynomial x{0.0, 1.0};
  for (std::size_t k = 1; k < n; ++k) {
    Polynomial next = x * cur + (-static_cast<double>(k) * t) * prev;
    prev = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

/// f_t(x) = sum_k alpha_k phi_k(x, t) with alpha_k = f_0^{(k)}(0) / k!.
struct HermiteExpansion {
  std::vector<double> alphas;
  double horizon = 0.0;

  double eval(double x, double t) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < alphas.size(); ++k) acc += alphas[k] * hermite_phi(k, x, t);
    return acc;
  }

  Polynomial map_at(double t) const {
    Polynomial acc;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      acc = acc + alphas[k] * hermite_phi_polynomial(k, t);
    }
    return acc;
  }
};

inline HermiteExpansion hermite_expand(const CmmvModel& model) {
  // Coefficient k of f_0 is f_0^{(k)}(0) / k!.
  return HermiteExpansion{model.map_at(0.0).coeffs(), model.horizon()};
}

}  // namespace cmmv

#endif  // CMMV_CORE_HPP
