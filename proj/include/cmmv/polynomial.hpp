#ifndef CMMV_POLYNOMIAL_HPP
#define CMMV_POLYNOMIAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmmv/error.hpp"

namespace cmmv {

/// Dense real polynomial, coefficients in ascending powers.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) {}
  Polynomial(std::initializer_list<double> coeffs) : c_(coeffs) {}

  const std::vector<double>& coeffs() const noexcept { return c_; }
  std::size_t size() const noexcept { return c_.size(); }
  double operator[](std::size_t k) const { return k < c_.size() ? c_[k] : 0.0; }

  /// Index of the highest nonzero coefficient, -1 for the zero polynomial.
  int degree() const noexcept {
    for (std::size_t k = c_.size(); k-- > 0;) {
      if (c_[k] != 0.0) return static_cast<int>(k);
    }
    return -1;
  }

  double operator()(double x) const noexcept {
    double acc = 0.0;
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * x + c_[k];
    return acc;
  }

  Polynomial derivative(std::size_t order = 1) const {
    if (order >= c_.size()) return Polynomial{};
    std::vector<double> out(c_.size() - order);
    for (std::size_t k = order; k < c_.size(); ++k) {
      double factor = 1.0;
      for (std::size_t j = 0; j < order; ++j) factor *= static_cast<double>(k - j);
      out[k - order] = c_[k] * factor;
    }
    return Polynomial(std::move(out));
  }

  /// Antiderivative taking the value `constant` at zero.
  Polynomial antiderivative(double constant = 0.0) const {
    std::vector<double> out(c_.size() + 1, 0.0);
    out[0] = constant;
    for (std::size_t k = 0; k < c_.size(); ++k) out[k + 1] = c_[k] / static_cast<double>(k + 1);
    return Polynomial(std::move(out));
  }

  /// x -> p(x + shift) expressed in powers of z = (x' - x) / scale, i.e. the
  /// coefficients a_j = scale^j p^(j)(shift) / j!.
  Polynomial taylor_at(double shift, double scale = 1.0) const {
    std::vector<double> a(c_);
    // Repeated synthetic division yields the Taylor coefficients at `shift`.
    const std::size_t n = a.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t k = n - 1; k > i; --k) a[k - 1] += shift * a[k];
    }
    double s = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      a[j] *= s;
      s *= scale;
    }
    return Polynomial(std::move(a));
  }

  /// x -> E[p(x + sqrt(variance) Z)], Z ~ N(0,1). Exact via Gaussian moments.
  Polynomial gaussian_convolution(double variance) const {
    if (variance == 0.0 || c_.size() < 3) return *this;
    const std::size_t n = c_.size();
    std::vector<double> out(n, 0.0);
    // out[p] = sum_{j even} c[p+j] * C(p+j, j) * (j-1)!! * v^{j/2}
    for (std::size_t p = 0; p < n; ++p) {
      double acc = 0.0;
      double binom = 1.0;      // C(p+j, j)
      double dfact = 1.0;      // (j-1)!!
      double vpow = 1.0;       // v^{j/2}
      for (std::size_t j = 0; p + j < n; j += 2) {
        if (j > 0) {
          binom *= static_cast<double>(p + j - 1) * static_cast<double>(p + j) /
                   (static_cast<double>(j - 1) * static_cast<double>(j));
          dfact *= static_cast<double>(j - 1);
          vpow *= variance;
        }
        acc += c_[p + j] * binom * dfact * vpow;
      }
      out[p] = acc;
    }
    return Polynomial(std::move(out));
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    std::vector<double> out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
    return Polynomial(std::move(out));
  }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.c_.empty() || b.c_.empty()) return Polynomial{};
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a.c_[i] * b.c_[j];
    return Polynomial(std::move(out));
  }

  friend Polynomial operator*(double s, const Polynomial& a) {
    std::vector<double> out(a.c_);
    for (double& v : out) v *= s;
    return Polynomial(std::move(out));
  }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

 private:
  std::vector<double> c_;
};

/// Increasing polynomial f with f' = P^2 + Q^2, deg P = n > deg Q and
/// f(0) = constant. The induced f has odd degree 2n+1.
class IncreasingPolynomial {
 public:
  IncreasingPolynomial(double constant, std::vector<double> p, std::vector<double> q)
      : constant_(constant), p_(std::move(p)), q_(std::move(q)) {
    if (p_.empty()) {
      throw Error(ErrorKind::invalid_parameterization, "P has no coefficients");
    }
    for (double v : p_) check_finite(v);
    for (double v : q_) check_finite(v);
    check_finite(constant_);
    const int dp = Polynomial(p_).degree();
    const int dq = Polynomial(q_).degree();
    if (dp < 0) throw Error(ErrorKind::invalid_parameterization, "P is identically zero");
    if (dq >= dp) {
      throw Error(ErrorKind::invalid_parameterization,
                  "deg Q (" + std::to_string(dq) + ") must be below deg P (" +
                      std::to_string(dp) + ")");
    }
    const Polynomial P(p_), Q(q_);
    f_ = (P * P + Q * Q).antiderivative(constant_);
    // Trim trailing zero coefficients so degree() == size()-1.
    std::vector<double> c = f_.coeffs();
    c.resize(static_cast<std::size_t>(2 * dp + 2));
    f_ = Polynomial(std::move(c));
  }

  double constant() const noexcept { return constant_; }
  const std::vector<double>& p_coeffs() const noexcept { return p_; }
  const std::vector<double>& q_coeffs() const noexcept { return q_; }
  const Polynomial& terminal() const noexcept { return f_; }
  int degree() const noexcept { return f_.degree(); }

  double operator()(double x) const noexcept { return f_(x); }

  friend bool operator==(const IncreasingPolynomial& a, const IncreasingPolynomial& b) {
    return a.constant_ == b.constant_ && a.p_ == b.p_ && a.q_ == b.q_;
  }

 private:
  static void check_finite(double v) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::invalid_parameterization, "non-finite coefficient");
    }
  }

  double constant_;
  std::vector<double> p_;
  std::vector<double> q_;
  Polynomial f_;
};

/// Builds f_T from (constant, P, Q).
inline IncreasingPolynomial poly_from_squares(double constant, std::span<const double> p,
                                              std::span<const double> q) {
  return IncreasingPolynomial(constant, {p.begin(), p.end()}, {q.begin(), q.end()});
}

}  // namespace cmmv

#endif  // CMMV_POLYNOMIAL_HPP
