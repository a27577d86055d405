#ifndef CMMV_TESTS_ORACLES_HPP
#define CMMV_TESTS_ORACLES_HPP

// Reference formulas used to check the library independently of its own
// convolution and pricing code paths.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "cmmv/polynomial.hpp"

namespace oracle {

inline double pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

inline double normal_moment(std::size_t j) {
  if (j % 2) return 0.0;
  double m = 1.0;
  for (std::size_t i = j; i > 1; i -= 2) m *= static_cast<double>(i - 1);
  return m;
}

/// E[p(x + sqrt(v) Z)] by binomial expansion term by term.
inline double convolved(const std::vector<double>& c, double x, double v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k)
    for (std::size_t j = 0; j <= k; j += 2)
      acc += c[k] * binomial(k, j) * std::pow(x, static_cast<double>(k - j)) *
             std::pow(v, 0.5 * static_cast<double>(j)) * normal_moment(j);
  return acc;
}

/// d/dv of convolved(c, x, v).
inline double convolved_dv(const std::vector<double>& c, double x, double v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k)
    for (std::size_t j = 2; j <= k; j += 2)
      acc += c[k] * binomial(k, j) * std::pow(x, static_cast<double>(k - j)) * 0.5 *
             static_cast<double>(j) * std::pow(v, 0.5 * static_cast<double>(j) - 1.0) *
             normal_moment(j);
  return acc;
}

/// d^2/dx^2 of convolved(c, x, v).
inline double convolved_dxx(const std::vector<double>& c, double x, double v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k)
    for (std::size_t j = 0; j + 2 <= k; j += 2)
      acc += c[k] * binomial(k, j) * static_cast<double>(k - j) * static_cast<double>(k - j - 1) *
             std::pow(x, static_cast<double>(k - j - 2)) *
             std::pow(v, 0.5 * static_cast<double>(j)) * normal_moment(j);
  return acc;
}

/// Bachelier call on S = a (x + sqrt(v) Z) + b.
inline double bachelier_call(double a, double b, double x, double v, double strike) {
  const double sd = a * std::sqrt(v);
  const double d = (a * x + b - strike) / sd;
  return sd * (pdf(d) + d * cdf(d));
}

/// Random increasing polynomial of degree 2n+1 with O(1) coefficients.
inline cmmv::IncreasingPolynomial random_increasing(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> p(n + 1), q(n);
  for (double& v : p) v = u(gen);
  for (double& v : q) v = u(gen);
  p[n] = 0.5 + 0.5 * std::abs(p[n]);
  return cmmv::IncreasingPolynomial(u(gen), p, q);
}

}  // namespace oracle

#endif
