#ifndef CMMV_NORMAL_HPP
#define CMMV_NORMAL_HPP

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace cmmv {

inline double norm_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double norm_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(x), accurate for large positive x.
inline double norm_sf(double x) noexcept { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Phi^{-1}(p) for p in (0,1).
inline double norm_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace cmmv

#endif  // CMMV_NORMAL_HPP
