#ifndef CMMV_BASELINE_HPP
#define CMMV_BASELINE_HPP

// Sticky-strike reference: implied vols frozen at the calibration date and
// interpolated across strikes by a least-squares polynomial.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmmv/error.hpp"
#include "cmmv/marketdata.hpp"
#include "cmmv/pricing.hpp"

namespace cmmv {

struct SmileModel {
  std::vector<double> coefficients;  // in u = (K - center) / half_width
  double center = 0.0;
  double half_width = 1.0;
  double strike_min = 0.0;
  double strike_max = 0.0;
  double vol_floor = 1e-4;
  double rms = 0.0;

  /// sigma(K), flat beyond the fitted strike domain.
  double vol(double strike, bool* extrapolated = nullptr) const {
    const double k = std::clamp(strike, strike_min, strike_max);
    if (extrapolated) *extrapolated = k != strike;
    const double u = (k - center) / half_width;
    double acc = 0.0;
    for (std::size_t i = coefficients.size(); i-- > 0;) acc = acc * u + coefficients[i];
    return std::max(acc, vol_floor);
  }

  friend bool operator==(const SmileModel&, const SmileModel&) = default;
};

/// Least-squares polynomial smile through (strike, vol) pairs.
inline SmileModel fit_smile(const std::vector<double>& strikes, const std::vector<double>& vols,
                            int degree = 4) {
  const auto n = static_cast<Eigen::Index>(strikes.size());
  if (degree < 0 || n < degree + 2 || vols.size() != strikes.size()) {
    throw Error(ErrorKind::insufficient_data, "smile fit needs at least degree + 2 implied vols");
  }
  SmileModel s;
  s.strike_min = *std::min_element(strikes.begin(), strikes.end());
  s.strike_max = *std::max_element(strikes.begin(), strikes.end());
  s.center = 0.5 * (s.strike_min + s.strike_max);
  s.half_width = s.strike_max > s.strike_min ? 0.5 * (s.strike_max - s.strike_min) : 1.0;
  Eigen::MatrixXd a(n, degree + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (strikes[static_cast<std::size_t>(i)] - s.center) / s.half_width;
    double pw = 1.0;
    for (int j = 0; j <= degree; ++j, pw *= u) a(i, j) = pw;
    y(i) = vols[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
  s.coefficients.assign(c.data(), c.data() + c.size());
  s.rms = std::sqrt((a * c - y).squaredNorm() / static_cast<double>(n));
  return s;
}

/// Smile from the call mids of one chain; strikes without an implied vol are
/// skipped.
inline SmileModel fit_smile(const OptionChain& chain, int degree = 4) {
  const double tau = chain.days_to_expiry / 365.0;
  std::vector<double> k, v;
  for (std::size_t i = 0; i < chain.strikes.size(); ++i) {
    try {
      v.push_back(implied_vol(chain.call_mids[i], chain.forward(), chain.strikes[i], tau,
                              chain.discount()));
      k.push_back(chain.strikes[i]);
    } catch (const Error&) {
    }
  }
  return fit_smile(k, v, degree);
}

struct SsPrice {
  double price = 0.0;
  bool extrapolated = false;
};

inline SsPrice ss_price(const SmileModel& smile, double forward, double strike, double tau_years,
                        double discount) {
  SsPrice out;
  const double vol = smile.vol(strike, &out.extrapolated);
  out.price = black_call(forward, strike, tau_years, vol, discount);
  return out;
}

inline nlohmann::json smile_to_json(const SmileModel& s) {
  return {{"coefficients", s.coefficients}, {"center", s.center},
          {"half_width", s.half_width},     {"strike_min", s.strike_min},
          {"strike_max", s.strike_max},     {"vol_floor", s.vol_floor},
          {"rms", s.rms}};
}

inline SmileModel smile_from_json(const nlohmann::json& j) {
  try {
    SmileModel s;
    s.coefficients = j.at("coefficients").get<std::vector<double>>();
    s.center = j.at("center").get<double>();
    s.half_width = j.at("half_width").get<double>();
    s.strike_min = j.at("strike_min").get<double>();
    s.strike_max = j.at("strike_max").get<double>();
    s.vol_floor = j.at("vol_floor").get<double>();
    s.rms = j.at("rms").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("smile JSON: ") + e.what());
  }
}

}  // namespace cmmv

#endif  // CMMV_BASELINE_HPP
