#ifndef CMMV_ANALYTICS_HPP
#define CMMV_ANALYTICS_HPP

// Model persistence, predicted-price tables and the error, surface and
// smile-shift studies built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmmv/baseline.hpp"
#include "cmmv/calibrate.hpp"
#include "cmmv/core.hpp"
#include "cmmv/error.hpp"
#include "cmmv/marketdata.hpp"
#include "cmmv/pricing.hpp"

namespace cmmv {

inline constexpr int kSchemaVersion = 1;

inline nlohmann::json model_to_json(const CmmvModel& m) {
  return {{"horizon_days", m.horizon()},
          {"constant", m.terminal().constant()},
          {"p", m.terminal().p_coeffs()},
          {"q", m.terminal().q_coeffs()},
          {"f_coeffs", m.terminal().terminal().coeffs()}};
}

inline CmmvModel model_from_json(const nlohmann::json& j) {
  try {
    CmmvModel m(IncreasingPolynomial(j.at("constant").get<double>(),
                                     j.at("p").get<std::vector<double>>(),
                                     j.at("q").get<std::vector<double>>()),
                j.at("horizon_days").get<double>());
    if (j.contains("f_coeffs")) {
      const auto f = j.at("f_coeffs").get<std::vector<double>>();
      const auto& g = m.terminal().terminal().coeffs();
      bool same = f.size() == g.size();
      for (std::size_t k = 0; same && k < f.size(); ++k) {
        same = std::abs(f[k] - g[k]) <= 1e-9 * (1.0 + std::abs(g[k]));
      }
      if (!same) throw Error(ErrorKind::schema_mismatch, "f_coeffs disagree with (constant, p, q)");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("model JSON: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::schema_mismatch) throw;
    throw Error(ErrorKind::schema_mismatch, std::string("model JSON: ") + e.what());
  }
}

enum class ModelKind { m1, m2, ss };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::m1: return "m1";
    case ModelKind::m2: return "m2";
    case ModelKind::ss: return "ss";
  }
  return "?";
}

/// A calibrated pricer: CMMV (from M1 or M2) or sticky strike.
struct PricingModel {
  ModelKind kind = ModelKind::m1;
  Date quote_date;
  Date expiry;
  std::optional<CmmvModel> cmmv;
  std::optional<SmileModel> smile;
  nlohmann::json report = nlohmann::json::object();

  std::string label() const { return to_string(kind); }
};

inline nlohmann::json pricing_model_to_json(const PricingModel& m) {
  nlohmann::json j{{"schema_version", kSchemaVersion},
                   {"kind", to_string(m.kind)},
                   {"quote_date", m.quote_date},
                   {"expiry", m.expiry}};
  if (m.cmmv) j["model"] = model_to_json(*m.cmmv);
  if (m.smile) j["smile"] = smile_to_json(*m.smile);
  if (!m.report.empty()) j["calibration"] = m.report;
  return j;
}

inline PricingModel pricing_model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw Error(ErrorKind::schema_mismatch,
                  "unsupported schema_version " + j.at("schema_version").dump());
    }
    PricingModel m;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "m1") m.kind = ModelKind::m1;
    else if (kind == "m2") m.kind = ModelKind::m2;
    else if (kind == "ss") m.kind = ModelKind::ss;
    else throw Error(ErrorKind::schema_mismatch, "unknown model kind " + kind);
    m.quote_date = j.at("quote_date").get<Date>();
    m.expiry = j.at("expiry").get<Date>();
    if (m.kind == ModelKind::ss) {
      m.smile = smile_from_json(j.at("smile"));
    } else {
      m.cmmv = model_from_json(j.at("model"));
    }
    if (j.contains("calibration")) m.report = j.at("calibration");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("pricing model JSON: ") + e.what());
  }
}

/// Calibration report for a CMMV fit.
inline nlohmann::json fit_report(const std::string& method, int degree, const FitResult& fit,
                                 const std::string& split = "") {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : fit.trace) trace.push_back({r.evaluations, r.best_value});
  nlohmann::json terms = nlohmann::json::array();
  for (auto t : fit.terminations) terms.push_back(std::string(to_string(t)));
  return {{"method", method},
          {"degree", degree},
          {"coefficients", fit.model.terminal().terminal().coeffs()},
          {"objective", fit.objective},
          {"rms", fit.rms},
          {"evaluations", fit.evaluations},
          {"terminations", terms},
          {"residuals", fit.residuals},
          {"trace", trace},
          {"split", split}};
}

struct PredictionRecord {
  std::string model;
  Date quote_date;
  double strike = 0.0;
  double observed = 0.0;
  double predicted = NAN;
  double abs_error = NAN;
  double rel_error = NAN;
  std::string note;

  bool ok() const { return note.empty(); }
};

/// Predicted call prices on every (date, strike) of the chains, in quoted
/// (discounted) units. For CMMV models the state is x_t = psi_t(S_t) with S_t
/// the chain's parity forward.
inline std::vector<PredictionRecord> predict(const PricingModel& model,
                                             const std::vector<OptionChain>& chains) {
  std::vector<PredictionRecord> out;
  for (const auto& chain : chains) {
    std::optional<double> state;
    std::string date_note;
    double t = 0.0;
    if (model.cmmv) {
      t = model.cmmv->horizon() - chain.days_to_expiry;
      try {
        state = model.cmmv->invert(t, chain.forward());
      } catch (const Error& e) {
        date_note = e.what();
      }
    }
    const double tau = chain.days_to_expiry / 365.0;
    for (std::size_t i = 0; i < chain.strikes.size(); ++i) {
      PredictionRecord r;
      r.model = model.label();
      r.quote_date = chain.quote_date;
      r.strike = chain.strikes[i];
      r.observed = chain.call_mids[i];
      try {
        if (model.cmmv) {
          if (!state) throw Error(ErrorKind::flat_region, date_note);
          r.predicted = chain.discount() * call_price(*model.cmmv, t, *state, r.strike);
        } else {
          r.predicted = ss_price(*model.smile, chain.forward(), r.strike, tau, chain.discount()).price;
        }
        r.abs_error = std::abs(r.predicted - r.observed);
        if (r.observed > 0.0) r.rel_error = r.abs_error / r.observed;
      } catch (const Error& e) {
        r.note = e.what();
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct ErrorSummary {
  std::string model;
  std::string key;  // date or strike
  std::size_t count = 0;
  double mean_abs_error = 0.0;
  double mean_observed = 0.0;

  /// Mean absolute error relative to the mean observed price.
  double relative_error() const { return mean_observed > 0.0 ? mean_abs_error / mean_observed : NAN; }
};

namespace detail {

template <class KeyFn>
std::vector<ErrorSummary> group_errors(const std::vector<PredictionRecord>& table, KeyFn key) {
  std::map<std::pair<std::string, std::string>, ErrorSummary> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : table) {
    if (!r.ok()) continue;
    const auto k = key(r);
    if (!k) continue;
    auto [it, inserted] = groups.try_emplace({r.model, *k}, ErrorSummary{r.model, *k});
    if (inserted) order.push_back(it->first);
    it->second.count += 1;
    it->second.mean_abs_error += r.abs_error;
    it->second.mean_observed += r.observed;
  }
  std::vector<ErrorSummary> out;
  for (const auto& k : order) {
    ErrorSummary s = groups.at(k);
    s.mean_abs_error /= static_cast<double>(s.count);
    s.mean_observed /= static_cast<double>(s.count);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string strike_key(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", k);
  return buf;
}

}  // namespace detail

inline std::vector<ErrorSummary> error_by_date(const std::vector<PredictionRecord>& table) {
  return detail::group_errors(table, [](const PredictionRecord& r) {
    return std::optional<std::string>(r.quote_date.str());
  });
}

/// Per-strike errors over quote dates in [from, to].
inline std::vector<ErrorSummary> error_by_strike(const std::vector<PredictionRecord>& table,
                                                 const Date& from, const Date& to) {
  auto out = detail::group_errors(table, [&](const PredictionRecord& r) {
    return r.quote_date >= from && r.quote_date <= to
               ? std::optional<std::string>(detail::strike_key(r.strike))
               : std::nullopt;
  });
  std::stable_sort(out.begin(), out.end(), [](const ErrorSummary& a, const ErrorSummary& b) {
    return a.model < b.model || (a.model == b.model && std::stod(a.key) < std::stod(b.key));
  });
  return out;
}

struct SurfaceResult {
  std::vector<VolPoint> points;
  std::vector<double> prices;  // forward-value units, aligned with points
  std::size_t dropped = 0;
  std::size_t extended = 0;    // maturities priced by re-anchoring beyond T
};

/// Implied vols of calls of maturity tau on S_tau = f_tau(B_tau), seen from
/// the calibration date with B_0 = x0. Maturities beyond T are priced only
/// with extend_horizon, by reading the same f_T as the map at horizon tau.
inline SurfaceResult vol_surface(const CmmvModel& model, double x0, const std::vector<double>& maturities,
                                 const std::vector<double>& strikes,
                                 const std::vector<double>& discounts, bool extend_horizon = false) {
  if (discounts.size() != maturities.size()) {
    throw Error(ErrorKind::protocol_misuse, "one discount factor per maturity");
  }
  SurfaceResult out;
  const double forward = model.eval(0.0, x0);
  for (std::size_t m = 0; m < maturities.size(); ++m) {
    const double tau = maturities[m];
    Polynomial map;
    double state = x0;
    if (tau <= model.horizon()) {
      map = model.map_at(tau);
    } else if (extend_horizon) {
      const CmmvModel stretched(model.terminal(), tau);
      map = model.terminal().terminal();
      state = stretched.invert(0.0, forward);
      ++out.extended;
    } else {
      throw Error(ErrorKind::out_of_horizon, "maturity " + std::to_string(tau) +
                                                 " beyond horizon; pass extend_horizon");
    }
    for (double k : strikes) {
      const double price = expected_call(map, state, std::sqrt(tau), k);
      try {
        const double vol = implied_vol(discounts[m] * price, forward, k, tau / 365.0, discounts[m]);
        out.points.push_back({k, tau, vol});
        out.prices.push_back(price);
      } catch (const Error&) {
        ++out.dropped;
      }
    }
  }
  return out;
}

struct SmileCurve {
  double shift = 0.0;
  double spot = 0.0;
  std::vector<double> strikes;
  std::vector<double> vols;
  double min_strike = NAN;
  std::optional<CmmvModel> model;
  std::string failure;
};

/// Location of the minimum of sampled y(x), refined by the parabola through
/// the smallest sample and its neighbours.
inline double curve_minimum(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty()) return NAN;
  const auto i = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  if (i == 0 || i + 1 == x.size()) return x[i];
  const double x0 = x[i - 1], x1 = x[i], x2 = x[i + 1];
  const double y0 = y[i - 1], y1 = y[i], y2 = y[i + 1];
  const double den = (x0 - x1) * (x0 - x2) * (x1 - x2);
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
  return a > 0.0 ? std::clamp(-b / (2.0 * a), x0, x2) : x1;
}

/// Refits f_T through the chain's quantile points with the spot moved to
/// F + shift (the constant of f_T is re-solved so that f_0(0) equals the
/// shifted spot) and reports each implied-vol curve and its minimum.
inline std::vector<SmileCurve> smile_shift(const OptionChain& chain, const std::vector<double>& shifts,
                                           const std::vector<double>& strikes, int degree = 3,
                                           const FitOptions& opt = {}) {
  const double horizon = chain.days_to_expiry;
  const auto points = m1_xi(m1_slopes(chain), horizon);
  const double tau = horizon / 365.0;
  std::vector<SmileCurve> out;
  for (double shift : shifts) {
    SmileCurve c;
    c.shift = shift;
    c.spot = chain.forward() + shift;
    try {
      FitOptions o = opt;
      o.anchor_spot = c.spot;
      const FitResult fit = m1_fit(points.points, degree, horizon, o);
      for (double k : strikes) {
        try {
          const double price = call_price(fit.model, 0.0, 0.0, k);
          c.vols.push_back(implied_vol(chain.discount() * price, c.spot, k, tau, chain.discount()));
          c.strikes.push_back(k);
        } catch (const Error&) {
        }
      }
      c.min_strike = curve_minimum(c.strikes, c.vols);
      c.model = fit.model;
    } catch (const Error& e) {
      c.failure = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace cmmv

#endif  // CMMV_ANALYTICS_HPP
