#ifndef CMMV_SYNTHETIC_HPP
#define CMMV_SYNTHETIC_HPP

// Synthetic markets generated by a known CMMV model: one Brownian path of
// daily increments, option quotes on every date, and the matching series of
// discounted spot and option prices.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <vector>

#include "cmmv/core.hpp"
#include "cmmv/marketdata.hpp"
#include "cmmv/pricing.hpp"
#include "cmmv/rng.hpp"

namespace cmmv {

struct SyntheticConfig {
  Date start{2016, 1, 18};
  std::vector<double> strikes;
  std::size_t n_dates = 0;        // quote dates start, start+1, ...; 0 means up to T-1
  double rate = 0.01;             // continuous, annualized on 365 days
  double half_spread = 0.0;       // absolute half bid-ask spread
  double noise = 0.0;             // multiplicative noise on mids
  long volume = 100;
  std::uint64_t seed = 1;
};

struct SyntheticMarket {
  CmmvModel truth;
  Date expiry;
  std::vector<double> brownian;   // B at day d
  std::vector<double> forward;    // f_d(B_d)
  std::vector<double> discount;   // DF at day d
  std::vector<RawQuoteRow> rows;
};

/// Evenly spaced strikes lo, ..., hi.
inline std::vector<double> strike_grid(double lo, double hi, std::size_t n) {
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) {
    k[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return k;
}

inline double synthetic_discount(double rate, double days_left) {
  return std::exp(-rate * days_left / 365.0);
}

inline SyntheticMarket synthesize_market(const CmmvModel& truth, const SyntheticConfig& cfg) {
  const auto horizon_days = static_cast<std::size_t>(std::llround(truth.horizon()));
  const std::size_t n_dates = cfg.n_dates == 0 ? horizon_days : std::min(cfg.n_dates, horizon_days);
  SyntheticMarket m{truth, Date::from_days(cfg.start.days() + std::chrono::days(horizon_days)),
                    {}, {}, {}, {}};
  CounterRng path_rng(cfg.seed, 0);
  CounterRng noise_rng(cfg.seed, 1);
  double b = 0.0;
  for (std::size_t d = 0; d < n_dates; ++d) {
    if (d > 0) b += path_rng.normal();
    const double t = static_cast<double>(d);
    const double fwd = truth.eval(t, b);
    const double df = synthetic_discount(cfg.rate, truth.horizon() - t);
    m.brownian.push_back(b);
    m.forward.push_back(fwd);
    m.discount.push_back(df);
    const Date qd = Date::from_days(cfg.start.days() + std::chrono::days(d));
    for (double k : cfg.strikes) {
      const double call = call_price(truth, t, b, k);
      const double put = std::max(call - (fwd - k), 0.0);
      for (const auto& [side, value] : {std::pair{Side::call, call}, std::pair{Side::put, put}}) {
        double q = df * value;
        if (cfg.noise > 0.0) q *= 1.0 + cfg.noise * noise_rng.normal();
        q = std::max(q, 0.0);
        const double bid = std::max(q - cfg.half_spread, 0.0);
        m.rows.push_back({qd, m.expiry, k, side, bid, q + (q - bid), cfg.volume});
      }
    }
  }
  return m;
}

inline void write_chain_csv(std::ostream& out, const std::vector<RawQuoteRow>& rows) {
  const auto old = out.precision(10);
  out << "quote_date,expiry,type,strike,bid,ask,volume\n";
  for (const auto& r : rows) {
    out << r.quote_date.str() << ',' << r.expiry.str() << ',' << (r.side == Side::call ? 'C' : 'P')
        << ',' << r.strike << ',' << r.bid << ',' << r.ask << ',' << r.volume << '\n';
  }
  out.precision(old);
}

}  // namespace cmmv

#endif  // CMMV_SYNTHETIC_HPP
