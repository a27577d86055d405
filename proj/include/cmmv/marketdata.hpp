#ifndef CMMV_MARKETDATA_HPP
#define CMMV_MARKETDATA_HPP

// Option-chain ingestion: CSV rows, mid quotes, discount factor and forward
// from put-call parity, and per-date chains in forward-value units.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cmmv/error.hpp"

namespace cmmv {

struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  std::chrono::sys_days days() const {
    return std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                       std::chrono::day{day}};
  }

  static Date from_days(std::chrono::sys_days d) {
    const std::chrono::year_month_day ymd{d};
    return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
            static_cast<unsigned>(ymd.day())};
  }

  /// Strict YYYY-MM-DD.
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    Date d;
    auto num = [&](std::size_t pos, std::size_t len, auto& out) {
      const auto r = std::from_chars(s.data() + pos, s.data() + pos + len, out);
      return r.ec == std::errc{} && r.ptr == s.data() + pos + len;
    };
    if (!num(0, 4, d.year) || !num(5, 2, d.month) || !num(8, 2, d.day)) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{d.month},
                                          std::chrono::day{d.day}};
    if (!ymd.ok()) return std::nullopt;
    return d;
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
  }

  friend auto operator<=>(const Date& a, const Date& b) {
    return std::tie(a.year, a.month, a.day) <=> std::tie(b.year, b.month, b.day);
  }
  friend bool operator==(const Date&, const Date&) = default;
};

inline int days_between(const Date& from, const Date& to) {
  return static_cast<int>((to.days() - from.days()).count());
}

enum class Side { call, put };

struct RawQuoteRow {
  Date quote_date;
  Date expiry;
  double strike = 0.0;
  Side side = Side::call;
  double bid = 0.0;
  double ask = 0.0;
  long volume = 0;
};

struct RowRejection {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct ParseReport {
  std::vector<RawQuoteRow> rows;
  std::vector<RowRejection> rejections;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '"')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '"' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

}  // namespace detail

/// Reads the chain CSV. Required columns: quote_date, expiry, type, strike,
/// bid, ask, volume; others are ignored. Bad rows are itemized, not dropped.
inline ParseReport parse_chain(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::parse_error, "missing header");
  const auto header = detail::split_csv(line);
  const char* names[] = {"quote_date", "expiry", "type", "strike", "bid", "ask", "volume"};
  std::size_t col[7];
  for (std::size_t k = 0; k < 7; ++k) {
    const auto it = std::find(header.begin(), header.end(), names[k]);
    if (it == header.end()) {
      throw Error(ErrorKind::parse_error, std::string("header lacks column ") + names[k]);
    }
    col[k] = static_cast<std::size_t>(it - header.begin());
  }
  const std::size_t needed = *std::max_element(std::begin(col), std::end(col)) + 1;

  ParseReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    auto reject = [&](std::string reason) { report.rejections.push_back({line_no, std::move(reason)}); };
    if (f.size() < needed) {
      reject("expected at least " + std::to_string(needed) + " fields");
      continue;
    }
    RawQuoteRow row;
    const auto qd = Date::parse(f[col[0]]);
    const auto ex = Date::parse(f[col[1]]);
    if (!qd || !ex) {
      reject("bad date");
      continue;
    }
    row.quote_date = *qd;
    row.expiry = *ex;
    const std::string_view type = f[col[2]];
    if (type == "C" || type == "c" || type == "call") {
      row.side = Side::call;
    } else if (type == "P" || type == "p" || type == "put") {
      row.side = Side::put;
    } else {
      reject("type must be C or P");
      continue;
    }
    if (!detail::parse_number(f[col[3]], row.strike) || !detail::parse_number(f[col[4]], row.bid) ||
        !detail::parse_number(f[col[5]], row.ask) || !detail::parse_number(f[col[6]], row.volume)) {
      reject("non-numeric strike, bid, ask or volume");
      continue;
    }
    if (!(row.strike > 0.0) || !std::isfinite(row.strike)) {
      reject("strike must be positive");
      continue;
    }
    if (!(row.bid >= 0.0) || !std::isfinite(row.ask)) {
      reject("bid must be nonnegative");
      continue;
    }
    if (row.ask < row.bid) {
      reject("ask below bid");
      continue;
    }
    if (row.volume < 0) {
      reject("negative volume");
      continue;
    }
    if (row.expiry < row.quote_date) {
      reject("expiry before quote date");
      continue;
    }
    report.rows.push_back(row);
  }
  return report;
}

inline ParseReport parse_chain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse_error, "cannot open " + path);
  return parse_chain(in);
}

inline double mid(double bid, double ask) { return 0.5 * (bid + ask); }

struct ParityFit {
  double discount = 1.0;
  double forward = 0.0;
  double r_squared = 1.0;
  std::size_t n = 0;

  double spot() const { return discount * forward; }
};

/// OLS of C - P = DF F - DF K on K.
inline ParityFit pcp_regress(const std::vector<double>& strikes, const std::vector<double>& calls,
                             const std::vector<double>& puts) {
  const std::size_t n = strikes.size();
  if (n < 2 || calls.size() != n || puts.size() != n) {
    throw Error(ErrorKind::insufficient_data, "parity regression needs two matched strikes");
  }
  double mk = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mk += strikes[i];
    my += calls[i] - puts[i];
  }
  mk /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double skk = 0.0, sky = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dk = strikes[i] - mk, dy = calls[i] - puts[i] - my;
    skk += dk * dk;
    sky += dk * dy;
    syy += dy * dy;
  }
  if (!(skk > 0.0)) throw Error(ErrorKind::parity_regression_failed, "all strikes coincide");
  const double slope = sky / skk;
  const double intercept = my - slope * mk;
  ParityFit fit;
  fit.n = n;
  fit.discount = -slope;
  fit.forward = intercept / fit.discount;
  fit.r_squared = syy > 0.0 ? sky * sky / (skk * syy) : 1.0;
  std::ostringstream diag;
  diag.precision(10);
  diag << "DF=" << fit.discount << " F=" << fit.forward << " R2=" << fit.r_squared << " n=" << n;
  if (!(fit.discount > 0.0 && fit.discount <= 1.1) || !std::isfinite(fit.forward) ||
      !(fit.forward > 0.0)) {
    throw Error(ErrorKind::parity_regression_failed, "implausible parity fit: " + diag.str());
  }
  if (fit.r_squared < 0.99) {
    throw Error(ErrorKind::parity_regression_failed, "poor parity fit: " + diag.str());
  }
  return fit;
}

struct OptionChain {
  Date quote_date;
  Date expiry;
  int days_to_expiry = 0;
  std::vector<double> strikes;        // strictly increasing
  std::vector<double> call_mids;      // as quoted (discounted)
  std::vector<double> put_mids;       // NaN where no put quote
  std::vector<double> forward_calls;  // call_mids / DF
  ParityFit parity;
  std::size_t dropped_volume = 0;
  std::size_t dropped_arbitrage = 0;

  double discount() const { return parity.discount; }
  double forward() const { return parity.forward; }
  double spot() const { return parity.spot(); }
};

/// Relative slack on the static no-arbitrage band [max(F-K, 0), F].
inline constexpr double kArbitrageSlack = 0.005;

inline OptionChain build_chain(const std::vector<RawQuoteRow>& rows, const Date& quote_date,
                               const Date& expiry, long min_volume = 1) {
  struct Quotes {
    std::optional<double> call, put;
  };
  std::map<double, Quotes> by_strike;
  OptionChain chain;
  chain.quote_date = quote_date;
  chain.expiry = expiry;
  chain.days_to_expiry = days_between(quote_date, expiry);
  bool any = false;
  for (const auto& r : rows) {
    if (r.quote_date != quote_date || r.expiry != expiry) continue;
    any = true;
    if (r.volume < min_volume) {
      ++chain.dropped_volume;
      continue;
    }
    auto& q = by_strike[r.strike];
    (r.side == Side::call ? q.call : q.put) = mid(r.bid, r.ask);
  }
  if (!any) {
    throw Error(ErrorKind::insufficient_data,
                "no rows for " + quote_date.str() + " / " + expiry.str());
  }
  std::vector<double> pk, pc, pp;
  for (const auto& [k, q] : by_strike) {
    if (q.call && q.put) {
      pk.push_back(k);
      pc.push_back(*q.call);
      pp.push_back(*q.put);
    }
  }
  chain.parity = pcp_regress(pk, pc, pp);
  const double df = chain.parity.discount, fwd = chain.parity.forward;
  double last = INFINITY;
  for (const auto& [k, q] : by_strike) {
    if (!q.call) continue;
    const double c = *q.call / df;
    const double lo = std::max(fwd - k, 0.0) - kArbitrageSlack * fwd;
    const double hi = fwd * (1.0 + kArbitrageSlack);
    if (c < lo || c > hi || c > last) {
      ++chain.dropped_arbitrage;
      continue;
    }
    last = c;
    chain.strikes.push_back(k);
    chain.call_mids.push_back(*q.call);
    chain.put_mids.push_back(q.put ? *q.put : NAN);
    chain.forward_calls.push_back(c);
  }
  if (chain.strikes.empty()) {
    throw Error(ErrorKind::insufficient_data, "no call strikes survive cleaning");
  }
  return chain;
}

/// All (quote_date, expiry) pairs present in the rows, sorted.
inline std::vector<std::pair<Date, Date>> chain_keys(const std::vector<RawQuoteRow>& rows) {
  std::vector<std::pair<Date, Date>> keys;
  for (const auto& r : rows) keys.emplace_back(r.quote_date, r.expiry);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

inline void to_json(nlohmann::json& j, const Date& d) { j = d.str(); }

inline void from_json(const nlohmann::json& j, Date& d) {
  const auto parsed = Date::parse(j.get<std::string>());
  if (!parsed) throw Error(ErrorKind::schema_mismatch, "bad date " + j.dump());
  d = *parsed;
}

inline nlohmann::json chain_to_json(const OptionChain& c) {
  nlohmann::json puts = nlohmann::json::array();
  for (double p : c.put_mids) puts.push_back(std::isnan(p) ? nlohmann::json(nullptr) : nlohmann::json(p));
  return {{"quote_date", c.quote_date},
          {"expiry", c.expiry},
          {"days_to_expiry", c.days_to_expiry},
          {"strikes", c.strikes},
          {"call_mids", c.call_mids},
          {"put_mids", puts},
          {"forward_calls", c.forward_calls},
          {"discount", c.parity.discount},
          {"forward", c.parity.forward},
          {"r_squared", c.parity.r_squared},
          {"parity_points", c.parity.n},
          {"dropped_volume", c.dropped_volume},
          {"dropped_arbitrage", c.dropped_arbitrage}};
}

inline OptionChain chain_from_json(const nlohmann::json& j) {
  try {
    OptionChain c;
    c.quote_date = j.at("quote_date").get<Date>();
    c.expiry = j.at("expiry").get<Date>();
    c.days_to_expiry = j.at("days_to_expiry").get<int>();
    c.strikes = j.at("strikes").get<std::vector<double>>();
    c.call_mids = j.at("call_mids").get<std::vector<double>>();
    for (const auto& p : j.at("put_mids")) c.put_mids.push_back(p.is_null() ? NAN : p.get<double>());
    c.forward_calls = j.at("forward_calls").get<std::vector<double>>();
    c.parity.discount = j.at("discount").get<double>();
    c.parity.forward = j.at("forward").get<double>();
    c.parity.r_squared = j.at("r_squared").get<double>();
    c.parity.n = j.at("parity_points").get<std::size_t>();
    c.dropped_volume = j.at("dropped_volume").get<std::size_t>();
    c.dropped_arbitrage = j.at("dropped_arbitrage").get<std::size_t>();
    const std::size_t n = c.strikes.size();
    if (c.call_mids.size() != n || c.put_mids.size() != n || c.forward_calls.size() != n) {
      throw Error(ErrorKind::schema_mismatch, "chain arrays differ in length");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("chain JSON: ") + e.what());
  }
}

}  // namespace cmmv

#endif  // CMMV_MARKETDATA_HPP
