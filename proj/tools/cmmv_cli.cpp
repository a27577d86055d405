#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmmv/analytics.hpp"
#include "cmmv/cmaes.hpp"
#include "cmmv/simulate.hpp"
#include "cmmv/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cmmv;
using nlohmann::json;

namespace {

constexpr int kExitData = 2, kExitCalibration = 3, kExitUsage = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::fit_failed:
    case ErrorKind::covariance_degenerate:
    case ErrorKind::flat_region:
    case ErrorKind::invalid_parameterization:
      return kExitCalibration;
    case ErrorKind::protocol_misuse:
      return kExitUsage;
    default:
      return kExitData;
  }
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double round10(double v) { return std::isfinite(v) ? std::stod(num(v)) : v; }

using Cell = std::variant<std::string, double, long long>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  return num(std::get<double>(c));
}

json cell_json(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<long long>(&c)) return *i;
  const double v = std::get<double>(c);
  return std::isfinite(v) ? json(round10(v)) : json(nullptr);
}

/// Rounds every floating value of a report to 10 significant digits.
json rounded(const json& j) {
  if (j.is_number_float()) return round10(j.get<double>());
  if (j.is_array() || j.is_object()) {
    json out = j;
    for (auto& v : out) v = rounded(v);
    return out;
  }
  return j;
}

struct Output {
  fs::path dir = ".";
  std::string format = "csv";

  fs::path write_table(const std::string& stem, const Table& t) const {
    const fs::path path = dir / (stem + "." + format);
    std::ofstream out(path);
    if (format == "csv") {
      for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
      out << '\n';
      for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_text(row[i]);
        out << '\n';
      }
    } else {
      json arr = json::array();
      for (const auto& row : t.rows) {
        json obj = json::object();
        for (std::size_t i = 0; i < row.size(); ++i) obj[t.header[i]] = cell_json(row[i]);
        arr.push_back(std::move(obj));
      }
      out << arr.dump(2) << '\n';
    }
    if (!out) throw Error(ErrorKind::parse_error, "cannot write " + path.string());
    std::cout << "wrote " << path.string() << " (" << t.rows.size() << " rows)\n";
    return path;
  }

  fs::path write_json(const std::string& name, const json& j) const {
    const fs::path path = dir / name;
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::parse_error, "cannot write " + path.string());
    std::cout << "wrote " << path.string() << '\n';
    return path;
  }
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse_error, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse_error, path + ": " + e.what());
  }
}

Date parse_date(const std::string& s) {
  const auto d = Date::parse(s);
  if (!d) throw Error(ErrorKind::protocol_misuse, "bad date " + s);
  return *d;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::protocol_misuse, "bad number '" + item + "' in " + s);
    }
  }
  return out;
}

/// "lo:hi:n" evenly spaced strikes.
std::vector<double> parse_grid(const std::string& s) {
  std::string text = s;
  std::replace(text.begin(), text.end(), ':', ',');
  const auto v = parse_list(text);
  if (v.size() != 3 || !(v[2] >= 1.0) || v[1] < v[0]) {
    throw Error(ErrorKind::protocol_misuse, "strike grid must be lo:hi:n, got " + s);
  }
  return strike_grid(v[0], v[1], static_cast<std::size_t>(v[2]));
}

struct ChainSet {
  std::vector<OptionChain> chains;
  Table skipped{{"quote_date", "expiry", "reason"}, {}};
};

/// Chains from a raw quote CSV or from the JSON written by `ingest`,
/// optionally restricted to one expiry.
ChainSet load_chains(const std::string& path, const std::string& expiry, long min_volume = 1) {
  ChainSet set;
  const bool filter = !expiry.empty();
  const Date want = filter ? parse_date(expiry) : Date{};
  if (fs::path(path).extension() == ".json") {
    json j = read_json(path);
    if (!j.is_array()) j = json::array({j});
    for (const auto& c : j) {
      auto chain = chain_from_json(c);
      if (!filter || chain.expiry == want) set.chains.push_back(std::move(chain));
    }
  } else {
    const auto report = parse_chain_file(path);
    for (const auto& [q, e] : chain_keys(report.rows)) {
      if (filter && e != want) continue;
      try {
        set.chains.push_back(build_chain(report.rows, q, e, min_volume));
      } catch (const Error& err) {
        set.skipped.add({q.str(), e.str(), std::string(err.what())});
      }
    }
  }
  std::stable_sort(set.chains.begin(), set.chains.end(), [](const auto& a, const auto& b) {
    return a.expiry < b.expiry || (a.expiry == b.expiry && a.quote_date < b.quote_date);
  });
  if (set.chains.empty()) throw Error(ErrorKind::insufficient_data, "no usable chains in " + path);
  if (!filter && set.chains.front().expiry != set.chains.back().expiry) {
    throw Error(ErrorKind::protocol_misuse, "several expiries in input; pass --expiry");
  }
  return set;
}

const OptionChain& pick_chain(const std::vector<OptionChain>& chains, const std::string& quote_date) {
  if (quote_date.empty()) return chains.front();
  const Date d = parse_date(quote_date);
  for (const auto& c : chains) {
    if (c.quote_date == d) return c;
  }
  throw Error(ErrorKind::insufficient_data, "no chain quoted on " + quote_date);
}

PricingModel load_model(const std::string& path) { return pricing_model_from_json(read_json(path)); }

Table trace_table(const std::vector<GenerationRecord>& trace) {
  Table t{{"generation", "evaluations", "best_value", "sigma"}, {}};
  for (const auto& r : trace) {
    t.add({static_cast<long long>(r.generation), static_cast<long long>(r.evaluations), r.best_value,
           r.sigma});
  }
  return t;
}

Table selection_table(const DegreeSelection& sel) {
  Table t{{"degree", "test_error", "selected", "failure"}, {}};
  for (const auto& s : sel.scores) {
    t.add({static_cast<long long>(s.degree), s.test_error,
           static_cast<long long>(s.degree == sel.degree), s.failure});
  }
  return t;
}

Table coefficient_table(const CmmvModel& m) {
  Table t{{"power", "coefficient"}, {}};
  const auto c = m.terminal().terminal().coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) t.add({static_cast<long long>(i), c[i]});
  return t;
}

struct Common {
  std::string input, out_dir = ".", format = "csv", quote_date, expiry;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_input = true) {
  if (with_input) cmd->add_option("--input", c.input, "quote CSV or chains JSON")->required();
  cmd->add_option("--out-dir", c.out_dir, "output directory");
  cmd->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--seed", c.seed, "random seed");
}

Output make_output(const Common& c) {
  fs::create_directories(c.out_dir);
  return Output{c.out_dir, c.format};
}

void save_fit(const Output& out, ModelKind kind, const OptionChain& chain, const FitResult& fit,
              int degree, const std::string& split, const std::optional<DegreeSelection>& sel,
              const json& extra = json::object()) {
  PricingModel pm;
  pm.kind = kind;
  pm.quote_date = chain.quote_date;
  pm.expiry = chain.expiry;
  pm.cmmv = fit.model;
  pm.report = rounded(fit_report(to_string(kind), degree, fit, split));
  pm.report.erase("trace");
  pm.report.erase("residuals");
  pm.report.update(rounded(extra));
  const std::string stem = "model_" + to_string(kind);
  out.write_json(stem + ".json", pricing_model_to_json(pm));
  out.write_table(stem + "_coefficients", coefficient_table(fit.model));
  out.write_table(stem + "_trace", trace_table(fit.trace));
  if (sel) out.write_table(stem + "_degree_selection", selection_table(*sel));
}

// Subcommand bodies ----------------------------------------------------------

struct SynthesizeArgs {
  Common c;
  std::string truth, strikes = "1200:2600:96";
  double spot = 2100.0, horizon = 184.0, rate = 0.01, noise = 0.0, half_spread = 0.05;
  std::size_t dates = 0;
};

int run_synthesize(const SynthesizeArgs& a) {
  const Output out = make_output(a.c);
  CmmvModel truth = [&] {
    if (!a.truth.empty()) return *load_model(a.truth).cmmv;
    const IncreasingPolynomial shape(0.0, {4.0, -0.03}, {1.0});
    const double shift = a.spot - shape.terminal().gaussian_convolution(a.horizon)(0.0);
    return CmmvModel(IncreasingPolynomial(shift, {4.0, -0.03}, {1.0}), a.horizon);
  }();
  SyntheticConfig cfg;
  cfg.strikes = parse_grid(a.strikes);
  cfg.n_dates = a.dates;
  cfg.rate = a.rate;
  cfg.noise = a.noise;
  cfg.half_spread = a.half_spread;
  cfg.seed = a.c.seed;
  const auto m = synthesize_market(truth, cfg);

  const fs::path quotes = out.dir / "quotes.csv";
  std::ofstream q(quotes);
  write_chain_csv(q, m.rows);
  std::cout << "wrote " << quotes.string() << " (" << m.rows.size() << " rows)\n";

  PricingModel pm;
  pm.kind = ModelKind::m1;
  pm.quote_date = cfg.start;
  pm.expiry = m.expiry;
  pm.cmmv = truth;
  pm.report = {{"method", "truth"}};
  out.write_json("truth.json", pricing_model_to_json(pm));
  Table state{{"day", "brownian", "forward", "discount"}, {}};
  for (std::size_t d = 0; d < m.forward.size(); ++d) {
    state.add({static_cast<long long>(d), m.brownian[d], m.forward[d], m.discount[d]});
  }
  out.write_table("state", state);
  return 0;
}

struct IngestArgs {
  Common c;
  long min_volume = 1;
};

int run_ingest(const IngestArgs& a) {
  const Output out = make_output(a.c);
  const auto report = parse_chain_file(a.c.input);
  Table rejected{{"line", "reason"}, {}};
  for (const auto& r : report.rejections) rejected.add({static_cast<long long>(r.line), r.reason});
  out.write_table("rejections", rejected);
  const auto set = load_chains(a.c.input, a.c.expiry, a.min_volume);
  Table summary{{"quote_date", "expiry", "days_to_expiry", "strikes", "discount", "forward", "r_squared",
                 "dropped_volume", "dropped_arbitrage"},
                {}};
  json chains = json::array();
  for (const auto& c : set.chains) {
    summary.add({c.quote_date.str(), c.expiry.str(), static_cast<long long>(c.days_to_expiry),
                 static_cast<long long>(c.strikes.size()), c.discount(), c.forward(), c.parity.r_squared,
                 static_cast<long long>(c.dropped_volume), static_cast<long long>(c.dropped_arbitrage)});
    chains.push_back(chain_to_json(c));
  }
  out.write_table("chains", summary);
  out.write_table("skipped_chains", set.skipped);
  out.write_json("chains.json", chains);
  return 0;
}

struct CalibrateArgs {
  Common c;
  int degree = 3;
  bool cv = false;
  double strike = 0.0;
  std::size_t train = 44;
};

int run_calibrate_m1(const CalibrateArgs& a) {
  const Output out = make_output(a.c);
  const auto set = load_chains(a.c.input, a.c.expiry);
  const OptionChain& chain = pick_chain(set.chains, a.c.quote_date);
  FitOptions opt;
  opt.seed = a.c.seed;
  const auto points = m1_xi(m1_slopes(chain), chain.days_to_expiry);
  std::optional<DegreeSelection> sel;
  int degree = a.degree;
  if (a.cv) {
    sel = select_degree_m1(points.points, chain.days_to_expiry, {1, 3, 5, 7}, opt);
    degree = sel->degree;
  }
  const auto fit = m1_fit(points.points, degree, chain.days_to_expiry, opt);
  save_fit(out, ModelKind::m1, chain, fit, degree, sel ? sel->split : "", sel);
  return 0;
}

M2Dataset m2_dataset(const std::vector<OptionChain>& chains, const OptionChain& first, double strike,
                     std::size_t count) {
  if (first.strikes.empty()) throw Error(ErrorKind::insufficient_data, "empty chain");
  const double k = *std::min_element(first.strikes.begin(), first.strikes.end(), [&](double x, double y) {
    return std::abs(x - strike) < std::abs(y - strike);
  });
  M2Dataset d;
  d.strike = k;
  d.horizon = first.days_to_expiry;
  for (const auto& c : chains) {
    if (c.quote_date < first.quote_date || d.size() == count) continue;
    const auto it = std::find(c.strikes.begin(), c.strikes.end(), k);
    if (it == c.strikes.end()) continue;
    d.times.push_back(days_between(first.quote_date, c.quote_date));
    d.stock.push_back(c.forward());
    d.option.push_back(c.forward_calls[static_cast<std::size_t>(it - c.strikes.begin())]);
  }
  if (d.size() < count) {
    throw Error(ErrorKind::insufficient_data, "only " + std::to_string(d.size()) +
                                                  " dates quote strike " + num(k));
  }
  return d;
}

int run_calibrate_m2(const CalibrateArgs& a) {
  const Output out = make_output(a.c);
  const auto set = load_chains(a.c.input, a.c.expiry);
  const OptionChain& first = pick_chain(set.chains, a.c.quote_date);
  const M2Dataset data = m2_dataset(set.chains, first, a.strike, a.train);
  FitOptions opt = m2_default_options();
  opt.seed = a.c.seed;
  std::optional<DegreeSelection> sel;
  int degree = a.degree;
  if (a.cv) {
    sel = select_degree_m2(data, {1, 3, 5, 7}, 0.3, opt);
    degree = sel->degree;
  }
  const auto fit = m2_calibrate(data, degree, opt);
  std::cout << "strike " << num(data.strike) << ", " << data.size() << " observations\n";
  save_fit(out, ModelKind::m2, first, fit, degree, sel ? sel->split : "", sel,
           {{"strike", data.strike}, {"observations", data.size()}});
  return 0;
}

int run_fit_ss(const CalibrateArgs& a) {
  const Output out = make_output(a.c);
  const auto set = load_chains(a.c.input, a.c.expiry);
  const OptionChain& chain = pick_chain(set.chains, a.c.quote_date);
  PricingModel pm;
  pm.kind = ModelKind::ss;
  pm.quote_date = chain.quote_date;
  pm.expiry = chain.expiry;
  pm.smile = fit_smile(chain, a.degree);
  pm.report = {{"method", "ss"}, {"degree", a.degree}, {"rms", round10(pm.smile->rms)}};
  out.write_json("model_ss.json", pricing_model_to_json(pm));
  return 0;
}

std::vector<PredictionRecord> predict_all(const std::vector<std::string>& models,
                                          const std::vector<OptionChain>& chains) {
  std::vector<PredictionRecord> table;
  for (const auto& path : models) {
    const PricingModel m = load_model(path);
    std::vector<OptionChain> usable;
    for (const auto& c : chains) {
      if (c.expiry == m.expiry && c.quote_date >= m.quote_date) usable.push_back(c);
    }
    if (usable.empty()) {
      throw Error(ErrorKind::insufficient_data, "no chains for the expiry and dates of " + path);
    }
    const auto rows = predict(m, usable);
    table.insert(table.end(), rows.begin(), rows.end());
  }
  return table;
}

struct PredictArgs {
  Common c;
  std::vector<std::string> models;
  std::string from, to;
};

int run_predict(const PredictArgs& a) {
  const Output out = make_output(a.c);
  const auto set = load_chains(a.c.input, a.c.expiry);
  Table t{{"model", "quote_date", "strike", "observed", "predicted", "abs_error", "rel_error", "note"}, {}};
  for (const auto& r : predict_all(a.models, set.chains)) {
    t.add({r.model, r.quote_date.str(), r.strike, r.observed, r.predicted, r.abs_error, r.rel_error,
           r.note});
  }
  out.write_table("predictions", t);
  return 0;
}

Table summary_table(const std::vector<ErrorSummary>& rows, const std::string& key) {
  Table t{{"model", key, "count", "mean_abs_error", "mean_observed", "relative_error"}, {}};
  for (const auto& s : rows) {
    t.add({s.model, s.key, static_cast<long long>(s.count), s.mean_abs_error, s.mean_observed,
           s.relative_error()});
  }
  return t;
}

int run_errors(const PredictArgs& a) {
  const Output out = make_output(a.c);
  const auto set = load_chains(a.c.input, a.c.expiry);
  const auto table = predict_all(a.models, set.chains);
  const Date from = a.from.empty() ? set.chains.front().quote_date : parse_date(a.from);
  const Date to = a.to.empty() ? set.chains.back().quote_date : parse_date(a.to);
  out.write_table("errors_by_date", summary_table(error_by_date(table), "quote_date"));
  out.write_table("errors_by_strike", summary_table(error_by_strike(table, from, to), "strike"));
  return 0;
}

struct SurfaceArgs {
  Common c;
  std::string model, maturities = "30,58,93,121,149,184,240,331", strikes = "1200:2600:29";
  double rate = 0.01;
  std::optional<double> spot;
  bool extend = false;
};

int run_surface(const SurfaceArgs& a) {
  const Output out = make_output(a.c);
  const PricingModel pm = load_model(a.model);
  if (!pm.cmmv) throw Error(ErrorKind::protocol_misuse, "surface needs a CMMV model");
  const auto maturities = parse_list(a.maturities);
  std::vector<double> discounts;
  for (double tau : maturities) discounts.push_back(synthetic_discount(a.rate, tau));
  const double x0 = a.spot ? pm.cmmv->invert(0.0, *a.spot) : 0.0;
  const auto s = vol_surface(*pm.cmmv, x0, maturities, parse_grid(a.strikes), discounts, a.extend);
  Table t{{"maturity_days", "strike", "implied_vol", "forward_price"}, {}};
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    t.add({s.points[i].maturity_days, s.points[i].strike, s.points[i].implied_vol, s.prices[i]});
  }
  out.write_table("surface", t);
  std::cout << "dropped " << s.dropped << " points, extended " << s.extended << " maturities\n";
  return 0;
}

struct SmileArgs {
  Common c;
  std::string shifts = "-100,0,62", strikes;
  int degree = 3;
};

int run_smile_shift(const SmileArgs& a) {
  const Output out = make_output(a.c);
  const auto set = load_chains(a.c.input, a.c.expiry);
  const OptionChain& chain = pick_chain(set.chains, a.c.quote_date);
  const auto strikes = a.strikes.empty()
                           ? strike_grid(chain.strikes.front(), chain.strikes.back(), 57)
                           : parse_grid(a.strikes);
  FitOptions opt;
  opt.seed = a.c.seed;
  const auto curves = smile_shift(chain, parse_list(a.shifts), strikes, a.degree, opt);
  Table points{{"shift", "spot", "strike", "implied_vol"}, {}};
  Table minima{{"shift", "spot", "min_strike", "failure"}, {}};
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.vols.size(); ++i) points.add({c.shift, c.spot, c.strikes[i], c.vols[i]});
    minima.add({c.shift, c.spot, c.min_strike, c.failure});
  }
  out.write_table("smile_curves", points);
  out.write_table("smile_minima", minima);
  return 0;
}

struct SimulateArgs {
  Common c;
  std::string model;
  std::size_t steps = 184, paths = 1, stride = 1;
  std::optional<double> t1;
};

int run_simulate(const SimulateArgs& a) {
  const Output out = make_output(a.c);
  const PricingModel pm = load_model(a.model);
  if (!pm.cmmv) throw Error(ErrorKind::protocol_misuse, "simulate needs a CMMV model");
  const double t1 = a.t1.value_or(pm.cmmv->horizon() - 1.0);
  const auto paths = simulate_paths(*pm.cmmv, a.steps, t1, a.paths, a.c.seed);
  Table t{{"path", "t", "brownian", "price"}, {}};
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (std::size_t i = 0; i < paths[p].brownian.size(); i += std::max<std::size_t>(a.stride, 1)) {
      t.add({static_cast<long long>(p), paths[p].time(i), paths[p].brownian[i], paths[p].price[i]});
    }
  }
  out.write_table("paths", t);
  return 0;
}

PathGrid read_path_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse_error, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  const auto header = detail::split_csv(line);
  auto column = [&](std::string_view name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::parse_error, path + ": missing column " + std::string(name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ct = column("t"), cs = column("S");
  const bool has_b = std::find(header.begin(), header.end(), "B") != header.end();
  const std::size_t cb = has_b ? column("B") : 0;
  std::vector<double> t;
  PathGrid g;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    auto value = [&](std::size_t i) {
      double v = 0.0;
      if (i >= f.size() || !detail::parse_number(f[i], v)) {
        throw Error(ErrorKind::parse_error, path + ": bad row " + line);
      }
      return v;
    };
    t.push_back(value(ct));
    g.price.push_back(value(cs));
    g.brownian.push_back(has_b ? value(cb) : NAN);
  }
  if (t.size() < 2) throw Error(ErrorKind::insufficient_data, path + ": path too short");
  g.dt = t[1] - t[0];
  return g;
}

struct RecoverArgs {
  Common c;
  std::string model, path;
  std::size_t steps = 1'000'000, first_window = 3000, levels = 4;
  std::optional<double> horizon, t1;
};

int run_recover(const RecoverArgs& a) {
  const Output out = make_output(a.c);
  std::optional<CmmvModel> truth;
  if (!a.model.empty()) truth = load_model(a.model).cmmv;
  PathGrid path;
  double horizon = 0.0;
  if (!a.path.empty()) {
    path = read_path_csv(a.path);
    if (!a.horizon && !truth) throw Error(ErrorKind::protocol_misuse, "--horizon needed with --path");
    horizon = a.horizon.value_or(truth ? truth->horizon() : 0.0);
  } else if (truth) {
    horizon = truth->horizon();
    path = simulate_paths(*truth, a.steps, a.t1.value_or(horizon - 1.0), 1, a.c.seed).front();
  } else {
    throw Error(ErrorKind::protocol_misuse, "recover needs --path or --model");
  }
  RecoveryConfig cfg;
  cfg.first_window = a.first_window;
  cfg.n_max = a.levels;
  const auto r = recover_path(path, horizon, cfg);
  Table t{{"order", "estimate", "truth", "relative_error"}, {}};
  for (std::size_t k = 0; k < r.derivatives.size(); ++k) {
    const double exact = truth ? truth->derivative(k, 0.0, 0.0) : NAN;
    t.add({static_cast<long long>(k), r.derivatives[k], exact, std::abs(r.derivatives[k] / exact - 1.0)});
  }
  out.write_table("recovery", t);
  Table series{{"t", "bhat", "s1"}, {}};
  const std::size_t stride = std::max<std::size_t>(path.steps() / 1000, 1);
  for (std::size_t i = 0; i < r.bhat.size(); i += stride) series.add({path.time(i), r.bhat[i], r.levels[0][i]});
  out.write_table("recovery_series", series);
  return 0;
}

struct BenchmarkArgs {
  Common c;
  std::string function = "sphere";
  std::size_t dimension = 10, budget = 0;
  double target = 0.0, sigma0 = 0.5;
};

int run_benchmark(const BenchmarkArgs& a) {
  const Output out = make_output(a.c);
  const bool rosen = a.function == "rosenbrock";
  const Objective f = [rosen](const Vector& x) {
    if (!rosen) return x.squaredNorm();
    double acc = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      acc += 100.0 * std::pow(x(i + 1) - x(i) * x(i), 2) + std::pow(1.0 - x(i), 2);
    }
    return acc;
  };
  auto cfg = CmaEsConfig::defaults(a.dimension, a.sigma0, a.c.seed);
  cfg.target = a.target > 0.0 ? a.target : (rosen ? 1e-6 : 1e-10);
  cfg.max_evaluations = a.budget > 0 ? a.budget : (rosen ? 100'000 : 2000);
  const auto d = static_cast<Eigen::Index>(a.dimension);
  const auto r = minimize(f, rosen ? Vector(Vector::Zero(d)) : Vector(Vector::Ones(d)), cfg);
  const fs::path trace = out.dir / "cma_trace.csv";
  std::ofstream tf(trace);
  write_trace_csv(tf, r.history);
  std::cout << "wrote " << trace.string() << " (" << r.history.size() << " rows)\n";
  Table s{{"function", "dimension", "seed", "best_value", "evaluations", "generations", "termination"}, {}};
  s.add({a.function, static_cast<long long>(a.dimension), static_cast<long long>(a.c.seed), r.best_value,
         static_cast<long long>(r.evaluations), static_cast<long long>(r.generations),
         std::string(to_string(r.termination))});
  out.write_table("cma_summary", s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CMMV calibration and pricing toolkit"};
  app.require_subcommand(1);

  SynthesizeArgs syn;
  auto* c_syn = app.add_subcommand("synthesize", "quote CSV priced from a known CMMV model");
  add_common(c_syn, syn.c, false);
  c_syn->add_option("--truth", syn.truth, "model JSON to price from (default: built-in cubic)");
  c_syn->add_option("--strikes", syn.strikes, "strike grid lo:hi:n");
  c_syn->add_option("--spot", syn.spot, "f_0(0) of the built-in model");
  c_syn->add_option("--horizon", syn.horizon, "T in days of the built-in model");
  c_syn->add_option("--dates", syn.dates, "number of quote dates (0: up to T-1)");
  c_syn->add_option("--rate", syn.rate, "continuous annual rate");
  c_syn->add_option("--noise", syn.noise, "multiplicative mid noise");
  c_syn->add_option("--half-spread", syn.half_spread, "absolute half bid-ask spread");

  IngestArgs ing;
  auto* c_ing = app.add_subcommand("ingest", "parse quotes and build parity-adjusted chains");
  add_common(c_ing, ing.c);
  c_ing->add_option("--expiry", ing.c.expiry, "keep one expiry");
  c_ing->add_option("--min-volume", ing.min_volume, "minimum traded volume");

  CalibrateArgs m1, m2, ss;
  ss.degree = 4;
  auto* c_m1 = app.add_subcommand("calibrate-m1", "fit f_T to one date's call prices");
  auto* c_m2 = app.add_subcommand("calibrate-m2", "fit f_T to a spot and single-strike series");
  auto* c_ss = app.add_subcommand("fit-ss", "fit the sticky-strike smile");
  for (auto [cmd, args] : {std::pair{c_m1, &m1}, std::pair{c_m2, &m2}, std::pair{c_ss, &ss}}) {
    add_common(cmd, args->c);
    cmd->add_option("--quote-date", args->c.quote_date, "calibration date (default: first)");
    cmd->add_option("--expiry", args->c.expiry, "option expiry");
  }
  for (auto [cmd, args] : {std::pair{c_m1, &m1}, std::pair{c_m2, &m2}}) {
    auto* deg = cmd->add_option("--degree", args->degree, "odd polynomial degree");
    cmd->add_flag("--cv", args->cv, "choose the degree on held-out data")->excludes(deg);
  }
  c_ss->add_option("--degree", ss.degree, "smile polynomial degree");
  c_m2->add_option("--strike", m2.strike, "option strike")->required();
  c_m2->add_option("--train", m2.train, "number of observations");

  PredictArgs pred, errs;
  auto* c_pred = app.add_subcommand("predict", "predicted prices on every date and strike");
  auto* c_err = app.add_subcommand("errors", "prediction errors by date and by strike");
  for (auto [cmd, args] : {std::pair{c_pred, &pred}, std::pair{c_err, &errs}}) {
    add_common(cmd, args->c);
    cmd->add_option("--expiry", args->c.expiry, "option expiry");
    cmd->add_option("--model", args->models, "model JSON (repeatable)")->required();
  }
  c_err->add_option("--from", errs.from, "first date of the by-strike window");
  c_err->add_option("--to", errs.to, "last date of the by-strike window");

  SurfaceArgs surf;
  auto* c_surf = app.add_subcommand("surface", "implied-vol surface of a calibrated model");
  add_common(c_surf, surf.c, false);
  c_surf->add_option("--model", surf.model, "model JSON")->required();
  c_surf->add_option("--maturities", surf.maturities, "comma-separated days");
  c_surf->add_option("--strikes", surf.strikes, "strike grid lo:hi:n");
  c_surf->add_option("--rate", surf.rate, "continuous annual rate for discounting");
  c_surf->add_option("--spot", surf.spot, "spot at the calibration date (default: f_0(0))");
  c_surf->add_flag("--extend-horizon", surf.extend, "price maturities beyond T by re-anchoring f_T");

  SmileArgs smile;
  auto* c_smile = app.add_subcommand("smile-shift", "refit with shifted spot and compare smiles");
  add_common(c_smile, smile.c);
  c_smile->add_option("--quote-date", smile.c.quote_date, "calibration date (default: first)");
  c_smile->add_option("--expiry", smile.c.expiry, "option expiry");
  c_smile->add_option("--shifts", smile.shifts, "comma-separated spot shifts");
  c_smile->add_option("--strikes", smile.strikes, "strike grid lo:hi:n");
  c_smile->add_option("--degree", smile.degree, "odd polynomial degree");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate price paths of a model");
  add_common(c_sim, sim.c, false);
  c_sim->add_option("--model", sim.model, "model JSON")->required();
  c_sim->add_option("--steps", sim.steps, "time steps");
  c_sim->add_option("--paths", sim.paths, "number of paths");
  c_sim->add_option("--t1", sim.t1, "last observation time in days (default: T-1)");
  c_sim->add_option("--stride", sim.stride, "write every n-th point");

  RecoverArgs rec;
  auto* c_rec = app.add_subcommand("recover", "estimate f_0 derivatives from one price path");
  add_common(c_rec, rec.c, false);
  c_rec->add_option("--model", rec.model, "model JSON to simulate from and compare to");
  c_rec->add_option("--path", rec.path, "path CSV with columns t,S");
  c_rec->add_option("--horizon", rec.horizon, "T in days when no model is given");
  c_rec->add_option("--steps", rec.steps, "steps of the simulated path");
  c_rec->add_option("--t1", rec.t1, "length of the simulated path in days (default: T-1)");
  c_rec->add_option("--window", rec.first_window, "first QV window");
  c_rec->add_option("--levels", rec.levels, "highest derivative order");

  BenchmarkArgs bench;
  auto* c_bench = app.add_subcommand("benchmark-cma", "CMA-ES on sphere or Rosenbrock");
  add_common(c_bench, bench.c, false);
  c_bench->add_option("--function", bench.function)->check(CLI::IsMember({"sphere", "rosenbrock"}));
  c_bench->add_option("--dimension", bench.dimension)->check(CLI::PositiveNumber);
  c_bench->add_option("--budget", bench.budget, "evaluation budget");
  c_bench->add_option("--target", bench.target, "stop below this value");
  c_bench->add_option("--sigma0", bench.sigma0, "initial step size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_syn->parsed()) return run_synthesize(syn);
    if (c_ing->parsed()) return run_ingest(ing);
    if (c_m1->parsed()) return run_calibrate_m1(m1);
    if (c_m2->parsed()) return run_calibrate_m2(m2);
    if (c_ss->parsed()) return run_fit_ss(ss);
    if (c_pred->parsed()) return run_predict(pred);
    if (c_err->parsed()) return run_errors(errs);
    if (c_surf->parsed()) return run_surface(surf);
    if (c_smile->parsed()) return run_smile_shift(smile);
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_rec->parsed()) return run_recover(rec);
    if (c_bench->parsed()) return run_benchmark(bench);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
