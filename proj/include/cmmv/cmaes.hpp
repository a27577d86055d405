#ifndef CMMV_CMAES_HPP
#define CMMV_CMAES_HPP

// Covariance Matrix Adaptation Evolution Strategy with weighted
// recombination, rank-one and rank-mu covariance updates and cumulative
// step-size adaptation. Learning rates follow the usual defaults derived
// from the dimension and the recombination weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cmmv/error.hpp"
#include "cmmv/rng.hpp"

namespace cmmv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct CmaEsConfig {
  std::size_t dimension = 0;
  std::size_t population = 0;  // lambda
  std::size_t parents = 0;     // mu
  std::vector<double> weights; // log-decreasing, sum to 1
  double sigma0 = 0.3;
  std::size_t max_generations = 10000;
  std::size_t max_evaluations = std::numeric_limits<std::size_t>::max();
  double target = -std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;

  /// Default population 4 + floor(3 ln d), parents floor(lambda / 2).
  static CmaEsConfig defaults(std::size_t dimension, double sigma0, std::uint64_t seed,
                              std::size_t population = 0) {
    if (dimension == 0) throw Error(ErrorKind::protocol_misuse, "dimension must be positive");
    CmaEsConfig c;
    c.dimension = dimension;
    c.sigma0 = sigma0;
    c.seed = seed;
    c.population = population != 0
                       ? population
                       : 4 + static_cast<std::size_t>(
                                 std::floor(3.0 * std::log(static_cast<double>(dimension))));
    c.parents = c.population / 2;
    c.weights.resize(c.parents);
    double total = 0.0;
    for (std::size_t i = 0; i < c.parents; ++i) {
      c.weights[i] = std::log(static_cast<double>(c.parents) + 0.5) -
                     std::log(static_cast<double>(i + 1));
      total += c.weights[i];
    }
    for (double& w : c.weights) w /= total;
    return c;
  }

  void validate() const {
    if (dimension == 0 || population < 2 || parents == 0 || parents >= population ||
        weights.size() != parents) {
      throw Error(ErrorKind::protocol_misuse, "inconsistent CMA-ES population settings");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0) || (i > 0 && weights[i] > weights[i - 1])) {
        throw Error(ErrorKind::protocol_misuse, "weights must be positive and nonincreasing");
      }
      total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw Error(ErrorKind::protocol_misuse, "weights must sum to 1");
    }
    if (!(sigma0 > 0.0)) throw Error(ErrorKind::protocol_misuse, "sigma0 must be positive");
  }
};

/// Learning rates and damping derived from a config.
struct CmaEsRates {
  double mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n;

  explicit CmaEsRates(const CmaEsConfig& config) {
    const double n = static_cast<double>(config.dimension);
    double sq = 0.0;
    for (double w : config.weights) sq += w * w;
    mu_eff = 1.0 / sq;
    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma;
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    c_mu = std::min(1.0 - c_1,
                    2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
    chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  }
};

struct CmaEsState {
  Vector mean;
  double sigma = 1.0;
  Matrix cov;
  Vector path_sigma;
  Vector path_c;
  std::size_t generation = 0;
  // Eigendecomposition of cov: cov = basis * diag(scales^2) * basis^T.
  Matrix basis;
  Vector scales;

  static CmaEsState initial(const Vector& x0, const CmaEsConfig& config) {
    config.validate();
    if (static_cast<std::size_t>(x0.size()) != config.dimension) {
      throw Error(ErrorKind::protocol_misuse, "x0 dimension does not match config");
    }
    const auto d = static_cast<Eigen::Index>(config.dimension);
    CmaEsState s;
    s.mean = x0;
    s.sigma = config.sigma0;
    s.cov = Matrix::Identity(d, d);
    s.path_sigma = Vector::Zero(d);
    s.path_c = Vector::Zero(d);
    s.basis = Matrix::Identity(d, d);
    s.scales = Vector::Ones(d);
    return s;
  }

  double max_eigenvalue() const { return scales.cwiseAbs2().maxCoeff(); }
  double min_eigenvalue() const { return scales.cwiseAbs2().minCoeff(); }
};

namespace detail {

/// Symmetrizes cov, floors its eigenvalues at 1e-14 * max and refreshes the
/// cached decomposition.
inline void refresh_decomposition(CmaEsState& s) {
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s.cov);
  if (solver.info() != Eigen::Success || !solver.eigenvalues().allFinite()) {
    throw Error(ErrorKind::covariance_degenerate, "eigendecomposition of C failed");
  }
  Vector eig = solver.eigenvalues();
  const double top = eig.maxCoeff();
  if (!(top > 0.0)) throw Error(ErrorKind::covariance_degenerate, "C has no positive eigenvalue");
  const double floor = 1e-14 * top;
  bool floored = false;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (eig(i) < floor) {
      eig(i) = floor;
      floored = true;
    }
  }
  s.basis = solver.eigenvectors();
  if (floored) s.cov = s.basis * eig.asDiagonal() * s.basis.transpose();
  s.scales = eig.cwiseSqrt();
}

}  // namespace detail

/// Samples lambda candidates m + sigma * C^{1/2} z. Draw k of generation g
/// comes from CounterRng(seed, (g << 20) + k).
inline std::vector<Vector> ask(const CmaEsState& state, const CmaEsConfig& config) {
  if (!state.scales.allFinite() || !state.basis.allFinite()) {
    throw Error(ErrorKind::covariance_degenerate, "covariance factor is not finite");
  }
  const auto d = static_cast<Eigen::Index>(config.dimension);
  std::vector<Vector> out;
  out.reserve(config.population);
  for (std::size_t k = 0; k < config.population; ++k) {
    CounterRng rng(config.seed, (static_cast<std::uint64_t>(state.generation) << 20) + k);
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
    out.push_back(state.mean + state.sigma * (state.basis * state.scales.cwiseProduct(z)));
  }
  return out;
}

/// Indices of `values` sorted ascending; NaN ranks as +inf, ties keep index order.
inline std::vector<std::size_t> rank_ascending(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) {
    return std::isnan(values[i]) ? std::numeric_limits<double>::infinity() : values[i];
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return order;
}

/// One generation of selection, recombination and adaptation. Depends on
/// `values` only through their ranking.
inline CmaEsState tell(const CmaEsState& state, const CmaEsConfig& config,
                       const std::vector<Vector>& candidates, const std::vector<double>& values) {
  if (candidates.size() != config.population || values.size() != config.population) {
    throw Error(ErrorKind::protocol_misuse,
                "tell expects " + std::to_string(config.population) + " candidates and values");
  }
  const CmaEsRates r(config);
  const auto d = static_cast<Eigen::Index>(config.dimension);
  const std::vector<std::size_t> order = rank_ascending(values);

  CmaEsState next = state;
  Vector mean = Vector::Zero(d);
  for (std::size_t i = 0; i < config.parents; ++i) mean += config.weights[i] * candidates[order[i]];
  const Vector y_w = (mean - state.mean) / state.sigma;

  // C^{-1/2} y_w
  const Vector whitened =
      state.basis * (state.basis.transpose() * y_w).cwiseQuotient(state.scales);
  next.path_sigma = (1.0 - r.c_sigma) * state.path_sigma +
                    std::sqrt(r.c_sigma * (2.0 - r.c_sigma) * r.mu_eff) * whitened;
  const double g1 = static_cast<double>(state.generation + 1);
  const double ps_norm = next.path_sigma.norm();
  const bool h_sigma =
      ps_norm / std::sqrt(1.0 - std::pow(1.0 - r.c_sigma, 2.0 * g1)) <
      (1.4 + 2.0 / (static_cast<double>(d) + 1.0)) * r.chi_n;
  next.path_c = (1.0 - r.c_c) * state.path_c;
  if (h_sigma) next.path_c += std::sqrt(r.c_c * (2.0 - r.c_c) * r.mu_eff) * y_w;

  Matrix rank_mu = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < config.parents; ++i) {
    const Vector y = (candidates[order[i]] - state.mean) / state.sigma;
    rank_mu += config.weights[i] * (y * y.transpose());
  }
  const double lost = h_sigma ? 0.0 : r.c_c * (2.0 - r.c_c);
  next.cov = (1.0 - r.c_1 - r.c_mu) * state.cov +
             r.c_1 * (next.path_c * next.path_c.transpose() + lost * state.cov) +
             r.c_mu * rank_mu;
  next.sigma = state.sigma * std::exp((r.c_sigma / r.d_sigma) * (ps_norm / r.chi_n - 1.0));
  next.mean = std::move(mean);
  next.generation = state.generation + 1;
  detail::refresh_decomposition(next);
  return next;
}

enum class Termination { target_reached, max_generations, max_evaluations, stalled };

constexpr std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::target_reached: return "target-reached";
    case Termination::max_generations: return "max-generations";
    case Termination::max_evaluations: return "max-evaluations";
    case Termination::stalled: return "stalled";
  }
  return "unknown";
}

struct GenerationRecord {
  std::size_t generation = 0;
  std::size_t evaluations = 0;
  double best_value = 0.0;  // best ever so far
  double sigma = 0.0;
  std::vector<double> mean;
};

struct CmaEsResult {
  Vector best_point;
  double best_value = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  std::size_t generations = 0;
  Termination termination = Termination::max_generations;
  std::vector<GenerationRecord> history;
};

using Objective = std::function<double(const Vector&)>;

/// Runs ask/tell until the best value reaches `target`, a budget is spent,
/// or the largest sampling standard deviation sigma * sqrt(max-eigenvalue(C))
/// falls below 1e-14.
inline CmaEsResult minimize(const Objective& objective, const Vector& x0,
                            const CmaEsConfig& config) {
  CmaEsState state = CmaEsState::initial(x0, config);
  CmaEsResult result;
  result.best_point = x0;
  std::vector<double> values(config.population);
  while (true) {
    if (result.generations >= config.max_generations) {
      result.termination = Termination::max_generations;
      break;
    }
    if (result.evaluations + config.population > config.max_evaluations) {
      result.termination = Termination::max_evaluations;
      break;
    }
    const std::vector<Vector> candidates = ask(state, config);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      double v = objective(candidates[k]);
      if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
      values[k] = v;
      if (v < result.best_value) {
        result.best_value = v;
        result.best_point = candidates[k];
      }
    }
    result.evaluations += candidates.size();
    state = tell(state, config, candidates, values);
    result.generations = state.generation;
    result.history.push_back({state.generation, result.evaluations, result.best_value,
                              state.sigma, {state.mean.data(), state.mean.data() + state.mean.size()}});
    if (result.best_value <= config.target) {
      result.termination = Termination::target_reached;
      break;
    }
    if (state.sigma * std::sqrt(state.max_eigenvalue()) < 1e-14) {
      result.termination = Termination::stalled;
      break;
    }
  }
  return result;
}

/// CSV trace: generation,evaluations,best_value,sigma,m_0..m_{d-1}.
inline void write_trace_csv(std::ostream& out, const std::vector<GenerationRecord>& history) {
  const auto old_precision = out.precision(10);
  out << "generation,evaluations,best_value,sigma";
  const std::size_t d = history.empty() ? 0 : history.front().mean.size();
  for (std::size_t i = 0; i < d; ++i) out << ",m_" << i;
  out << '\n';
  for (const auto& rec : history) {
    out << rec.generation << ',' << rec.evaluations << ',' << rec.best_value << ',' << rec.sigma;
    for (double m : rec.mean) out << ',' << m;
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace cmmv

#endif  // CMMV_CMAES_HPP
