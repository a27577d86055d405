#ifndef CMMV_QUADRATURE_HPP
#define CMMV_QUADRATURE_HPP

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

namespace cmmv {

/// Gauss-Hermite rule for E[g(Z)], Z ~ N(0,1) (probabilists' weight).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

/// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix of
/// He_n, weights the squared first eigenvector components.
inline GaussHermiteRule compute_gauss_hermite(std::size_t n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    rule.nodes[k] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weights[k] = v * v;
    total += rule.weights[k];
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

/// Cached rule; safe to call concurrently.
inline const GaussHermiteRule& gauss_hermite(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_hermite(n)).first;
  return it->second;
}

/// E[g(mean + scale Z)].
template <class F>
double gauss_hermite_expectation(F&& g, double mean, double scale, std::size_t n) {
  const GaussHermiteRule& rule = gauss_hermite(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    acc += rule.weights[k] * g(mean + scale * rule.nodes[k]);
  }
  return acc;
}

}  // namespace cmmv

#endif  // CMMV_QUADRATURE_HPP
