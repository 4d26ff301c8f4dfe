#pragma once

// Brute-force reference computations used only by tests. Everything here is
// deliberately independent of the production solvers: dense matrices, full
// enumeration, direct quadrature.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "pchm/cluster.hpp"

namespace oracles {

// Dense generator of the single-particle walk on the giant graph:
// G(x,y) = omega(x,y), G(x,x) = -lambda(x).
inline Eigen::MatrixXd walk_generator(const pchm::GiantGraph& g) {
  const auto n = g.n_sites();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  for (const pchm::Bond& b : g.bonds()) {
    G(b.a, b.b) += b.weight;
    G(b.b, b.a) += b.weight;
    G(b.a, b.a) -= b.weight;
    G(b.b, b.b) -= b.weight;
  }
  return G;
}

// expm(t G) for a symmetric generator, by eigendecomposition.
inline Eigen::MatrixXd expm_symmetric(const Eigen::MatrixXd& G, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const Eigen::VectorXd mult = (t * es.eigenvalues().array()).exp();
  return es.eigenvectors() * mult.asDiagonal() * es.eigenvectors().transpose();
}

// Minimum-norm least-squares solve through a dense pseudo-inverse.
inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return A.completeOrthogonalDecomposition().pseudoInverse() * b;
}

// All particle configurations of the fixed-count sector, as bitmasks in a
// deterministic order, with their index.
struct ExclusionSector {
  std::vector<std::uint64_t> states;
  std::map<std::uint64_t, std::size_t> index;
};

inline ExclusionSector enumerate_sector(int n_sites, int n_particles) {
  ExclusionSector sec;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n_sites); ++mask) {
    if (std::popcount(mask) == n_particles) {
      sec.index[mask] = sec.states.size();
      sec.states.push_back(mask);
    }
  }
  return sec;
}

// Dense exclusion generator on a fixed-count sector: the swap at bond b takes
// eta to eta^b at rate omega(b). The full 2^n generator is block diagonal
// over particle counts; this is the block of the initial configuration.
inline Eigen::MatrixXd exclusion_generator(const pchm::GiantGraph& g,
                                           const ExclusionSector& sec) {
  const auto m = static_cast<Eigen::Index>(sec.states.size());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::uint64_t eta = sec.states[static_cast<std::size_t>(i)];
    for (const pchm::Bond& b : g.bonds()) {
      const bool occ_a = (eta >> b.a) & 1u;
      const bool occ_b = (eta >> b.b) & 1u;
      if (occ_a == occ_b) continue;  // the swap is a no-op; no state change
      const std::uint64_t swapped =
          eta ^ ((std::uint64_t{1} << b.a) | (std::uint64_t{1} << b.b));
      const auto j = static_cast<Eigen::Index>(sec.index.at(swapped));
      L(i, j) += b.weight;
      L(i, i) -= b.weight;
    }
  }
  return L;
}

// Total variation distance between two distributions over the same support.
inline double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

// Exact binomial tail P(|X/n - p| > delta) for X ~ Bin(n, p), via log pmf.
inline double binomial_two_sided_tail(std::int64_t n, double p, double delta) {
  const double lo = (p - delta) * n;
  const double hi = (p + delta) * n;
  double tail = 0.0;
  for (std::int64_t k = 0; k <= n; ++k) {
    if (k >= lo && k <= hi) continue;
    const double logpmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                          std::lgamma(n - k + 1.0) + k * std::log(p) +
                          (n - k) * std::log1p(-p);
    tail += std::exp(logpmf);
  }
  return tail;
}

// Effective conductance per site of a 1d ring whose conductances repeat the
// given period: the harmonic mean (series law).
inline double series_effective(const std::vector<double>& period) {
  double inv = 0.0;
  for (double c : period) inv += 1.0 / c;
  return static_cast<double>(period.size()) / inv;
}

// Parallel law: the arithmetic mean.
inline double parallel_effective(const std::vector<double>& period) {
  double s = 0.0;
  for (double c : period) s += c;
  return s / static_cast<double>(period.size());
}

}  // namespace oracles
