#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "pchm/cluster.hpp"
#include "pchm/rng.hpp"

namespace pchm {

// Pairwise (tree) reductions: deterministic regardless of threading and
// accurate to ~1e-13 relative on the vector lengths used here.
double pairwise_sum(const Eigen::VectorXd& v);
double pairwise_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Weighted graph Laplacian restricted to the giant mask, applied matrix-free
// in giant-rank coordinates:
//   (L g)(x) = scale * sum_{y ~ x, both in mask} omega(x,y) (g(y) - g(x)).
// Symmetric, negative semidefinite; constants on the (connected) giant are in
// the kernel.
class MaskedLaplacian {
 public:
  MaskedLaplacian(const GiantGraph& graph, double scale = 1.0)
      : graph_(&graph), scale_(scale) {}

  const GiantGraph& graph() const { return *graph_; }
  double scale() const { return scale_; }

  void apply(const Eigen::VectorXd& g, Eigen::VectorXd& out) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& g) const;

  // <g, -L g> = scale * sum_{bonds} omega(b) (g(y) - g(x))^2.
  double dirichlet_energy(const Eigen::VectorXd& g) const;

 private:
  const GiantGraph* graph_;
  double scale_;
};

enum class Gauge { none, mean_zero };

struct CgResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;  // ||A x - b|| / ||b||
  int iterations = 0;
  bool converged = false;
};

using LinearOperator = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Conjugate gradient for symmetric positive (semi)definite operators. With
// Gauge::mean_zero the operator must be definite on the mean-zero subspace;
// b is required to have zero mean (relative tolerance 1e-12) and every
// iterate is re-projected. Non-convergence returns the best iterate with
// converged = false.
CgResult cg_solve(const LinearOperator& apply_A, const Eigen::VectorXd& b, double tol,
                  int max_iter, Gauge gauge);

// Walker/Vose alias table: O(n) build, O(1) sampling, P(i) = w_i / sum w.
class AliasTable {
 public:
  explicit AliasTable(const std::vector<double>& weights);

  std::size_t size() const { return prob_.size(); }
  std::size_t sample(CounterRng& rng) const {
    const std::size_t slot = static_cast<std::size_t>(rng.below(prob_.size()));
    return rng.u01() < prob_[slot] ? slot : alias_[slot];
  }
  double probability(std::size_t i) const { return prob_[i]; }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

// Markov semigroup action e^{t L} v for the masked Laplacian, computed by
// uniformization with a Poisson tail below tail_eps. Deterministic; serves as
// the non-sampling route to P_t on the giant graph.
Eigen::VectorXd semigroup_apply(const MaskedLaplacian& lap, double t, const Eigen::VectorXd& v,
                                double tail_eps = 1e-12);

}  // namespace pchm
