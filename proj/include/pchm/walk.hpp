#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "pchm/cluster.hpp"
#include "pchm/grid.hpp"
#include "pchm/rng.hpp"

namespace pchm {

// Continuous-time random walk among the conductances on the giant cluster.
// At site z the walk waits Exp(lambda(z)) and jumps to neighbor y with
// probability omega(z,y)/lambda(z).
struct WalkTrajectory {
  std::int64_t start_rank = 0;
  double terminal_time = 0.0;
  std::vector<std::pair<double, std::int64_t>> events;  // (jump time, new rank)
  std::vector<long> net_steps;                          // torus-unwrapped displacement
};

// Lattice-to-continuum pairing: physical torus side 1, eps = 1/L, micro time
// eps^{-2} t.
struct EpsScale {
  double epsilon = 1.0;

  explicit EpsScale(double eps);
  static EpsScale from_side(int side) { return EpsScale(1.0 / side); }
  double micro_time(double t_macro) const { return t_macro / (epsilon * epsilon); }
};

WalkTrajectory simulate_walk(const GiantGraph& graph, std::int64_t start_rank, double T,
                             CounterRng& rng);
// Overload taking a lattice site id, per the module surface.
WalkTrajectory simulate_walk(const ConductanceField& field, const ClusterLabeling& labeling,
                             std::int64_t start_site, double T, CounterRng& rng);

// Final state only; cheaper inner loop for Monte Carlo estimates.
std::int64_t walk_endpoint(const GiantGraph& graph, std::int64_t start_rank, double T,
                           CounterRng& rng);

struct SemigroupEstimate {
  std::vector<std::int64_t> probe_ranks;
  Eigen::VectorXd mean;
  Eigen::VectorXd stderr_;
  int n_walkers = 0;
};

// Monte Carlo estimate of P^eps_{t} f at the probe sites: the average of
// f(eps * X(eps^{-2} t)) over independent walkers, f interpolated on its grid.
SemigroupEstimate mc_semigroup(const GiantGraph& graph, EpsScale eps, const GridField& f,
                               double t, int n_walkers,
                               const std::vector<std::int64_t>& probe_ranks, std::uint64_t seed,
                               int workers = 1);

struct ResolventSolution {
  Eigen::VectorXd u;  // giant-rank indexed
  double residual = 0.0;
  int cg_iterations = 0;
  bool converged = false;
};

// Solves (lambda - eps^{-2} Lap) u = f(eps x) on the giant, lambda > 0.
ResolventSolution solve_resolvent_discrete(const GiantGraph& graph, EpsScale eps, double lambda,
                                           const GridField& f, double tol = 1e-10,
                                           int max_iter = 0);

// Squared L^2(mu^eps) distance: eps^d sum_giant (u_eps(x) - u0(eps x))^2.
double homogenization_error(const Eigen::VectorXd& u_eps, const GridField& u0, EpsScale eps,
                            const GiantGraph& graph);

// Weighted L^2(mu^eps) norm of a grid function sampled on the giant.
double weighted_l2_norm(const GridField& g, EpsScale eps, const GiantGraph& graph);

}  // namespace pchm
