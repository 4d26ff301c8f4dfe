#include "pchm/walk.hpp"

#include <cmath>
#include <stdexcept>

#include "pchm/parallel.hpp"
#include "pchm/solver.hpp"

namespace pchm {

EpsScale::EpsScale(double eps) : epsilon(eps) {
  if (!(eps > 0.0) || !(eps <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
}

namespace {

// One exponential holding time + neighbor selection. Returns the new rank and
// accumulates the move into net_steps when given.
inline std::int64_t step(const GiantGraph& graph, std::int64_t rank, CounterRng& rng,
                         std::vector<long>* net_steps) {
  const int deg = graph.degree(rank);
  const double lambda = graph.lambda(rank);
  double u = rng.u01() * lambda;
  int k = 0;
  for (; k < deg - 1; ++k) {
    u -= graph.rate(rank, k);
    if (u < 0.0) break;
  }
  if (net_steps) {
    const int mv = graph.move(rank, k);
    const int axis = std::abs(mv) - 1;
    (*net_steps)[static_cast<std::size_t>(axis)] += mv > 0 ? 1 : -1;
  }
  return graph.neighbor(rank, k);
}

}  // namespace

WalkTrajectory simulate_walk(const GiantGraph& graph, std::int64_t start_rank, double T,
                             CounterRng& rng) {
  if (!(T > 0.0)) throw std::invalid_argument("simulate_walk: T must be > 0");
  if (start_rank < 0 || start_rank >= graph.n_sites())
    throw std::invalid_argument("simulate_walk: start outside the giant cluster");
  if (graph.lambda(start_rank) <= 0.0)
    throw std::logic_error("giant site with zero escape rate");  // impossible on the giant

  WalkTrajectory traj;
  traj.start_rank = start_rank;
  traj.terminal_time = T;
  traj.net_steps.assign(static_cast<std::size_t>(graph.dim()), 0);

  std::int64_t rank = start_rank;
  double t = 0.0;
  for (;;) {
    t += rng.exponential(graph.lambda(rank));
    if (t > T) break;
    rank = step(graph, rank, rng, &traj.net_steps);
    traj.events.emplace_back(t, rank);
  }
  return traj;
}

WalkTrajectory simulate_walk(const ConductanceField& field, const ClusterLabeling& labeling,
                             std::int64_t start_site, double T, CounterRng& rng) {
  GiantGraph graph(field, labeling);
  const std::int64_t rank = graph.rank_of(start_site);
  if (rank < 0) throw std::invalid_argument("simulate_walk: start outside the giant cluster");
  return simulate_walk(graph, rank, T, rng);
}

std::int64_t walk_endpoint(const GiantGraph& graph, std::int64_t start_rank, double T,
                           CounterRng& rng) {
  std::int64_t rank = start_rank;
  double t = rng.exponential(graph.lambda(rank));
  while (t <= T) {
    rank = step(graph, rank, rng, nullptr);
    t += rng.exponential(graph.lambda(rank));
  }
  return rank;
}

SemigroupEstimate mc_semigroup(const GiantGraph& graph, EpsScale eps, const GridField& f,
                               double t, int n_walkers,
                               const std::vector<std::int64_t>& probe_ranks, std::uint64_t seed,
                               int workers) {
  if (!(t > 0.0)) throw std::invalid_argument("mc_semigroup: t must be > 0");
  if (n_walkers < 1) throw std::invalid_argument("mc_semigroup: need at least one walker");
  for (std::int64_t r : probe_ranks)
    if (r < 0 || r >= graph.n_sites())
      throw std::invalid_argument("mc_semigroup: probe outside the giant cluster");

  const double T = eps.micro_time(t);
  const int d = graph.dim();

  SemigroupEstimate est;
  est.probe_ranks = probe_ranks;
  est.n_walkers = n_walkers;
  est.mean.resize(static_cast<Eigen::Index>(probe_ranks.size()));
  est.stderr_.resize(static_cast<Eigen::Index>(probe_ranks.size()));

  parallel_for(static_cast<std::int64_t>(probe_ranks.size()), workers, [&](std::int64_t pi) {
    const std::int64_t probe = probe_ranks[static_cast<std::size_t>(pi)];
    std::vector<double> point(static_cast<std::size_t>(d));
    double sum = 0.0, sumsq = 0.0;
    for (int w = 0; w < n_walkers; ++w) {
      CounterRng rng(derive_stream_key(seed, "mc_semigroup",
                                       static_cast<std::uint64_t>(pi) * 0x100000000ull +
                                           static_cast<std::uint64_t>(w)));
      const std::int64_t end = walk_endpoint(graph, probe, T, rng);
      for (int a = 0; a < d; ++a)
        point[static_cast<std::size_t>(a)] = eps.epsilon * graph.coord(end, a);
      const double v = f.interpolate(point.data());
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / n_walkers;
    est.mean[pi] = mean;
    const double var = std::max(0.0, (sumsq - n_walkers * mean * mean) / (n_walkers - 1.0));
    est.stderr_[pi] = std::sqrt(var / n_walkers);
  });
  return est;
}

ResolventSolution solve_resolvent_discrete(const GiantGraph& graph, EpsScale eps, double lambda,
                                           const GridField& f, double tol, int max_iter) {
  if (!(lambda > 0.0)) throw std::invalid_argument("resolvent: lambda must be > 0");
  const std::int64_t n = graph.n_sites();
  if (n == 0) throw std::invalid_argument("resolvent: empty giant cluster");
  if (max_iter <= 0) max_iter = static_cast<int>(std::min<std::int64_t>(10 * n + 200, 2000000));

  const MaskedLaplacian lap(graph, 1.0 / (eps.epsilon * eps.epsilon));
  const Eigen::VectorXd rhs = sample_on_cluster(f, eps.epsilon, graph);

  LinearOperator apply_A = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    lap.apply(v, out);
    out = lambda * v - out;
  };
  const CgResult cg = cg_solve(apply_A, rhs, tol, max_iter, Gauge::none);

  ResolventSolution sol;
  sol.u = cg.x;
  sol.residual = cg.residual_norm;
  sol.cg_iterations = cg.iterations;
  sol.converged = cg.converged;
  return sol;
}

double homogenization_error(const Eigen::VectorXd& u_eps, const GridField& u0, EpsScale eps,
                            const GiantGraph& graph) {
  if (u_eps.size() != graph.n_sites())
    throw std::invalid_argument("homogenization_error: vector size mismatch");
  const Eigen::VectorXd ref = sample_on_cluster(u0, eps.epsilon, graph);
  const double epsd = std::pow(eps.epsilon, graph.dim());
  Eigen::VectorXd diff = u_eps - ref;
  return epsd * pairwise_dot(diff, diff);
}

double weighted_l2_norm(const GridField& g, EpsScale eps, const GiantGraph& graph) {
  const Eigen::VectorXd v = sample_on_cluster(g, eps.epsilon, graph);
  const double epsd = std::pow(eps.epsilon, graph.dim());
  return std::sqrt(epsd * pairwise_dot(v, v));
}

}  // namespace pchm
