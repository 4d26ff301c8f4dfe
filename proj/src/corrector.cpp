#include "pchm/corrector.hpp"

#include <cmath>
#include <stdexcept>

#include "pchm/parallel.hpp"
#include "pchm/rng.hpp"
#include "pchm/solver.hpp"

namespace pchm {

namespace {

// Right side of the first-order condition -Lap psi = b,
//   b(x) = sum_e xi_e [ omega(x, x+e) 1[..] - omega(x-e, x) 1[..] ].
Eigen::VectorXd corrector_rhs(const GiantGraph& graph, const Eigen::VectorXd& xi) {
  const std::int64_t n = graph.n_sites();
  const int d = graph.dim();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (std::int64_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int axis = 0; axis < d; ++axis) {
      if (graph.fwd(r, axis) >= 0) acc += xi[axis] * graph.weight_fwd(r, axis);
      if (graph.bwd(r, axis) >= 0) acc -= xi[axis] * graph.weight_bwd(r, axis);
    }
    b[r] = acc;
  }
  return b;
}

double drift_energy(const GiantGraph& graph, const Eigen::VectorXd& xi,
                    const Eigen::VectorXd& psi) {
  const auto& bonds = graph.bonds();
  Eigen::VectorXd terms(static_cast<Eigen::Index>(bonds.size()));
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const Bond& b = bonds[i];
    const double g = xi[b.axis] + psi[b.b] - psi[b.a];
    terms[static_cast<Eigen::Index>(i)] = b.weight * g * g;
  }
  return pairwise_sum(terms);
}

}  // namespace

CorrectorSolution solve_corrector(const ConductanceField& field, const ClusterLabeling& labeling,
                                  const Eigen::VectorXd& xi, double tol, int max_iter) {
  GiantGraph graph(field, labeling);
  return solve_corrector(field, graph, xi, tol, max_iter);
}

CorrectorSolution solve_corrector(const ConductanceField& field, const GiantGraph& graph,
                                  const Eigen::VectorXd& xi, double tol, int max_iter) {
  if (xi.size() != field.dim()) throw std::invalid_argument("corrector: direction dimension mismatch");
  const std::int64_t n = graph.n_sites();
  if (n == 0) throw std::invalid_argument("corrector: empty giant component");
  if (max_iter <= 0) max_iter = static_cast<int>(std::min<std::int64_t>(10 * n + 200, 2000000));

  MaskedLaplacian lap(graph, 1.0);
  const Eigen::VectorXd b = corrector_rhs(graph, xi);

  LinearOperator apply_minus_lap = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    lap.apply(v, out);
    out = -out;
  };
  const CgResult cg = cg_solve(apply_minus_lap, b, tol, max_iter, Gauge::mean_zero);

  CorrectorSolution sol;
  sol.direction = xi;
  sol.psi = cg.x;
  sol.residual = cg.residual_norm;
  sol.cg_iterations = cg.iterations;
  sol.converged = cg.converged;
  sol.dirichlet_energy = drift_energy(graph, xi, sol.psi);
  return sol;
}

double trial_upper_bound(const ConductanceField& field, const GiantGraph& graph,
                         const Eigen::VectorXd& xi) {
  const double vol = static_cast<double>(field.lattice().n_sites());
  const auto& bonds = graph.bonds();
  Eigen::VectorXd terms(static_cast<Eigen::Index>(bonds.size()));
  for (std::size_t i = 0; i < bonds.size(); ++i)
    terms[static_cast<Eigen::Index>(i)] = bonds[i].weight * xi[bonds[i].axis] * xi[bonds[i].axis];
  return 2.0 / vol * pairwise_sum(terms);
}

DiffusionEstimate estimate_D(const ConductanceField& field, const ClusterLabeling& labeling,
                             double tol, int workers) {
  const int d = field.dim();
  GiantGraph graph(field, labeling);
  if (graph.n_sites() == 0) throw std::invalid_argument("estimate_D: empty giant component");
  const double vol = static_cast<double>(field.lattice().n_sites());

  // Directions: the d axis vectors, then e_i + e_j and e_i - e_j per pair.
  std::vector<Eigen::VectorXd> dirs;
  for (int i = 0; i < d; ++i) dirs.push_back(Eigen::VectorXd::Unit(d, i));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      dirs.push_back(Eigen::VectorXd::Unit(d, i) + Eigen::VectorXd::Unit(d, j));
      dirs.push_back(Eigen::VectorXd::Unit(d, i) - Eigen::VectorXd::Unit(d, j));
    }

  std::vector<CorrectorSolution> sols(dirs.size());
  parallel_for(static_cast<std::int64_t>(dirs.size()), workers, [&](std::int64_t k) {
    sols[static_cast<std::size_t>(k)] =
        solve_corrector(field, graph, dirs[static_cast<std::size_t>(k)], tol);
  });

  DiffusionEstimate est;
  est.D_hat = Eigen::MatrixXd::Zero(d, d);
  est.m_hat = labeling.m_hat;
  est.side = field.side();
  est.seed = field.seed();
  auto q = [&](const CorrectorSolution& s) { return 2.0 / vol * s.dirichlet_energy; };
  for (int i = 0; i < d; ++i) est.D_hat(i, i) = q(sols[static_cast<std::size_t>(i)]);
  std::size_t k = static_cast<std::size_t>(d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double off = (q(sols[k]) - q(sols[k + 1])) / 4.0;
      est.D_hat(i, j) = off;
      est.D_hat(j, i) = off;
      k += 2;
    }
  for (const auto& s : sols) {
    est.max_residual = std::max(est.max_residual, s.residual);
    est.total_cg_iterations += s.cg_iterations;
    est.converged = est.converged && s.converged;
  }
  est.Dcal_hat = est.D_hat / (2.0 * est.m_hat);
  return est;
}

SweepTable sweep_D(const FieldLaw& law, int dim, double cap, const std::vector<int>& sides,
                   int n_seeds, std::uint64_t seed, double tol, int workers) {
  if (n_seeds < 1) throw std::invalid_argument("sweep_D: n_seeds must be >= 1");
  for (std::size_t i = 1; i < sides.size(); ++i)
    if (sides[i] <= sides[i - 1]) throw std::invalid_argument("sweep_D: sides must increase");

  SweepTable table;
  table.sides = sides;
  table.rows.resize(sides.size() * static_cast<std::size_t>(n_seeds));
  parallel_for(static_cast<std::int64_t>(table.rows.size()), workers, [&](std::int64_t k) {
    const std::size_t si = static_cast<std::size_t>(k) / static_cast<std::size_t>(n_seeds);
    const std::uint64_t s = derive_stream_key(seed, "sweep_D", static_cast<std::uint64_t>(k));
    const ConductanceField field = sample_field(law, dim, sides[si], cap, s);
    const ClusterLabeling lab = label_components(field);
    table.rows[static_cast<std::size_t>(k)] =
        SweepRow{sides[si], s, estimate_D(field, lab, tol, 1)};
  });

  for (std::size_t si = 0; si < sides.size(); ++si) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(dim, dim);
    for (int r = 0; r < n_seeds; ++r)
      mean += table.rows[si * static_cast<std::size_t>(n_seeds) + static_cast<std::size_t>(r)].estimate.Dcal_hat;
    mean /= n_seeds;
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(dim, dim);
    for (int r = 0; r < n_seeds; ++r) {
      const Eigen::MatrixXd diff =
          table.rows[si * static_cast<std::size_t>(n_seeds) + static_cast<std::size_t>(r)].estimate.Dcal_hat - mean;
      var += diff.cwiseProduct(diff);
    }
    Eigen::MatrixXd se = Eigen::MatrixXd::Zero(dim, dim);
    if (n_seeds > 1) se = (var / (n_seeds - 1.0) / n_seeds).cwiseSqrt();
    table.mean_Dcal.push_back(std::move(mean));
    table.stderr_Dcal.push_back(std::move(se));
  }
  return table;
}

}  // namespace pchm
