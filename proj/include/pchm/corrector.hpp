#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "pchm/cluster.hpp"
#include "pchm/field.hpp"

namespace pchm {

struct CorrectorSolution {
  Eigen::VectorXd direction;       // the drift vector xi
  Eigen::VectorXd psi;             // giant-rank indexed, mean zero over the giant
  double residual = 0.0;           // relative CG residual
  double dirichlet_energy = 0.0;   // E_L(psi) at the minimizer
  int cg_iterations = 0;
  bool converged = false;
};

struct DiffusionEstimate {
  Eigen::MatrixXd D_hat;      // symmetric d x d
  double m_hat = 0.0;
  Eigen::MatrixXd Dcal_hat;   // D_hat / (2 m_hat)
  int side = 0;
  std::uint64_t seed = 0;
  double max_residual = 0.0;
  int total_cg_iterations = 0;
  bool converged = true;
};

// Minimizes, over mean-zero psi on the giant mask,
//   E_L(psi) = sum_x sum_e omega(x, x+e) 1[x, x+e in giant]
//              (xi_e + psi(x+e) - psi(x))^2
// with periodic wrap. General xi is accepted; the minimizer and energy scale
// as xi and |xi|^2 respectively.
CorrectorSolution solve_corrector(const ConductanceField& field, const ClusterLabeling& labeling,
                                  const Eigen::VectorXd& xi, double tol = 1e-10,
                                  int max_iter = 0);
CorrectorSolution solve_corrector(const ConductanceField& field, const GiantGraph& graph,
                                  const Eigen::VectorXd& xi, double tol = 1e-10,
                                  int max_iter = 0);

// Finite-volume diffusion matrix: diagonal entries from the directional
// energies, (e, D e) = (2 / L^d) E_L(psi*_e); off-diagonal entries by
// polarization of the quadratic form, D_{e,e'} = [q(e+e') - q(e-e')] / 4.
DiffusionEstimate estimate_D(const ConductanceField& field, const ClusterLabeling& labeling,
                             double tol = 1e-10, int workers = 1);

// The zero-corrector upper bound (2 / L^d) sum_{x,e} omega 1[..] xi_e^2 on
// (xi, D xi); the variational infimum can never exceed it.
double trial_upper_bound(const ConductanceField& field, const GiantGraph& graph,
                         const Eigen::VectorXd& xi);

struct SweepRow {
  int side = 0;
  std::uint64_t seed = 0;
  DiffusionEstimate estimate;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  // Per-side aggregates over seeds, index-aligned with `sides`.
  std::vector<int> sides;
  std::vector<Eigen::MatrixXd> mean_Dcal;
  std::vector<Eigen::MatrixXd> stderr_Dcal;
};

SweepTable sweep_D(const FieldLaw& law, int dim, double cap, const std::vector<int>& sides,
                   int n_seeds, std::uint64_t seed, double tol = 1e-10, int workers = 1);

}  // namespace pchm
