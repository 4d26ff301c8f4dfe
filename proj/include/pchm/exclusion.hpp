#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "pchm/cluster.hpp"
#include "pchm/grid.hpp"
#include "pchm/rng.hpp"
#include "pchm/solver.hpp"
#include "pchm/walk.hpp"

namespace pchm {

// Exclusion-process state: one bit per giant-rank site.
class OccupancyConfig {
 public:
  explicit OccupancyConfig(std::int64_t n_sites);

  std::int64_t n_sites() const { return n_sites_; }
  std::int64_t particle_count() const { return particle_count_; }
  double time_stamp() const { return time_stamp_; }
  void set_time_stamp(double t) { time_stamp_ = t; }

  bool get(std::int64_t rank) const {
    return (bits_[static_cast<std::size_t>(rank >> 6)] >> (rank & 63)) & 1u;
  }
  void set(std::int64_t rank, bool value);

  // Exchange the occupancies at the two ranks (no-op when equal).
  void swap_sites(std::int64_t a, std::int64_t b) {
    const bool va = get(a), vb = get(b);
    if (va != vb) {
      toggle(a);
      toggle(b);
    }
  }

  // Recount of set bits; used to audit the particle_count invariant.
  std::int64_t popcount() const;

 private:
  void toggle(std::int64_t rank) {
    bits_[static_cast<std::size_t>(rank >> 6)] ^= (std::uint64_t{1} << (rank & 63));
  }

  std::int64_t n_sites_ = 0;
  std::int64_t particle_count_ = 0;
  double time_stamp_ = 0.0;
  std::vector<std::uint64_t> bits_;
};

// Global exponential clock of rate R = sum omega(b) with alias selection of
// the ringing bond; distributionally identical to per-bond Harris clocks.
struct ClockSchedule {
  double total_rate = 0.0;
  AliasTable bond_alias;

  explicit ClockSchedule(const GiantGraph& graph);
};

struct InitStats {
  std::int64_t clamped_high = 0;  // sites where rho0(eps x) exceeded m_hat
  std::int64_t clamped_low = 0;   // sites where rho0(eps x) was negative
};

// Product measure with P(eta_x = 1) = rho0(eps x) / m_hat per giant site,
// drawn from per-site streams keyed by (seed, rank). Out-of-range densities
// clamp and are counted in stats.
OccupancyConfig init_product_measure(const GiantGraph& graph, const GridField& rho0, double m_hat,
                                     EpsScale eps, std::uint64_t seed,
                                     InitStats* stats = nullptr);

// Exact kinetic Monte Carlo run to micro time T with snapshots at
// record_times (sorted, within [0, T]). Clock rings on bonds with equal
// occupancies still fire. An empty bond set returns eta0 at all times and
// sets *flagged_empty.
std::vector<OccupancyConfig> simulate_exclusion(const GiantGraph& graph,
                                                const OccupancyConfig& eta0, double T_micro,
                                                const std::vector<double>& record_times,
                                                CounterRng& rng, bool* flagged_empty = nullptr,
                                                std::int64_t* n_events = nullptr);

// Block density estimator: cell value = eps^d (particles in cell) / cell
// volume; equals the pairing against normalized cell indicators.
GridField empirical_profile(const OccupancyConfig& eta, const GiantGraph& graph, EpsScale eps,
                            int cells_per_axis);

// The pairing eps^d sum_x phi(eps x) eta_x.
double pairing(const OccupancyConfig& eta, const GiantGraph& graph, EpsScale eps,
               const GridField& phi);
double pairing(const OccupancyConfig& eta, const GiantGraph& graph, EpsScale eps,
               const Eigen::VectorXd& phi_on_cluster);

struct TestFunctionResult {
  std::string name;
  double reference = 0.0;       // continuum integral against the PDE solution
  double mean = 0.0;            // run-averaged pairing at t_macro
  double run_sigma = 0.0;       // run-to-run std of the pairing
  double bias = 0.0;            // mean - reference
  bool pass_3sigma = false;     // |bias| <= 3 run_sigma (+ exact when sigma 0)
};

struct HydroReport {
  std::vector<TestFunctionResult> pairings;
  double l1_profile_error = 0.0;        // run-averaged L1 distance of block profiles
  std::int64_t conservation_violations = 0;
  InitStats init_stats;
  int n_runs = 0;
  std::vector<std::vector<double>> per_run_pairings;  // [phi][run]
  int cells_per_axis = 0;
  std::vector<double> mean_profile;       // run-averaged block densities, cell-major
  std::vector<double> reference_profile;  // PDE density at the cell centers
};

// Runs the exclusion process to micro time eps^{-2} t_macro from the product
// measure of rho0 and compares empirical pairings and block profiles with the
// spectral solution of d_t rho = div(Dcal grad rho).
HydroReport hydro_experiment(const GiantGraph& graph, const DiffusionMatrix& Dcal,
                             const GridField& rho0, double t_macro, EpsScale eps, int n_runs,
                             const std::vector<GridField>& test_functions,
                             const std::vector<std::string>& test_names, std::uint64_t seed,
                             int cells_per_axis = 0, int workers = 1);

struct PairingCheckReport {
  double mean_difference = 0.0;
  double run_sigma = 0.0;
  std::vector<double> per_run_difference;
  int n_runs = 0;
  bool pass_3sigma = false;
};

// Single-particle reduction check: compares eps^d sum phi(eps x) eta_x(T)
// against eps^d sum eta_x(0) (P^eps_t phi)(eps x), with the semigroup applied
// by uniformization. The two agree exactly in expectation for every T.
PairingCheckReport hydro_pairing_check(const GiantGraph& graph, EpsScale eps,
                                       const GridField& phi, double t_macro,
                                       const GridField& rho0, double m_hat, int n_runs,
                                       std::uint64_t seed, int workers = 1);

}  // namespace pchm
