#include "pchm/exclusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "pchm/parallel.hpp"

namespace pchm {

OccupancyConfig::OccupancyConfig(std::int64_t n_sites) : n_sites_(n_sites) {
  if (n_sites < 0) throw std::invalid_argument("occupancy: negative site count");
  bits_.assign(static_cast<std::size_t>((n_sites + 63) >> 6), 0);
}

void OccupancyConfig::set(std::int64_t rank, bool value) {
  const bool cur = get(rank);
  if (cur == value) return;
  toggle(rank);
  particle_count_ += value ? 1 : -1;
}

std::int64_t OccupancyConfig::popcount() const {
  std::int64_t n = 0;
  for (std::uint64_t w : bits_) n += std::popcount(w);
  return n;
}

ClockSchedule::ClockSchedule(const GiantGraph& graph)
    : total_rate(graph.total_bond_rate()),
      bond_alias([&] {
        std::vector<double> w;
        w.reserve(graph.bonds().size());
        for (const Bond& b : graph.bonds()) w.push_back(b.weight);
        if (w.empty()) w.push_back(1.0);  // placeholder; never sampled when R = 0
        return w;
      }()) {}

OccupancyConfig init_product_measure(const GiantGraph& graph, const GridField& rho0, double m_hat,
                                     EpsScale eps, std::uint64_t seed, InitStats* stats) {
  if (!(m_hat > 0.0)) throw std::invalid_argument("init_product_measure: empty giant");
  const std::int64_t n = graph.n_sites();
  const Eigen::VectorXd rho = sample_on_cluster(rho0, eps.epsilon, graph);

  OccupancyConfig eta(n);
  InitStats local;
  for (std::int64_t r = 0; r < n; ++r) {
    double p = rho[r] / m_hat;
    if (p > 1.0) {
      p = 1.0;
      ++local.clamped_high;
    } else if (p < 0.0) {
      p = 0.0;
      ++local.clamped_low;
    }
    CounterRng rng(cell_key(seed, static_cast<std::uint64_t>(r), 0x0CCFull));
    eta.set(r, rng.u01() < p);
  }
  if (stats) *stats = local;
  return eta;
}

std::vector<OccupancyConfig> simulate_exclusion(const GiantGraph& graph,
                                                const OccupancyConfig& eta0, double T_micro,
                                                const std::vector<double>& record_times,
                                                CounterRng& rng, bool* flagged_empty,
                                                std::int64_t* n_events) {
  if (T_micro < 0.0) throw std::invalid_argument("simulate_exclusion: negative horizon");
  if (eta0.n_sites() != graph.n_sites())
    throw std::invalid_argument("simulate_exclusion: configuration size mismatch");
  for (std::size_t i = 0; i < record_times.size(); ++i) {
    if (record_times[i] < 0.0 || record_times[i] > T_micro)
      throw std::invalid_argument("simulate_exclusion: record time outside [0, T]");
    if (i > 0 && record_times[i] < record_times[i - 1])
      throw std::invalid_argument("simulate_exclusion: record times must be sorted");
  }

  std::vector<OccupancyConfig> snapshots;
  snapshots.reserve(record_times.size());
  if (flagged_empty) *flagged_empty = false;
  if (n_events) *n_events = 0;

  if (graph.bonds().empty() || graph.total_bond_rate() <= 0.0) {
    if (flagged_empty) *flagged_empty = T_micro > 0.0;
    for (double rt : record_times) {
      snapshots.push_back(eta0);
      snapshots.back().set_time_stamp(rt);
    }
    return snapshots;
  }

  const ClockSchedule clock(graph);
  const std::int64_t n0 = eta0.particle_count();
  OccupancyConfig eta = eta0;
  double t = 0.0;
  std::size_t next_record = 0;

  while (next_record < record_times.size()) {
    const double t_next = t + rng.exponential(clock.total_rate);
    while (next_record < record_times.size() && record_times[next_record] < t_next) {
      snapshots.push_back(eta);
      snapshots.back().set_time_stamp(record_times[next_record]);
      if (snapshots.back().particle_count() != n0)
        throw std::logic_error("exclusion dynamics lost particles");
      ++next_record;
    }
    if (t_next > T_micro) break;
    const Bond& b = graph.bonds()[clock.bond_alias.sample(rng)];
    eta.swap_sites(b.a, b.b);  // fires even when the endpoints agree
    if (n_events) ++*n_events;
    t = t_next;
  }
  return snapshots;
}

GridField empirical_profile(const OccupancyConfig& eta, const GiantGraph& graph, EpsScale eps,
                            int cells_per_axis) {
  const int d = graph.dim();
  const int side = graph.side();
  if (cells_per_axis < 1 || side % cells_per_axis != 0)
    throw std::invalid_argument("empirical_profile: cells_per_axis must divide the lattice side");

  GridField out(d, cells_per_axis, "density");
  const int sites_per_cell_axis = side / cells_per_axis;
  const double epsd = std::pow(eps.epsilon, d);
  const double cell_vol = std::pow(1.0 / cells_per_axis, d);

  for (std::int64_t r = 0; r < graph.n_sites(); ++r) {
    if (!eta.get(r)) continue;
    std::int64_t node = 0;
    for (int a = 0; a < d; ++a) node = node * cells_per_axis + graph.coord(r, a) / sites_per_cell_axis;
    out.values()[node] += 1.0;
  }
  out.values() *= epsd / cell_vol;
  return out;
}

double pairing(const OccupancyConfig& eta, const GiantGraph& graph, EpsScale eps,
               const Eigen::VectorXd& phi_on_cluster) {
  if (phi_on_cluster.size() != graph.n_sites())
    throw std::invalid_argument("pairing: vector size mismatch");
  Eigen::VectorXd terms = Eigen::VectorXd::Zero(graph.n_sites());
  for (std::int64_t r = 0; r < graph.n_sites(); ++r)
    if (eta.get(r)) terms[r] = phi_on_cluster[r];
  return std::pow(eps.epsilon, graph.dim()) * pairwise_sum(terms);
}

double pairing(const OccupancyConfig& eta, const GiantGraph& graph, EpsScale eps,
               const GridField& phi) {
  return pairing(eta, graph, eps, sample_on_cluster(phi, eps.epsilon, graph));
}

HydroReport hydro_experiment(const GiantGraph& graph, const DiffusionMatrix& Dcal,
                             const GridField& rho0, double t_macro, EpsScale eps, int n_runs,
                             const std::vector<GridField>& test_functions,
                             const std::vector<std::string>& test_names, std::uint64_t seed,
                             int cells_per_axis, int workers) {
  if (n_runs < 1) throw std::invalid_argument("hydro_experiment: n_runs must be >= 1");
  if (test_functions.size() != test_names.size())
    throw std::invalid_argument("hydro_experiment: names/functions mismatch");
  if (cells_per_axis == 0) cells_per_axis = std::max(2, graph.side() / 8);

  const GridField rho_t = heat_evolve(rho0, Dcal, t_macro);
  const double T_micro = eps.micro_time(t_macro);
  const std::size_t n_phi = test_functions.size();

  // Pre-sample the test battery on the cluster once.
  std::vector<Eigen::VectorXd> phis;
  phis.reserve(n_phi);
  for (const auto& phi : test_functions) phis.push_back(sample_on_cluster(phi, eps.epsilon, graph));

  HydroReport report;
  report.n_runs = n_runs;
  report.cells_per_axis = cells_per_axis;
  report.per_run_pairings.assign(n_phi, std::vector<double>(static_cast<std::size_t>(n_runs), 0.0));
  std::vector<double> l1(static_cast<std::size_t>(n_runs), 0.0);
  std::vector<std::int64_t> violations(static_cast<std::size_t>(n_runs), 0);
  std::vector<InitStats> stats(static_cast<std::size_t>(n_runs));
  std::vector<Eigen::VectorXd> profiles(static_cast<std::size_t>(n_runs));

  // reference density at the cell centers
  {
    std::vector<double> center(static_cast<std::size_t>(graph.dim()));
    std::vector<int> idx(static_cast<std::size_t>(graph.dim()), 0);
    std::int64_t n_cells = 1;
    for (int a = 0; a < graph.dim(); ++a) n_cells *= cells_per_axis;
    report.reference_profile.resize(static_cast<std::size_t>(n_cells));
    for (std::int64_t c = 0; c < n_cells; ++c) {
      for (int a = 0; a < graph.dim(); ++a)
        center[static_cast<std::size_t>(a)] =
            (idx[static_cast<std::size_t>(a)] + 0.5) / cells_per_axis;
      report.reference_profile[static_cast<std::size_t>(c)] = rho_t.interpolate(center.data());
      for (int a = graph.dim() - 1; a >= 0; --a) {
        if (++idx[static_cast<std::size_t>(a)] < cells_per_axis) break;
        idx[static_cast<std::size_t>(a)] = 0;
      }
    }
  }

  parallel_for(n_runs, workers, [&](std::int64_t run) {
    const std::uint64_t run_seed = derive_stream_key(seed, "hydro_run", static_cast<std::uint64_t>(run));
    InitStats st;
    const OccupancyConfig eta0 =
        init_product_measure(graph, rho0, graph.m_hat(), eps, run_seed, &st);
    stats[static_cast<std::size_t>(run)] = st;

    CounterRng rng(derive_stream_key(run_seed, "kmc"));
    const std::vector<double> record{T_micro};
    const auto snaps = simulate_exclusion(graph, eta0, T_micro, record, rng);
    const OccupancyConfig& eta_T = snaps.front();

    if (eta_T.popcount() != eta0.particle_count() ||
        eta_T.particle_count() != eta0.particle_count())
      violations[static_cast<std::size_t>(run)] += 1;

    for (std::size_t k = 0; k < n_phi; ++k)
      report.per_run_pairings[k][static_cast<std::size_t>(run)] = pairing(eta_T, graph, eps, phis[k]);

    const GridField prof = empirical_profile(eta_T, graph, eps, cells_per_axis);
    double acc = 0.0;
    for (std::int64_t c = 0; c < prof.n_nodes(); ++c)
      acc += std::abs(prof.values()[c] - report.reference_profile[static_cast<std::size_t>(c)]);
    l1[static_cast<std::size_t>(run)] = acc / static_cast<double>(prof.n_nodes());
    profiles[static_cast<std::size_t>(run)] = prof.values();
  });

  for (std::int64_t run = 0; run < n_runs; ++run) {
    report.conservation_violations += violations[static_cast<std::size_t>(run)];
    report.l1_profile_error += l1[static_cast<std::size_t>(run)] / n_runs;
    report.init_stats.clamped_high += stats[static_cast<std::size_t>(run)].clamped_high;
    report.init_stats.clamped_low += stats[static_cast<std::size_t>(run)].clamped_low;
  }
  report.mean_profile.assign(report.reference_profile.size(), 0.0);
  for (const auto& prof : profiles)
    for (Eigen::Index c = 0; c < prof.size(); ++c)
      report.mean_profile[static_cast<std::size_t>(c)] += prof[c] / n_runs;

  for (std::size_t k = 0; k < n_phi; ++k) {
    TestFunctionResult res;
    res.name = test_names[k];
    res.reference = rho_t.integrate_against(test_functions[k]);
    const auto& vals = report.per_run_pairings[k];
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var = vals.size() > 1 ? var / (static_cast<double>(vals.size()) - 1.0) : 0.0;
    res.mean = mean;
    res.run_sigma = std::sqrt(var);
    res.bias = mean - res.reference;
    res.pass_3sigma = std::abs(res.bias) <= 3.0 * res.run_sigma + 1e-12;
    report.pairings.push_back(std::move(res));
  }
  return report;
}

PairingCheckReport hydro_pairing_check(const GiantGraph& graph, EpsScale eps,
                                       const GridField& phi, double t_macro,
                                       const GridField& rho0, double m_hat, int n_runs,
                                       std::uint64_t seed, int workers) {
  if (n_runs < 1) throw std::invalid_argument("hydro_pairing_check: n_runs must be >= 1");
  const double T_micro = eps.micro_time(t_macro);
  const Eigen::VectorXd phi_sites = sample_on_cluster(phi, eps.epsilon, graph);

  // P^eps_t phi on the cluster, by uniformization of the walk semigroup.
  const MaskedLaplacian lap(graph, 1.0);
  const Eigen::VectorXd pt_phi = semigroup_apply(lap, T_micro, phi_sites);

  PairingCheckReport report;
  report.n_runs = n_runs;
  report.per_run_difference.assign(static_cast<std::size_t>(n_runs), 0.0);

  parallel_for(n_runs, workers, [&](std::int64_t run) {
    const std::uint64_t run_seed =
        derive_stream_key(seed, "pairing_run", static_cast<std::uint64_t>(run));
    const OccupancyConfig eta0 = init_product_measure(graph, rho0, m_hat, eps, run_seed);
    CounterRng rng(derive_stream_key(run_seed, "kmc"));

    double lhs, rhs;
    if (T_micro > 0.0) {
      const std::vector<double> record{T_micro};
      const auto snaps = simulate_exclusion(graph, eta0, T_micro, record, rng);
      lhs = pairing(snaps.front(), graph, eps, phi_sites);
      rhs = pairing(eta0, graph, eps, pt_phi);
    } else {
      lhs = pairing(eta0, graph, eps, phi_sites);
      rhs = lhs;
    }
    report.per_run_difference[static_cast<std::size_t>(run)] = lhs - rhs;
  });

  double mean = 0.0;
  for (double v : report.per_run_difference) mean += v;
  mean /= n_runs;
  double var = 0.0;
  for (double v : report.per_run_difference) var += (v - mean) * (v - mean);
  var = n_runs > 1 ? var / (n_runs - 1.0) : 0.0;
  report.mean_difference = mean;
  report.run_sigma = std::sqrt(var);
  report.pass_3sigma = std::abs(mean) <= 3.0 * report.run_sigma + 1e-12;
  return report;
}

}  // namespace pchm
