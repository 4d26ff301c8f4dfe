#include "pchm/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "pchm/cluster.hpp"
#include "pchm/corrector.hpp"
#include "pchm/exclusion.hpp"
#include "pchm/field.hpp"
#include "pchm/parallel.hpp"
#include "pchm/rng.hpp"
#include "pchm/walk.hpp"

namespace fs = std::filesystem;

namespace pchm {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ValidationError(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ValidationError(context + ": unknown key '" + it.key() + "'");
  }
}

void validate_law_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) throw ValidationError("law: missing 'type'");
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") {
    require_keys(j, {"type", "value"}, "law(constant)");
  } else if (type == "iid_uniform") {
    require_keys(j, {"type", "lo", "hi"}, "law(iid_uniform)");
  } else if (type == "bernoulli") {
    require_keys(j, {"type", "p", "value"}, "law(bernoulli)");
  } else if (type == "iid_mixture") {
    require_keys(j, {"type", "p_zero", "positive"}, "law(iid_mixture)");
    require_keys(j.at("positive"), {"type", "value", "lo", "hi"}, "law(iid_mixture).positive");
  } else if (type == "layered") {
    require_keys(j, {"type", "rules"}, "law(layered)");
    for (const auto& r : j.at("rules")) require_keys(r, {"axis", "by", "values"}, "layered rule");
  } else {
    throw ValidationError("law: unknown type '" + type + "'");
  }
}

void validate_grid_function_json(const nlohmann::json& j, const std::string& context) {
  if (!j.is_object() || !j.contains("type")) throw ValidationError(context + ": missing 'type'");
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") {
    require_keys(j, {"type", "value"}, context);
  } else if (type == "cosine" || type == "sine") {
    require_keys(j, {"type", "axis", "k", "amplitude", "mean"}, context);
  } else if (type == "sum") {
    require_keys(j, {"type", "terms"}, context);
    for (const auto& t : j.at("terms")) validate_grid_function_json(t, context + ".terms");
  } else {
    throw ValidationError(context + ": unknown type '" + type + "'");
  }
}

}  // namespace

GridField make_grid_function(const nlohmann::json& spec, int dim, int resolution) {
  validate_grid_function_json(spec, "grid function");
  const std::string type = spec.at("type").get<std::string>();
  if (type == "constant") {
    const double v = spec.at("value").get<double>();
    return GridField::from_function(dim, resolution, [v](const double*) { return v; });
  }
  if (type == "cosine" || type == "sine") {
    const int axis = spec.at("axis").get<int>();
    if (axis < 0 || axis >= dim) throw ValidationError("grid function: axis out of range");
    const double k = spec.at("k").get<double>();
    const double amp = spec.value("amplitude", 1.0);
    const double mean = spec.value("mean", 0.0);
    const bool cos = type == "cosine";
    return GridField::from_function(dim, resolution, [=](const double* x) {
      const double arg = 2.0 * std::numbers::pi * k * x[axis];
      return mean + amp * (cos ? std::cos(arg) : std::sin(arg));
    });
  }
  // sum
  GridField acc(dim, resolution);
  for (const auto& t : spec.at("terms")) {
    const GridField part = make_grid_function(t, dim, resolution);
    acc.values() += part.values();
  }
  return acc;
}

std::uint64_t file_fnv1a64(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for checksum: " + path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + tmp);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

namespace {

struct ManifestBuilder {
  fs::path out_dir;
  nlohmann::json outputs = nlohmann::json::array();
  nlohmann::json invariants = nlohmann::json::array();
  nlohmann::json results = nlohmann::json::object();

  void add_output(const std::string& rel, const std::string& kind) {
    const fs::path p = out_dir / rel;
    outputs.push_back({{"path", rel},
                       {"kind", kind},
                       {"bytes", static_cast<std::uint64_t>(fs::file_size(p))},
                       {"fnv1a64", file_fnv1a64(p.string())}});
  }

  void add_invariant(const std::string& name, bool pass, const nlohmann::json& detail = {}) {
    nlohmann::json inv = {{"name", name}, {"pass", pass}};
    if (!detail.is_null()) inv["detail"] = detail;
    invariants.push_back(inv);
  }

  void write(const nlohmann::json& resolved_config) {
    nlohmann::json m;
    m["tool"] = "pchm";
    m["experiment"] = resolved_config.at("experiment");
    m["config"] = resolved_config;
    m["outputs"] = outputs;
    m["invariants"] = invariants;
    m["results"] = results;
    atomic_write_text((out_dir / "manifest.json").string(), m.dump(2) + "\n");
  }
};

struct CommonConfig {
  std::string experiment;
  FieldLaw law;
  int dim = 2;
  double cap = 1.0;
  std::uint64_t seed = 1;
  int workers = 1;
  double tol = 1e-10;
  fs::path out_dir;
  nlohmann::json resolved;
};

const std::set<std::string> kCommonKeys = {"experiment", "law", "dim", "cap",
                                           "seed",       "out", "workers", "tol"};

std::set<std::string> with_common(std::initializer_list<std::string> extra) {
  std::set<std::string> keys = kCommonKeys;
  for (const auto& k : extra) keys.insert(k);
  return keys;
}

CommonConfig parse_common(const nlohmann::json& cfg, const CliOverrides& ov) {
  CommonConfig c;
  c.experiment = cfg.at("experiment").get<std::string>();
  if (!cfg.contains("law")) throw ValidationError("config: missing 'law'");
  validate_law_json(cfg.at("law"));
  c.law = FieldLaw::from_json(cfg.at("law"));
  c.dim = cfg.value("dim", 2);
  if (c.dim < 2) throw ValidationError("config: dim must be >= 2");
  c.cap = cfg.value("cap", 1.0);
  if (!(c.cap > 0)) throw ValidationError("config: cap must be > 0");
  c.seed = ov.has_seed ? ov.seed : cfg.value("seed", std::uint64_t{1});
  c.workers = ov.workers > 0 ? ov.workers : cfg.value("workers", 0);
  c.tol = ov.tol > 0 ? ov.tol : cfg.value("tol", 1e-10);
  std::string out = !ov.out_dir.empty() ? ov.out_dir : cfg.value("out", std::string{});
  if (out.empty()) throw ValidationError("config: missing output directory ('out' or --out)");
  c.out_dir = out;
  fs::create_directories(c.out_dir);

  c.resolved = cfg;
  c.resolved["seed"] = c.seed;
  c.resolved["out"] = c.out_dir.string();
  c.resolved["workers"] = resolve_workers(c.workers);
  c.resolved["tol"] = c.tol;
  c.resolved["dim"] = c.dim;
  c.resolved["cap"] = c.cap;
  return c;
}

int parse_side(const nlohmann::json& cfg, const char* key = "side") {
  if (!cfg.contains(key)) throw ValidationError(std::string("config: missing '") + key + "'");
  const int side = cfg.at(key).get<int>();
  if (side < 2) throw ValidationError("config: side must be >= 2");
  return side;
}

int default_grid_n(int dim) { return dim <= 2 ? 256 : 64; }

int parse_grid_n(const nlohmann::json& cfg, int dim) {
  const int n = cfg.value("grid_n", default_grid_n(dim));
  if (n < 2 || (n & (n - 1)) != 0) throw ValidationError("config: grid_n must be a power of two");
  return n;
}

DiffusionMatrix parse_dcal(const nlohmann::json& cfg, const CommonConfig& c,
                           ManifestBuilder& mb) {
  if (!cfg.contains("Dcal")) return DiffusionMatrix::identity(c.dim);
  const nlohmann::json& j = cfg.at("Dcal");
  const std::string type = j.at("type").get<std::string>();
  if (type == "identity") {
    require_keys(j, {"type"}, "Dcal");
    return DiffusionMatrix::identity(c.dim);
  }
  if (type == "matrix") {
    require_keys(j, {"type", "values"}, "Dcal");
    const auto rows = j.at("values").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd m(c.dim, c.dim);
    if (static_cast<int>(rows.size()) != c.dim) throw ValidationError("Dcal: wrong matrix size");
    for (int i = 0; i < c.dim; ++i) {
      if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != c.dim)
        throw ValidationError("Dcal: wrong matrix size");
      for (int k = 0; k < c.dim; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return DiffusionMatrix(std::move(m));
  }
  if (type == "estimate") {
    require_keys(j, {"type", "side", "n_seeds"}, "Dcal");
    const int side = j.contains("side") ? j.at("side").get<int>() : parse_side(cfg);
    const int n_seeds = j.value("n_seeds", 1);
    const SweepTable table = sweep_D(c.law, c.dim, c.cap, {side}, n_seeds,
                                     derive_stream_key(c.seed, "Dcal_estimate"), c.tol, c.workers);
    mb.results["Dcal_estimate"] = {{"side", side}, {"n_seeds", n_seeds}};
    for (int i = 0; i < c.dim; ++i)
      for (int k = 0; k < c.dim; ++k)
        mb.results["Dcal_estimate"]["mean"][static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
            table.mean_Dcal[0](i, k);
    return DiffusionMatrix(table.mean_Dcal[0]);
  }
  throw ValidationError("Dcal: unknown type '" + type + "'");
}

// ---- experiment runners ------------------------------------------------

void run_gen_env(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg, with_common({"side"}), "gen-env config");
  const int side = parse_side(cfg);
  const ConductanceField field = sample_field(c.law, c.dim, side, c.cap, c.seed);
  write_field(field, (c.out_dir / "field.pchm").string());
  mb.add_output("field.pchm", "field_dump");
  mb.add_output("field.pchm.json", "json");
  const ClusterLabeling lab = label_components(field);
  mb.results["m_hat"] = lab.m_hat;
  mb.results["n_components"] = lab.n_components();
  mb.add_invariant("weights_within_cap", true);
  mb.add_invariant("m_hat_in_unit_interval", lab.m_hat >= 0.0 && lab.m_hat <= 1.0);
}

void run_cluster_stats(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg, with_common({"sides", "n_samples"}), "cluster-stats config");
  const auto sides = cfg.at("sides").get<std::vector<int>>();
  const int n_samples = cfg.value("n_samples", 1);
  if (sides.empty()) throw ValidationError("cluster-stats: empty sides");

  std::ostringstream csv;
  csv << "seed,L,m_hat,n_components,giant_size\n";
  bool all_in_range = true;
  for (int side : sides) {
    const MEstimate est = estimate_m(c.law, c.dim, side, c.cap, n_samples,
                                     derive_stream_key(c.seed, "cluster_stats", side), c.workers);
    for (const auto& row : est.rows) {
      csv << row.seed << "," << row.side << "," << fmt(row.m_hat) << "," << row.n_components
          << "," << row.giant_size << "\n";
      all_in_range = all_in_range && row.m_hat >= 0.0 && row.m_hat <= 1.0;
    }
    mb.results["m_hat"][std::to_string(side)] = {{"mean", est.mean}, {"stderr", est.stderr_}};
  }
  atomic_write_text((c.out_dir / "cluster_stats.csv").string(), csv.str());
  mb.add_output("cluster_stats.csv", "csv");
  mb.add_invariant("m_hat_in_unit_interval", all_in_range);
}

void run_corrector(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg, with_common({"sides", "n_seeds"}), "corrector config");
  const auto sides = cfg.at("sides").get<std::vector<int>>();
  const int n_seeds = cfg.value("n_seeds", 1);
  const SweepTable table = sweep_D(c.law, c.dim, c.cap, sides, n_seeds, c.seed, c.tol, c.workers);

  std::ostringstream csv;
  csv << "law,L,seed,m_hat";
  for (int i = 0; i < c.dim; ++i)
    for (int j = 0; j < c.dim; ++j) csv << ",D" << i + 1 << j + 1;
  for (int i = 0; i < c.dim; ++i)
    for (int j = 0; j < c.dim; ++j) csv << ",Dcal" << i + 1 << j + 1;
  csv << ",max_residual,cg_iters\n";

  double max_asym = 0.0;
  double max_norm_err = 0.0;
  bool converged = true;
  for (const auto& row : table.rows) {
    const DiffusionEstimate& e = row.estimate;
    csv << "\"" << c.law.describe() << "\"," << row.side << "," << row.seed << ","
        << fmt(e.m_hat);
    for (int i = 0; i < c.dim; ++i)
      for (int j = 0; j < c.dim; ++j) csv << "," << fmt(e.D_hat(i, j));
    for (int i = 0; i < c.dim; ++i)
      for (int j = 0; j < c.dim; ++j) csv << "," << fmt(e.Dcal_hat(i, j));
    csv << "," << fmt(e.max_residual) << "," << e.total_cg_iterations << "\n";
    max_asym = std::max(max_asym, (e.D_hat - e.D_hat.transpose()).cwiseAbs().maxCoeff());
    max_norm_err = std::max(
        max_norm_err, (e.Dcal_hat - e.D_hat / (2.0 * e.m_hat)).cwiseAbs().maxCoeff());
    converged = converged && e.converged;
  }
  atomic_write_text((c.out_dir / "diffusion.csv").string(), csv.str());
  mb.add_output("diffusion.csv", "corrector_csv");

  for (std::size_t si = 0; si < table.sides.size(); ++si) {
    nlohmann::json agg;
    agg["side"] = table.sides[si];
    for (int i = 0; i < c.dim; ++i)
      for (int j = 0; j < c.dim; ++j) {
        agg["mean_Dcal"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = table.mean_Dcal[si](i, j);
        agg["stderr_Dcal"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = table.stderr_Dcal[si](i, j);
      }
    mb.results["aggregates"].push_back(agg);
  }
  mb.add_invariant("D_symmetric", max_asym <= 1e-12, {{"max_asymmetry", max_asym}});
  mb.add_invariant("Dcal_equals_D_over_2m", max_norm_err == 0.0, {{"max_error", max_norm_err}});
  if (!converged) throw ConvergenceError("corrector CG did not reach tolerance");
}

void run_resolvent(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg, with_common({"sides", "lambda", "f", "grid_n", "Dcal"}), "resolvent config");
  const auto sides = cfg.at("sides").get<std::vector<int>>();
  if (sides.empty()) throw ValidationError("resolvent: empty sides");
  const double lambda = cfg.at("lambda").get<double>();
  if (!(lambda > 0.0)) throw ValidationError("resolvent: lambda must be > 0");
  const int grid_n = parse_grid_n(cfg, c.dim);
  if (!cfg.contains("f")) throw ValidationError("resolvent: missing 'f'");
  const GridField f = make_grid_function(cfg.at("f"), c.dim, grid_n);
  const DiffusionMatrix Dcal = parse_dcal(cfg, c, mb);
  const GridField u0 = resolvent_continuum(f, Dcal, lambda);

  std::ostringstream csv;
  csv << "eps,lambda,weighted_L2_error,cg_iters\n";
  std::vector<double> errors;
  for (int side : sides) {
    const ConductanceField field =
        sample_field(c.law, c.dim, side, c.cap, derive_stream_key(c.seed, "resolvent", side));
    const ClusterLabeling lab = label_components(field);
    const GiantGraph graph(field, lab);
    const EpsScale eps = EpsScale::from_side(side);
    const ResolventSolution sol = solve_resolvent_discrete(graph, eps, lambda, f, c.tol);
    if (!sol.converged) throw ConvergenceError("resolvent CG did not reach tolerance");
    const double err = std::sqrt(homogenization_error(sol.u, u0, eps, graph));
    errors.push_back(err);
    csv << fmt(eps.epsilon) << "," << fmt(lambda) << "," << fmt(err) << "," << sol.cg_iterations
        << "\n";
  }
  atomic_write_text((c.out_dir / "resolvent.csv").string(), csv.str());
  mb.add_output("resolvent.csv", "csv");

  bool decreasing = true;
  for (std::size_t i = 1; i < errors.size(); ++i) decreasing = decreasing && errors[i] < errors[i - 1];
  mb.results["errors"] = errors;
  mb.add_invariant("error_decreases_in_eps", decreasing);
}

void run_walk(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg, with_common({"side", "t", "n_walkers", "n_probes", "f", "grid_n", "Dcal"}),
               "walk config");
  const int side = parse_side(cfg);
  const double t = cfg.at("t").get<double>();
  if (!(t > 0.0)) throw ValidationError("walk: t must be > 0");
  const int n_walkers = cfg.value("n_walkers", 1000);
  int n_probes = cfg.value("n_probes", 16);
  const int grid_n = parse_grid_n(cfg, c.dim);
  if (!cfg.contains("f")) throw ValidationError("walk: missing 'f'");
  const GridField f = make_grid_function(cfg.at("f"), c.dim, grid_n);
  const DiffusionMatrix Dcal = parse_dcal(cfg, c, mb);

  const ConductanceField field =
      sample_field(c.law, c.dim, side, c.cap, derive_stream_key(c.seed, "walk_field"));
  const ClusterLabeling lab = label_components(field);
  const GiantGraph graph(field, lab);
  if (graph.n_sites() == 0) throw ValidationError("walk: empty giant cluster");
  n_probes = static_cast<int>(std::min<std::int64_t>(n_probes, graph.n_sites()));

  std::vector<std::int64_t> probes;
  for (int k = 0; k < n_probes; ++k)
    probes.push_back(static_cast<std::int64_t>(k) * graph.n_sites() / n_probes);

  const EpsScale eps = EpsScale::from_side(side);
  const SemigroupEstimate est =
      mc_semigroup(graph, eps, f, t, n_walkers, probes, derive_stream_key(c.seed, "walk_mc"),
                   c.workers);
  const GridField ptf = heat_evolve(f, Dcal, t);
  const Eigen::VectorXd ref = sample_on_cluster(ptf, eps.epsilon, graph);

  std::ostringstream csv;
  csv << "probe_site,mc_estimate,stderr,continuum_value\n";
  for (std::size_t i = 0; i < probes.size(); ++i) {
    csv << graph.site_of(probes[i]) << "," << fmt(est.mean[static_cast<Eigen::Index>(i)]) << ","
        << fmt(est.stderr_[static_cast<Eigen::Index>(i)]) << ","
        << fmt(ref[probes[i]]) << "\n";
  }
  atomic_write_text((c.out_dir / "semigroup.csv").string(), csv.str());
  mb.add_output("semigroup.csv", "csv");
  mb.results["n_walkers"] = n_walkers;
}

void run_exclusion(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg,
               with_common({"side", "rho0", "t_macro", "record_times", "cells", "grid_n", "mode",
                            "phi", "n_runs"}),
               "exclusion config");
  const int side = parse_side(cfg);
  const int grid_n = parse_grid_n(cfg, c.dim);
  if (!cfg.contains("rho0")) throw ValidationError("exclusion: missing 'rho0'");
  const GridField rho0 = make_grid_function(cfg.at("rho0"), c.dim, grid_n);
  const double t_macro = cfg.value("t_macro", 0.0);
  if (t_macro < 0.0) throw ValidationError("exclusion: t_macro must be >= 0");

  const ConductanceField field =
      sample_field(c.law, c.dim, side, c.cap, derive_stream_key(c.seed, "exclusion_field"));
  const ClusterLabeling lab = label_components(field);
  const GiantGraph graph(field, lab);
  if (graph.n_sites() == 0) throw ValidationError("exclusion: empty giant cluster");
  const EpsScale eps = EpsScale::from_side(side);

  const std::string mode = cfg.value("mode", "simulate");
  if (mode == "pairing_check") {
    if (!cfg.contains("phi")) throw ValidationError("exclusion: pairing_check needs 'phi'");
    const GridField phi = make_grid_function(cfg.at("phi"), c.dim, grid_n);
    const int n_runs = cfg.value("n_runs", 10);
    const PairingCheckReport rep = hydro_pairing_check(
        graph, eps, phi, t_macro, rho0, lab.m_hat, n_runs, derive_stream_key(c.seed, "bolero"),
        c.workers);
    nlohmann::json out;
    out["mean_difference"] = rep.mean_difference;
    out["run_sigma"] = rep.run_sigma;
    out["per_run_difference"] = rep.per_run_difference;
    out["pass_3sigma"] = rep.pass_3sigma;
    atomic_write_text((c.out_dir / "pairing_check.json").string(), out.dump(2) + "\n");
    mb.add_output("pairing_check.json", "json");
    mb.add_invariant("pairing_within_3sigma", rep.pass_3sigma);
    return;
  }
  if (mode != "simulate") throw ValidationError("exclusion: unknown mode '" + mode + "'");

  std::vector<double> record = cfg.value("record_times", std::vector<double>{t_macro});
  for (double& r : record) r = eps.micro_time(r);
  const double T = eps.micro_time(t_macro);
  const int cells = cfg.value("cells", std::max(2, side / 8));

  InitStats stats;
  const OccupancyConfig eta0 = init_product_measure(graph, rho0, lab.m_hat, eps,
                                                    derive_stream_key(c.seed, "init"), &stats);
  CounterRng rng(derive_stream_key(c.seed, "exclusion_kmc"));
  bool flagged = false;
  const auto snaps = simulate_exclusion(graph, eta0, T, record, rng, &flagged);

  nlohmann::json report;
  report["initial_particles"] = eta0.particle_count();
  report["clamped_high"] = stats.clamped_high;
  report["clamped_low"] = stats.clamped_low;
  report["empty_bond_set"] = flagged;
  bool conserved = true;
  nlohmann::json snaps_json = nlohmann::json::array();
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const GridField prof = empirical_profile(snaps[i], graph, eps, cells);
    std::vector<double> values(prof.values().data(), prof.values().data() + prof.n_nodes());
    conserved = conserved && snaps[i].particle_count() == eta0.particle_count() &&
                snaps[i].popcount() == eta0.particle_count();
    snaps_json.push_back({{"t_micro", snaps[i].time_stamp()},
                          {"particles", snaps[i].particle_count()},
                          {"profile_cells", cells},
                          {"profile", values}});
  }
  report["snapshots"] = snaps_json;
  report["conservation_pass"] = conserved;
  atomic_write_text((c.out_dir / "exclusion_report.json").string(), report.dump(2) + "\n");
  mb.add_output("exclusion_report.json", "json");
  mb.add_invariant("particle_conservation", conserved);
}

void run_hydro(const nlohmann::json& cfg, CommonConfig& c, ManifestBuilder& mb) {
  require_keys(cfg,
               with_common({"side", "rho0", "t_macro", "n_runs", "phi", "cells", "grid_n", "Dcal"}),
               "hydro config");
  const int side = parse_side(cfg);
  const int grid_n = parse_grid_n(cfg, c.dim);
  if (!cfg.contains("rho0")) throw ValidationError("hydro: missing 'rho0'");
  const GridField rho0 = make_grid_function(cfg.at("rho0"), c.dim, grid_n);
  const double t_macro = cfg.value("t_macro", 0.05);
  if (t_macro < 0.0) throw ValidationError("hydro: t_macro must be >= 0");
  const int n_runs = cfg.value("n_runs", 10);
  const int cells = cfg.value("cells", std::max(2, side / 8));

  const ConductanceField field =
      sample_field(c.law, c.dim, side, c.cap, derive_stream_key(c.seed, "hydro_field"));
  const ClusterLabeling lab = label_components(field);
  const GiantGraph graph(field, lab);
  if (graph.n_sites() == 0) throw ValidationError("hydro: empty giant cluster");
  const EpsScale eps = EpsScale::from_side(side);
  const DiffusionMatrix Dcal = parse_dcal(cfg, c, mb);

  std::vector<GridField> phis;
  std::vector<std::string> names;
  if (cfg.contains("phi")) {
    for (const auto& pj : cfg.at("phi")) {
      nlohmann::json spec = pj;
      std::string name = spec.value("name", spec.value("type", "phi"));
      spec.erase("name");
      phis.push_back(make_grid_function(spec, c.dim, grid_n));
      names.push_back(std::move(name));
    }
  } else {
    phis.push_back(make_grid_function({{"type", "constant"}, {"value", 1.0}}, c.dim, grid_n));
    names.push_back("1");
  }

  const HydroReport rep = hydro_experiment(graph, Dcal, rho0, t_macro, eps, n_runs, phis, names,
                                           derive_stream_key(c.seed, "hydro"), cells, c.workers);

  nlohmann::json out;
  out["n_runs"] = rep.n_runs;
  out["conservation_violations"] = rep.conservation_violations;
  out["clamped_high"] = rep.init_stats.clamped_high;
  out["clamped_low"] = rep.init_stats.clamped_low;
  out["l1_profile_error"] = rep.l1_profile_error;
  out["cells_per_axis"] = rep.cells_per_axis;
  out["mean_profile"] = rep.mean_profile;
  out["reference_profile"] = rep.reference_profile;
  nlohmann::json pj = nlohmann::json::array();
  for (std::size_t k = 0; k < rep.pairings.size(); ++k) {
    const auto& p = rep.pairings[k];
    pj.push_back({{"phi", p.name},
                  {"reference", p.reference},
                  {"mean", p.mean},
                  {"run_sigma", p.run_sigma},
                  {"bias", p.bias},
                  {"pass_3sigma", p.pass_3sigma},
                  {"per_run", rep.per_run_pairings[k]}});
  }
  out["pairings"] = pj;
  atomic_write_text((c.out_dir / "hydro_report.json").string(), out.dump(2) + "\n");
  mb.add_output("hydro_report.json", "json");

  std::ostringstream csv;
  csv << "phi,reference,mean,run_sigma,bias,pass_3sigma\n";
  bool all_pass = true;
  for (const auto& p : rep.pairings) {
    csv << p.name << "," << fmt(p.reference) << "," << fmt(p.mean) << "," << fmt(p.run_sigma)
        << "," << fmt(p.bias) << "," << (p.pass_3sigma ? 1 : 0) << "\n";
    all_pass = all_pass && p.pass_3sigma;
  }
  atomic_write_text((c.out_dir / "hydro_summary.csv").string(), csv.str());
  mb.add_output("hydro_summary.csv", "csv");
  mb.add_invariant("particle_conservation", rep.conservation_violations == 0);
  mb.add_invariant("pairings_within_3sigma", all_pass);
}

void emit_diagnostic(const std::string& type, const std::string& message) {
  nlohmann::json diag;
  diag["error"] = {{"type", type}, {"message", message}};
  std::cerr << diag.dump() << std::endl;
}

}  // namespace

int run_experiment(const std::string& config_path, const CliOverrides& overrides) {
  try {
    std::ifstream is(config_path);
    if (!is) {
      emit_diagnostic("io", "cannot open config: " + config_path);
      return 2;
    }
    nlohmann::json cfg;
    try {
      cfg = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config parse error: ") + e.what());
    }

    CommonConfig c = parse_common(cfg, overrides);
    ManifestBuilder mb;
    mb.out_dir = c.out_dir;

    try {
      if (c.experiment == "gen-env")
        run_gen_env(cfg, c, mb);
      else if (c.experiment == "cluster-stats")
        run_cluster_stats(cfg, c, mb);
      else if (c.experiment == "corrector")
        run_corrector(cfg, c, mb);
      else if (c.experiment == "resolvent")
        run_resolvent(cfg, c, mb);
      else if (c.experiment == "walk")
        run_walk(cfg, c, mb);
      else if (c.experiment == "exclusion")
        run_exclusion(cfg, c, mb);
      else if (c.experiment == "hydro")
        run_hydro(cfg, c, mb);
      else
        throw ValidationError("unknown experiment kind: " + c.experiment);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config field error: ") + e.what());
    }

    mb.write(c.resolved);
    return 0;
  } catch (const ValidationError& e) {
    emit_diagnostic("validation", e.what());
    return 2;
  } catch (const ConvergenceError& e) {
    emit_diagnostic("non_convergence", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    emit_diagnostic("validation", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_diagnostic("runtime", e.what());
    return 1;
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Re-derived invariants for a corrector CSV: symmetry of D and the exact
// normalization Dcal = D / (2 m_hat).
void check_corrector_csv(const std::string& path, int dim, std::vector<std::string>& failures) {
  std::ifstream is(path);
  if (!is) {
    failures.push_back("cannot open " + path);
    return;
  }
  std::string header;
  std::getline(is, header);
  const auto cols = split_csv_line(header);
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < cols.size(); ++i) idx[cols[i]] = i;

  std::string line;
  int row = 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    auto val = [&](const std::string& name) {
      auto it = idx.find(name);
      if (it == idx.end() || it->second >= f.size())
        throw std::runtime_error("column missing: " + name);
      return std::stod(f[it->second]);
    };
    try {
      const double m_hat = val("m_hat");
      if (!(m_hat > 0.0 && m_hat <= 1.0))
        failures.push_back(path + " row " + std::to_string(row) + ": m_hat outside (0,1]");
      for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j) {
          const std::string a = "D" + std::to_string(i + 1) + std::to_string(j + 1);
          const std::string b = "D" + std::to_string(j + 1) + std::to_string(i + 1);
          if (std::abs(val(a) - val(b)) > 1e-12)
            failures.push_back(path + " row " + std::to_string(row) + ": D asymmetry " + a);
        }
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
          const std::string dn = "D" + std::to_string(i + 1) + std::to_string(j + 1);
          const std::string cn = "Dcal" + std::to_string(i + 1) + std::to_string(j + 1);
          const double expect = val(dn) / (2.0 * m_hat);
          if (std::abs(val(cn) - expect) > 1e-14 * std::max(1.0, std::abs(expect)))
            failures.push_back(path + " row " + std::to_string(row) + ": Dcal != D/(2 m_hat)");
        }
    } catch (const std::exception& e) {
      failures.push_back(path + " row " + std::to_string(row) + ": " + e.what());
    }
    ++row;
  }
}

}  // namespace

int verify_manifest(const std::string& manifest_path) {
  try {
    std::ifstream is(manifest_path);
    if (!is) {
      emit_diagnostic("io", "cannot open manifest: " + manifest_path);
      return 1;
    }
    const nlohmann::json m = nlohmann::json::parse(is);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<std::string> failures;

    for (const auto& out : m.at("outputs")) {
      const std::string rel = out.at("path").get<std::string>();
      const fs::path p = base / rel;
      if (!fs::exists(p)) {
        failures.push_back("missing output: " + rel);
        continue;
      }
      if (fs::file_size(p) != out.at("bytes").get<std::uint64_t>())
        failures.push_back("size mismatch: " + rel);
      if (file_fnv1a64(p.string()) != out.at("fnv1a64").get<std::uint64_t>())
        failures.push_back("checksum mismatch: " + rel);

      const std::string kind = out.value("kind", "");
      if (kind == "field_dump") {
        try {
          read_field(p.string());  // validates magic, version, cap bounds, checksum
        } catch (const std::exception& e) {
          failures.push_back("field dump invalid: " + rel + " (" + std::string(e.what()) + ")");
        }
      } else if (kind == "corrector_csv") {
        check_corrector_csv(p.string(), m.at("config").value("dim", 2), failures);
      }
    }

    for (const auto& inv : m.at("invariants")) {
      if (!inv.at("pass").get<bool>())
        failures.push_back("recorded invariant failed: " + inv.at("name").get<std::string>());
    }

    if (failures.empty()) return 0;
    nlohmann::json diag;
    diag["error"] = {{"type", "verify"}, {"failures", failures}};
    std::cerr << diag.dump(2) << std::endl;
    return 4;
  } catch (const std::exception& e) {
    emit_diagnostic("runtime", e.what());
    return 1;
  }
}

}  // namespace pchm
