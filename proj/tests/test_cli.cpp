#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PCHM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2);
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  return json::parse(is);
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("corrector subcommand writes the identity row for the constant law") {
  const fs::path dir = fresh_dir("pchm_cli_corrector");
  const json cfg = {{"experiment", "corrector"},
                    {"law", {{"type", "constant"}, {"value", 1.0}}},
                    {"dim", 2},
                    {"cap", 1.0},
                    {"seed", 7},
                    {"sides", {8}},
                    {"n_seeds", 1},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  CHECK(run_cli("corrector --config " + (dir / "cfg.json").string()) == 0);

  const json manifest = read_json(dir / "out" / "manifest.json");
  for (const auto& inv : manifest.at("invariants")) CHECK(inv.at("pass").get<bool>());

  const std::string csv = slurp(dir / "out" / "diffusion.csv");
  CHECK(csv.find("Dcal11") != std::string::npos);
  CHECK(csv.find(",1,") != std::string::npos);  // Dcal11 == 1 for the constant law
  fs::remove_all(dir);
}

TEST_CASE("resolvent rejects lambda = 0 with exit code 2") {
  const fs::path dir = fresh_dir("pchm_cli_badlambda");
  const json cfg = {{"experiment", "resolvent"},
                    {"law", {{"type", "constant"}, {"value", 1.0}}},
                    {"sides", {8}},
                    {"lambda", 0.0},
                    {"f", {{"type", "cosine"}, {"axis", 0}, {"k", 1}, {"amplitude", 1.0}, {"mean", 0.0}}},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  CHECK(run_cli("resolvent --config " + (dir / "cfg.json").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("unknown config keys are rejected") {
  const fs::path dir = fresh_dir("pchm_cli_unknown");
  const json cfg = {{"experiment", "gen-env"},
                    {"law", {{"type", "constant"}, {"value", 1.0}}},
                    {"side", 8},
                    {"bogus_key", 1},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  CHECK(run_cli("gen-env --config " + (dir / "cfg.json").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("subcommand and config experiment must agree") {
  const fs::path dir = fresh_dir("pchm_cli_mismatch");
  const json cfg = {{"experiment", "corrector"},
                    {"law", {{"type", "constant"}, {"value", 1.0}}},
                    {"sides", {8}},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  CHECK(run_cli("hydro --config " + (dir / "cfg.json").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("gen-env reruns reproduce the dump bit for bit") {
  const fs::path dir = fresh_dir("pchm_cli_genenv");
  const json cfg = {{"experiment", "gen-env"},
                    {"law", {{"type", "iid_uniform"}, {"lo", 0.0}, {"hi", 1.0}}},
                    {"side", 16},
                    {"seed", 99},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("gen-env --config " + (dir / "cfg.json").string()) == 0);
  const std::string first = slurp(dir / "out" / "field.pchm");
  REQUIRE(run_cli("gen-env --config " + (dir / "cfg.json").string()) == 0);
  CHECK(first == slurp(dir / "out" / "field.pchm"));
  CHECK(run_cli("verify " + (dir / "out" / "manifest.json").string()) == 0);

  // corrupting the dump must fail verification
  std::fstream fsbin(dir / "out" / "field.pchm",
                     std::ios::binary | std::ios::in | std::ios::out);
  fsbin.seekp(24);
  const double junk = 123.0;
  fsbin.write(reinterpret_cast<const char*>(&junk), sizeof(junk));
  fsbin.close();
  CHECK(run_cli("verify " + (dir / "out" / "manifest.json").string()) != 0);
  fs::remove_all(dir);
}

TEST_CASE("verify flags a tampered diffusion CSV") {
  const fs::path dir = fresh_dir("pchm_cli_tamper");
  const json cfg = {{"experiment", "corrector"},
                    {"law", {{"type", "bernoulli"}, {"p", 0.8}, {"value", 1.0}}},
                    {"sides", {8}},
                    {"n_seeds", 1},
                    {"seed", 3},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("corrector --config " + (dir / "cfg.json").string()) == 0);
  REQUIRE(run_cli("verify " + (dir / "out" / "manifest.json").string()) == 0);

  // swap the D12 column value for an asymmetric one
  const fs::path csv_path = dir / "out" / "diffusion.csv";
  std::string csv = slurp(csv_path);
  const auto header_end = csv.find('\n');
  const auto cols_end = csv.find('\n', header_end + 1);
  const std::string row = csv.substr(header_end + 1, cols_end - header_end - 1);
  // columns: law,L,seed,m_hat,D11,D12,D21,D22,...
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (char ch : row) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  fields[5] = "0.5";  // D12 no longer equals D21
  std::string new_row;
  for (std::size_t i = 0; i < fields.size(); ++i) new_row += (i ? "," : "") + fields[i];
  std::ofstream os(csv_path, std::ios::trunc);
  os << csv.substr(0, header_end + 1) << new_row << "\n";
  os.close();
  CHECK(run_cli("verify " + (dir / "out" / "manifest.json").string()) != 0);
  fs::remove_all(dir);
}

TEST_CASE("hydro subcommand reproduces the unit-law heat-equation run") {
  const fs::path dir = fresh_dir("pchm_cli_hydro");
  const json cfg = {
      {"experiment", "hydro"},
      {"law", {{"type", "constant"}, {"value", 1.0}}},
      {"side", 64},
      {"seed", 5},
      {"workers", 4},
      {"t_macro", 0.05},
      {"n_runs", 20},
      {"cells", 16},
      {"grid_n", 256},
      {"rho0", {{"type", "cosine"}, {"axis", 0}, {"k", 1}, {"amplitude", 0.4}, {"mean", 0.5}}},
      {"phi",
       {{{"type", "constant"}, {"value", 1.0}, {"name", "1"}},
        {{"type", "cosine"}, {"axis", 0}, {"k", 1}, {"amplitude", 1.0}, {"mean", 0.0}, {"name", "cos1"}},
        {{"type", "sine"}, {"axis", 0}, {"k", 1}, {"amplitude", 1.0}, {"mean", 0.0}, {"name", "sin1"}}}},
      {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("hydro --config " + (dir / "cfg.json").string()) == 0);
  const json report = read_json(dir / "out" / "hydro_report.json");
  CHECK(report.at("conservation_violations").get<int>() == 0);
  CHECK(report.at("pairings").size() == 3);
  for (const auto& p : report.at("pairings")) CHECK(p.at("pass_3sigma").get<bool>());
  CHECK(report.at("mean_profile").size() == 16 * 16);
  CHECK(run_cli("verify " + (dir / "out" / "manifest.json").string()) == 0);
  fs::remove_all(dir);
}

TEST_CASE("exclusion pairing-check mode runs end to end") {
  const fs::path dir = fresh_dir("pchm_cli_bolero");
  const json cfg = {
      {"experiment", "exclusion"},
      {"law", {{"type", "constant"}, {"value", 1.0}}},
      {"side", 16},
      {"seed", 6},
      {"mode", "pairing_check"},
      {"t_macro", 0.02},
      {"n_runs", 5},
      {"grid_n", 64},
      {"rho0", {{"type", "constant"}, {"value", 0.5}}},
      {"phi", {{"type", "cosine"}, {"axis", 0}, {"k", 1}, {"amplitude", 1.0}, {"mean", 0.0}}},
      {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("exclusion --config " + (dir / "cfg.json").string()) == 0);
  const json report = read_json(dir / "out" / "pairing_check.json");
  CHECK(report.at("per_run_difference").size() == 5);
  fs::remove_all(dir);
}

TEST_CASE("missing config file exits with code 2") {
  CHECK(run_cli("corrector --config /nonexistent/cfg.json") == 2);
}

TEST_CASE("cluster-stats emits the per-replica CSV") {
  const fs::path dir = fresh_dir("pchm_cli_cstats");
  const json cfg = {{"experiment", "cluster-stats"},
                    {"law", {{"type", "bernoulli"}, {"p", 0.7}, {"value", 1.0}}},
                    {"sides", {8, 16}},
                    {"n_samples", 3},
                    {"seed", 4},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("cluster-stats --config " + (dir / "cfg.json").string()) == 0);
  const std::string csv = slurp(dir / "out" / "cluster_stats.csv");
  CHECK(csv.rfind("seed,L,m_hat,n_components,giant_size", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + 2 sides x 3 replicas
  CHECK(run_cli("verify " + (dir / "out" / "manifest.json").string()) == 0);
  fs::remove_all(dir);
}

TEST_CASE("resolvent subcommand reports a decreasing error column") {
  const fs::path dir = fresh_dir("pchm_cli_resolvent");
  const json cfg = {{"experiment", "resolvent"},
                    {"law", {{"type", "constant"}, {"value", 1.0}}},
                    {"sides", {8, 16}},
                    {"lambda", 1.0},
                    {"grid_n", 64},
                    {"f", {{"type", "cosine"}, {"axis", 0}, {"k", 1}, {"amplitude", 1.0}, {"mean", 0.0}}},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("resolvent --config " + (dir / "cfg.json").string()) == 0);
  const json manifest = read_json(dir / "out" / "manifest.json");
  CHECK(manifest.at("results").at("errors").size() == 2);
  for (const auto& inv : manifest.at("invariants")) CHECK(inv.at("pass").get<bool>());
  fs::remove_all(dir);
}

TEST_CASE("walk subcommand pairs MC estimates with the continuum column") {
  const fs::path dir = fresh_dir("pchm_cli_walk");
  const json cfg = {{"experiment", "walk"},
                    {"law", {{"type", "constant"}, {"value", 1.0}}},
                    {"side", 8},
                    {"t", 0.1},
                    {"n_walkers", 500},
                    {"n_probes", 8},
                    {"grid_n", 64},
                    {"f", {{"type", "cosine"}, {"axis", 0}, {"k", 1}, {"amplitude", 1.0}, {"mean", 0.0}}},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("walk --config " + (dir / "cfg.json").string()) == 0);
  const std::string csv = slurp(dir / "out" / "semigroup.csv");
  CHECK(csv.rfind("probe_site,mc_estimate,stderr,continuum_value", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  fs::remove_all(dir);
}

TEST_CASE("exclusion simulate mode dumps profiles with a conservation audit") {
  const fs::path dir = fresh_dir("pchm_cli_exclusion");
  const json cfg = {{"experiment", "exclusion"},
                    {"law", {{"type", "bernoulli"}, {"p", 0.8}, {"value", 1.0}}},
                    {"side", 16},
                    {"seed", 12},
                    {"t_macro", 0.02},
                    {"record_times", {0.01, 0.02}},
                    {"cells", 4},
                    {"grid_n", 64},
                    {"rho0", {{"type", "constant"}, {"value", 0.4}}},
                    {"out", (dir / "out").string()}};
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run_cli("exclusion --config " + (dir / "cfg.json").string()) == 0);
  const json report = read_json(dir / "out" / "exclusion_report.json");
  CHECK(report.at("conservation_pass").get<bool>());
  CHECK(report.at("snapshots").size() == 2);
  CHECK(report.at("snapshots")[0].at("profile").size() == 16);
  fs::remove_all(dir);
}
