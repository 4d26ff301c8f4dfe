#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pchm/experiment.hpp"

namespace {

// Experiment subcommands share the same flag surface; the config file's
// "experiment" field must match the subcommand name.
struct SubArgs {
  std::string config_path;
  pchm::CliOverrides overrides;
};

void add_experiment_flags(CLI::App* sub, SubArgs& args) {
  sub->add_option("--config", args.config_path, "experiment config file (JSON)")->required();
  sub->add_option("--out", args.overrides.out_dir, "output directory (overrides config)");
  sub->add_option_function<std::uint64_t>(
      "--seed",
      [&args](const std::uint64_t& s) {
        args.overrides.has_seed = true;
        args.overrides.seed = s;
      },
      "master seed override");
  sub->add_option("--workers", args.overrides.workers,
                  "worker threads (default: config, then PCHM_WORKERS, then 1)");
  sub->add_option("--tol", args.overrides.tol, "solver tolerance override");
}

int run_with_kind_check(const SubArgs& args, const std::string& kind) {
  // Reject configs whose experiment field does not match the subcommand.
  std::ifstream is(args.config_path);
  if (is) {
    try {
      const nlohmann::json cfg = nlohmann::json::parse(is);
      if (cfg.contains("experiment") && cfg.at("experiment").get<std::string>() != kind) {
        nlohmann::json diag;
        diag["error"] = {{"type", "validation"},
                         {"message", "config experiment '" +
                                         cfg.at("experiment").get<std::string>() +
                                         "' does not match subcommand '" + kind + "'"}};
        std::cerr << diag.dump() << std::endl;
        return 2;
      }
    } catch (const nlohmann::json::exception&) {
      // run_experiment reports the parse error with a proper diagnostic
    }
  }
  return pchm::run_experiment(args.config_path, args.overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pchm - random conductance lab: percolation clusters, correctors, walks, exclusion"};
  app.require_subcommand(1);

  const std::vector<std::string> kinds = {"gen-env", "cluster-stats", "corrector", "resolvent",
                                          "walk",    "exclusion",     "hydro"};
  std::vector<SubArgs> sub_args(kinds.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    CLI::App* sub = app.add_subcommand(kinds[i], "run a " + kinds[i] + " experiment");
    add_experiment_flags(sub, sub_args[i]);
  }

  std::string manifest_path;
  CLI::App* verify = app.add_subcommand("verify", "re-check an experiment manifest");
  verify->add_option("manifest", manifest_path, "path to manifest.json")->required();

  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) return pchm::verify_manifest(manifest_path);
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (app.get_subcommand(kinds[i])->parsed()) return run_with_kind_check(sub_args[i], kinds[i]);
  }
  return 2;
}
