#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pchm/grid.hpp"

namespace pchm {

// Validation failures exit with code 2, numerical non-convergence with 3.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CliOverrides {
  std::string out_dir;     // empty = take from config
  bool has_seed = false;
  std::uint64_t seed = 0;
  int workers = 0;         // 0 = config / PCHM_WORKERS / 1
  double tol = 0.0;        // 0 = config default
};

// Parses, schema-validates (unknown keys rejected) and runs the experiment
// named in the config file. Writes outputs + manifest.json atomically into
// the output directory. Returns the process exit code.
int run_experiment(const std::string& config_path, const CliOverrides& overrides);

// Re-checks a manifest: file checksums and the recorded invariants.
int verify_manifest(const std::string& manifest_path);

// Grid function descriptors used for test functions and density profiles:
//   {"type":"constant","value":v}
//   {"type":"cosine","axis":a,"k":k,"amplitude":A,"mean":m}   m + A cos(2 pi k x_a)
//   {"type":"sine","axis":a,"k":k,"amplitude":A,"mean":m}
//   {"type":"sum","terms":[...]}
GridField make_grid_function(const nlohmann::json& spec, int dim, int resolution);

// FNV-1a of a file's bytes; used for manifest checksums.
std::uint64_t file_fnv1a64(const std::string& path);

// Write-to-temp-then-rename.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace pchm
