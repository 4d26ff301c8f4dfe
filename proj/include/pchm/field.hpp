#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pchm/lattice.hpp"

namespace pchm {

// Base law for the positive part of a zero-inflated mixture.
struct PositiveLaw {
  enum class Kind { Constant, Uniform };
  Kind kind = Kind::Constant;
  double a = 1.0;  // constant value, or lower uniform bound
  double b = 1.0;  // upper uniform bound

  static PositiveLaw constant(double c) { return {Kind::Constant, c, c}; }
  static PositiveLaw uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
};

// One rule of a deterministic layered field: the weight of bonds along
// `bond_axis` equals values[x[modulating_axis] mod values.size()].
struct LayeredRule {
  int bond_axis = 0;
  int modulating_axis = 0;
  std::vector<double> values;
};

struct FieldLaw {
  enum class Kind { Constant, IidUniform, Bernoulli, IidMixture, Layered, Derived };

  Kind kind = Kind::Constant;
  double constant_value = 1.0;          // Constant
  double lo = 0.0, hi = 1.0;            // IidUniform
  double p = 1.0, value = 1.0;          // Bernoulli: value w.p. p, else 0
  double p_zero = 0.0;                  // IidMixture: 0 w.p. p_zero
  PositiveLaw positive;                 // IidMixture: law of the positive part
  std::vector<LayeredRule> rules;       // Layered
  std::string note;                     // Derived: human-readable provenance

  static FieldLaw constant(double c);
  static FieldLaw iid_uniform(double lo, double hi);
  static FieldLaw bernoulli(double p, double value);
  static FieldLaw iid_mixture(double p_zero, PositiveLaw positive);
  static FieldLaw layered(std::vector<LayeredRule> rules);

  bool is_random() const { return kind == Kind::IidUniform || kind == Kind::Bernoulli || kind == Kind::IidMixture; }
  std::string describe() const;
  nlohmann::json to_json() const;
  static FieldLaw from_json(const nlohmann::json& j);
};

// Per-bond conductances on a periodic box. One slot per undirected bond
// {x, x+e}, stored at [site * dim + axis], so omega(x,y) = omega(y,x) by
// construction. Immutable after creation.
class ConductanceField {
 public:
  ConductanceField(TorusLattice lattice, double cap, FieldLaw law, std::uint64_t seed,
                   Eigen::VectorXd weights);

  const TorusLattice& lattice() const { return lat_; }
  int dim() const { return lat_.dim(); }
  int side() const { return lat_.side(); }
  double cap() const { return cap_; }
  const FieldLaw& law() const { return law_; }
  std::uint64_t seed() const { return seed_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  // Weight of the bond {site, site + e_axis}.
  double weight(std::int64_t site, int axis) const {
    return weights_[site * lat_.dim() + axis];
  }

 private:
  TorusLattice lat_;
  double cap_;
  FieldLaw law_;
  std::uint64_t seed_;
  Eigen::VectorXd weights_;
};

// Draws a conductance field. Random laws draw each bond from its own
// counter-based stream keyed by (seed, site, axis), so the result does not
// depend on fill order. Deterministic in (law, seed, dim, side).
ConductanceField sample_field(const FieldLaw& law, int dim, int side, double cap,
                              std::uint64_t seed);

// The binary field with weight 1 where omega(b) > c and 0 otherwise.
ConductanceField threshold_indicator(const ConductanceField& field, double c);

// Binary dump + sibling "<path>.json" manifest with law/seed metadata.
void write_field(const ConductanceField& field, const std::string& path);
ConductanceField read_field(const std::string& path);

// Checksum used by the dump footer: sum of raw weight bit patterns mod 2^64.
std::uint64_t field_checksum(const Eigen::VectorXd& weights);

}  // namespace pchm
