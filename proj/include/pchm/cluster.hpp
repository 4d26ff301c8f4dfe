#pragma once

#include <cstdint>
#include <vector>

#include "pchm/field.hpp"

namespace pchm {

// Connected components of the positive-conductance graph on the torus.
// component_id is -1 for sites with no incident positive bond.
struct ClusterLabeling {
  std::vector<std::int64_t> component_id;
  std::vector<std::int64_t> component_sizes;
  std::int64_t giant_id = -1;  // -1 when there is no component at all
  std::vector<std::uint8_t> giant_mask;
  double m_hat = 0.0;

  std::int64_t giant_size() const {
    return giant_id < 0 ? 0 : component_sizes[static_cast<std::size_t>(giant_id)];
  }
  std::int64_t n_components() const {
    return static_cast<std::int64_t>(component_sizes.size());
  }
};

// Union-find over all bonds with positive weight. The giant component is the
// largest one; ties break toward the component containing the smallest site
// index (lexicographically smallest coordinate vector).
ClusterLabeling label_components(const ConductanceField& field);

struct Bond {
  std::int32_t a = -1;  // giant rank of x
  std::int32_t b = -1;  // giant rank of x + e_axis
  std::int32_t axis = 0;
  double weight = 0.0;
};

// Positive-conductance bonds with both endpoints in the giant mask.
std::vector<Bond> giant_bonds(const ConductanceField& field, const ClusterLabeling& labeling);

// Compact view of the giant subgraph. Giant sites are ranked by ascending
// lattice site index; every downstream solver and sampler works in rank
// coordinates. Immutable after construction.
class GiantGraph {
 public:
  GiantGraph(const ConductanceField& field, const ClusterLabeling& labeling);

  int dim() const { return dim_; }
  int side() const { return side_; }
  std::int64_t n_sites() const { return static_cast<std::int64_t>(sites_.size()); }
  std::int64_t site_of(std::int64_t rank) const { return sites_[static_cast<std::size_t>(rank)]; }
  std::int64_t rank_of(std::int64_t site) const { return rank_of_[static_cast<std::size_t>(site)]; }
  const std::vector<std::int64_t>& sites() const { return sites_; }
  double m_hat() const { return m_hat_; }

  // Forward/backward neighbor within the giant along an axis; -1 if the bond
  // leaves the mask or has zero weight.
  std::int32_t fwd(std::int64_t rank, int axis) const { return fwd_[rank * dim_ + axis]; }
  std::int32_t bwd(std::int64_t rank, int axis) const { return bwd_[rank * dim_ + axis]; }
  double weight_fwd(std::int64_t rank, int axis) const { return wfwd_[rank * dim_ + axis]; }
  double weight_bwd(std::int64_t rank, int axis) const { return wbwd_[rank * dim_ + axis]; }

  // Jump-chain view: neighbors of a rank with their rates, and the total
  // escape rate lambda(rank).
  int degree(std::int64_t rank) const { return degree_[static_cast<std::size_t>(rank)]; }
  std::int32_t neighbor(std::int64_t rank, int k) const { return nbr_[rank * 2 * dim_ + k]; }
  double rate(std::int64_t rank, int k) const { return nbr_rate_[rank * 2 * dim_ + k]; }
  // Axis and direction of the k-th neighbor move, encoded as +-(axis+1).
  int move(std::int64_t rank, int k) const { return nbr_move_[rank * 2 * dim_ + k]; }
  double lambda(std::int64_t rank) const { return lambda_[static_cast<std::size_t>(rank)]; }

  const std::vector<Bond>& bonds() const { return bonds_; }
  double total_bond_rate() const { return total_bond_rate_; }

  int coord(std::int64_t rank, int axis) const;

 private:
  int dim_;
  int side_;
  double m_hat_;
  std::vector<std::int64_t> sites_;
  std::vector<std::int64_t> rank_of_;
  std::vector<std::int32_t> fwd_, bwd_;
  std::vector<double> wfwd_, wbwd_;
  std::vector<int> degree_;
  std::vector<std::int32_t> nbr_;
  std::vector<double> nbr_rate_;
  std::vector<int> nbr_move_;
  std::vector<double> lambda_;
  std::vector<Bond> bonds_;
  double total_bond_rate_ = 0.0;
  TorusLattice lat_;
};

struct MEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  struct Row {
    std::uint64_t seed;
    int side;
    double m_hat;
    std::int64_t n_components;
    std::int64_t giant_size;
  };
  std::vector<Row> rows;
};

// Sample mean and standard error of m_hat over i.i.d. field replicas.
// Replica i uses the stream key derive_stream_key(seed, "estimate_m", i).
MEstimate estimate_m(const FieldLaw& law, int dim, int side, double cap, int n_samples,
                     std::uint64_t seed, int workers = 1);

}  // namespace pchm
