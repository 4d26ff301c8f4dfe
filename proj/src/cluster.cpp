#include "pchm/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "pchm/parallel.hpp"
#include "pchm/rng.hpp"

namespace pchm {

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::int64_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::int64_t{0});
  }

  std::int64_t find(std::int64_t x) {
    std::int64_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::int64_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  // Union by smaller root index: the representative is always the smallest
  // site of its component, which makes the result order-independent.
  void unite(std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b)
      parent_[b] = a;
    else
      parent_[a] = b;
  }

 private:
  std::vector<std::int64_t> parent_;
};

}  // namespace

ClusterLabeling label_components(const ConductanceField& field) {
  const TorusLattice& lat = field.lattice();
  const std::int64_t n = lat.n_sites();
  const int d = lat.dim();

  UnionFind uf(n);
  std::vector<std::uint8_t> touched(static_cast<std::size_t>(n), 0);
  for (std::int64_t site = 0; site < n; ++site) {
    for (int axis = 0; axis < d; ++axis) {
      if (field.weight(site, axis) > 0.0) {
        const std::int64_t other = lat.neighbor(site, axis, +1);
        uf.unite(site, other);
        touched[static_cast<std::size_t>(site)] = 1;
        touched[static_cast<std::size_t>(other)] = 1;
      }
    }
  }

  ClusterLabeling out;
  out.component_id.assign(static_cast<std::size_t>(n), -1);
  out.giant_mask.assign(static_cast<std::size_t>(n), 0);

  // Enumerate components in order of their minimal site, so component ids are
  // deterministic as well.
  std::unordered_map<std::int64_t, std::int64_t> id_of_root;
  for (std::int64_t site = 0; site < n; ++site) {
    if (!touched[static_cast<std::size_t>(site)]) continue;
    const std::int64_t root = uf.find(site);
    auto [it, inserted] = id_of_root.try_emplace(root, static_cast<std::int64_t>(out.component_sizes.size()));
    if (inserted) out.component_sizes.push_back(0);
    out.component_id[static_cast<std::size_t>(site)] = it->second;
    out.component_sizes[static_cast<std::size_t>(it->second)] += 1;
  }

  if (!out.component_sizes.empty()) {
    // Largest component; ids are ordered by minimal site, so the first
    // maximal id realizes the lexicographic tie-break.
    std::int64_t best = 0;
    for (std::int64_t id = 1; id < out.n_components(); ++id)
      if (out.component_sizes[static_cast<std::size_t>(id)] >
          out.component_sizes[static_cast<std::size_t>(best)])
        best = id;
    out.giant_id = best;
    for (std::int64_t site = 0; site < n; ++site)
      if (out.component_id[static_cast<std::size_t>(site)] == best)
        out.giant_mask[static_cast<std::size_t>(site)] = 1;
    out.m_hat = static_cast<double>(out.giant_size()) / static_cast<double>(n);
  }
  return out;
}

std::vector<Bond> giant_bonds(const ConductanceField& field, const ClusterLabeling& labeling) {
  if (static_cast<std::int64_t>(labeling.component_id.size()) != field.lattice().n_sites())
    throw std::invalid_argument("labeling does not match field dimensions");
  GiantGraph graph(field, labeling);
  return graph.bonds();
}

GiantGraph::GiantGraph(const ConductanceField& field, const ClusterLabeling& labeling)
    : dim_(field.dim()), side_(field.side()), m_hat_(labeling.m_hat), lat_(field.lattice()) {
  const std::int64_t n_all = lat_.n_sites();
  if (static_cast<std::int64_t>(labeling.giant_mask.size()) != n_all)
    throw std::invalid_argument("labeling does not match field dimensions");

  rank_of_.assign(static_cast<std::size_t>(n_all), -1);
  for (std::int64_t site = 0; site < n_all; ++site) {
    if (labeling.giant_mask[static_cast<std::size_t>(site)]) {
      rank_of_[static_cast<std::size_t>(site)] = static_cast<std::int64_t>(sites_.size());
      sites_.push_back(site);
    }
  }

  const std::int64_t n = n_sites();
  fwd_.assign(static_cast<std::size_t>(n * dim_), -1);
  bwd_.assign(static_cast<std::size_t>(n * dim_), -1);
  wfwd_.assign(static_cast<std::size_t>(n * dim_), 0.0);
  wbwd_.assign(static_cast<std::size_t>(n * dim_), 0.0);
  degree_.assign(static_cast<std::size_t>(n), 0);
  nbr_.assign(static_cast<std::size_t>(n * 2 * dim_), -1);
  nbr_rate_.assign(static_cast<std::size_t>(n * 2 * dim_), 0.0);
  nbr_move_.assign(static_cast<std::size_t>(n * 2 * dim_), 0);
  lambda_.assign(static_cast<std::size_t>(n), 0.0);

  for (std::int64_t r = 0; r < n; ++r) {
    const std::int64_t site = sites_[static_cast<std::size_t>(r)];
    for (int axis = 0; axis < dim_; ++axis) {
      const double w = field.weight(site, axis);
      if (w <= 0.0) continue;
      const std::int64_t other = lat_.neighbor(site, axis, +1);
      const std::int64_t ro = rank_of_[static_cast<std::size_t>(other)];
      if (ro < 0) continue;  // bond leaves the giant mask, carries no weight here
      fwd_[r * dim_ + axis] = static_cast<std::int32_t>(ro);
      wfwd_[r * dim_ + axis] = w;
      bwd_[ro * dim_ + axis] = static_cast<std::int32_t>(r);
      wbwd_[ro * dim_ + axis] = w;
      bonds_.push_back(Bond{static_cast<std::int32_t>(r), static_cast<std::int32_t>(ro),
                            static_cast<std::int32_t>(axis), w});
      total_bond_rate_ += w;
    }
  }

  for (std::int64_t r = 0; r < n; ++r) {
    int k = 0;
    for (int axis = 0; axis < dim_; ++axis) {
      if (fwd_[r * dim_ + axis] >= 0) {
        nbr_[r * 2 * dim_ + k] = fwd_[r * dim_ + axis];
        nbr_rate_[r * 2 * dim_ + k] = wfwd_[r * dim_ + axis];
        nbr_move_[r * 2 * dim_ + k] = axis + 1;
        lambda_[static_cast<std::size_t>(r)] += wfwd_[r * dim_ + axis];
        ++k;
      }
      if (bwd_[r * dim_ + axis] >= 0) {
        nbr_[r * 2 * dim_ + k] = bwd_[r * dim_ + axis];
        nbr_rate_[r * 2 * dim_ + k] = wbwd_[r * dim_ + axis];
        nbr_move_[r * 2 * dim_ + k] = -(axis + 1);
        lambda_[static_cast<std::size_t>(r)] += wbwd_[r * dim_ + axis];
        ++k;
      }
    }
    degree_[static_cast<std::size_t>(r)] = k;
  }
}

int GiantGraph::coord(std::int64_t rank, int axis) const {
  return lat_.coord(sites_[static_cast<std::size_t>(rank)], axis);
}

MEstimate estimate_m(const FieldLaw& law, int dim, int side, double cap, int n_samples,
                     std::uint64_t seed, int workers) {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  MEstimate est;
  est.rows.resize(static_cast<std::size_t>(n_samples));
  parallel_for(n_samples, workers, [&](std::int64_t i) {
    const std::uint64_t s = derive_stream_key(seed, "estimate_m", static_cast<std::uint64_t>(i));
    const ConductanceField field = sample_field(law, dim, side, cap, s);
    const ClusterLabeling lab = label_components(field);
    est.rows[static_cast<std::size_t>(i)] =
        MEstimate::Row{s, side, lab.m_hat, lab.n_components(), lab.giant_size()};
  });
  double sum = 0.0;
  for (const auto& r : est.rows) sum += r.m_hat;
  est.mean = sum / n_samples;
  if (n_samples > 1) {
    double ss = 0.0;
    for (const auto& r : est.rows) ss += (r.m_hat - est.mean) * (r.m_hat - est.mean);
    est.stderr_ = std::sqrt(ss / (n_samples - 1.0) / n_samples);
  }
  return est;
}

}  // namespace pchm
