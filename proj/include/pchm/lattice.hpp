#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pchm {

// Periodic box Z_L^d. Sites are enumerated row-major over coordinates: the
// first coordinate is the most significant, so index order coincides with
// lexicographic order of coordinate vectors.
class TorusLattice {
 public:
  TorusLattice(int dim, int side) : dim_(dim), side_(side) {
    if (dim < 1 || dim > 8) throw std::invalid_argument("lattice dim out of range");
    if (side < 2) throw std::invalid_argument("lattice side must be >= 2");
    strides_.assign(dim, 1);
    n_sites_ = 1;
    for (int a = dim - 1; a >= 0; --a) {
      strides_[a] = n_sites_;
      n_sites_ *= side;
      if (n_sites_ > (std::int64_t{1} << 40))
        throw std::invalid_argument("lattice too large");
    }
  }

  int dim() const { return dim_; }
  int side() const { return side_; }
  std::int64_t n_sites() const { return n_sites_; }
  std::int64_t n_bond_slots() const { return n_sites_ * dim_; }

  std::int64_t index_of(const std::vector<int>& coords) const {
    std::int64_t idx = 0;
    for (int a = 0; a < dim_; ++a) idx += static_cast<std::int64_t>(coords[a]) * strides_[a];
    return idx;
  }

  void coords_of(std::int64_t idx, int* out) const {
    for (int a = 0; a < dim_; ++a) {
      out[a] = static_cast<int>(idx / strides_[a]);
      idx %= strides_[a];
    }
  }

  int coord(std::int64_t idx, int axis) const {
    return static_cast<int>((idx / strides_[axis]) % side_);
  }

  // Site shifted by +/-1 along an axis, periodic wrap.
  std::int64_t neighbor(std::int64_t idx, int axis, int step) const {
    const std::int64_t s = strides_[axis];
    const int c = static_cast<int>((idx / s) % side_);
    int cn = c + step;
    if (cn >= side_) cn -= side_;
    if (cn < 0) cn += side_;
    return idx + static_cast<std::int64_t>(cn - c) * s;
  }

 private:
  int dim_;
  int side_;
  std::int64_t n_sites_;
  std::vector<std::int64_t> strides_;
};

}  // namespace pchm
