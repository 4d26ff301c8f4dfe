#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pchm/cluster.hpp"

namespace pchm {

// Real-valued function on the regular periodic grid over [0,1)^d, node j at
// j/N per axis, node-major storage with the same row-major convention as the
// lattice. N must be a power of two.
class GridField {
 public:
  GridField(int dim, int resolution, std::string tag = "");

  static GridField from_function(int dim, int resolution,
                                 const std::function<double(const double*)>& f,
                                 std::string tag = "");

  int dim() const { return dim_; }
  int resolution() const { return n_; }
  std::int64_t n_nodes() const { return static_cast<std::int64_t>(values_.size()); }
  const std::string& tag() const { return tag_; }
  void set_tag(std::string tag) { tag_ = std::move(tag); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  double mean() const { return values_.mean(); }

  // Multilinear interpolation at a point of the unit torus (periodic wrap).
  double interpolate(const double* point) const;

  // Grid quadrature of f * this over the torus (exact trapezoid = node mean).
  double integrate_against(const GridField& other) const;

 private:
  int dim_;
  int n_;
  std::string tag_;
  Eigen::VectorXd values_;
};

// Symmetric positive-definite diffusion matrix; validated via Cholesky.
struct DiffusionMatrix {
  Eigen::MatrixXd M;

  explicit DiffusionMatrix(Eigen::MatrixXd m);
  static DiffusionMatrix identity(int d);
  static DiffusionMatrix diagonal(const Eigen::VectorXd& diag);
  int dim() const { return static_cast<int>(M.rows()); }
};

// Exact spectral heat flow: Fourier coefficient at integer frequency n is
// multiplied by exp(-t * (2 pi n) . D (2 pi n)). Conserves the mean exactly.
GridField heat_evolve(const GridField& rho0, const DiffusionMatrix& D, double t);

// Exact spectral resolvent: coefficient-wise division by
// (lambda + (2 pi n) . D (2 pi n)), lambda > 0.
GridField resolvent_continuum(const GridField& f, const DiffusionMatrix& D, double lambda);

// Multilinear interpolation of g at eps * x for every giant site x, in giant
// rank order.
Eigen::VectorXd sample_on_cluster(const GridField& g, double eps, const GiantGraph& graph);

// Dump format: JSON header line {d, N, tag} + '\n' + little-endian f64
// payload, node-major.
void write_grid(const GridField& g, const std::string& path);
GridField read_grid(const std::string& path);

// In-place radix-2 complex FFT, n a power of two. sign = -1 forward, +1
// inverse (inverse includes the 1/n factor).
void fft_radix2(std::vector<std::complex<double>>& a, int sign);

}  // namespace pchm
