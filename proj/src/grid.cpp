#include "pchm/grid.hpp"

#include <Eigen/Cholesky>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace pchm {

namespace {

bool is_pow2(int n) { return n >= 1 && (n & (n - 1)) == 0; }

}  // namespace

GridField::GridField(int dim, int resolution, std::string tag)
    : dim_(dim), n_(resolution), tag_(std::move(tag)) {
  if (dim < 1 || dim > 8) throw std::invalid_argument("grid dim out of range");
  if (!is_pow2(resolution)) throw std::invalid_argument("grid resolution must be a power of two");
  std::int64_t total = 1;
  for (int a = 0; a < dim; ++a) total *= resolution;
  values_ = Eigen::VectorXd::Zero(total);
}

GridField GridField::from_function(int dim, int resolution,
                                   const std::function<double(const double*)>& f,
                                   std::string tag) {
  GridField g(dim, resolution, std::move(tag));
  std::vector<double> point(static_cast<std::size_t>(dim));
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  for (std::int64_t node = 0; node < g.n_nodes(); ++node) {
    for (int a = 0; a < dim; ++a) point[static_cast<std::size_t>(a)] = static_cast<double>(idx[static_cast<std::size_t>(a)]) / resolution;
    g.values_[node] = f(point.data());
    for (int a = dim - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < resolution) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }
  return g;
}

double GridField::interpolate(const double* point) const {
  // Corner weights of the enclosing cell, periodic wrap.
  int base[8];
  double frac[8];
  for (int a = 0; a < dim_; ++a) {
    double u = point[a] * n_;
    double fl = std::floor(u);
    frac[a] = u - fl;
    long cell = static_cast<long>(fl) % n_;
    if (cell < 0) cell += n_;
    base[a] = static_cast<int>(cell);
  }
  double acc = 0.0;
  const int corners = 1 << dim_;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::int64_t node = 0;
    for (int a = 0; a < dim_; ++a) {
      const int bit = (c >> a) & 1;
      w *= bit ? frac[a] : 1.0 - frac[a];
      int coord = base[a] + bit;
      if (coord >= n_) coord -= n_;
      node = node * n_ + coord;
    }
    acc += w * values_[node];
  }
  return acc;
}

double GridField::integrate_against(const GridField& other) const {
  if (other.dim() != dim_ || other.resolution() != n_)
    throw std::invalid_argument("integrate_against: grid mismatch");
  return values_.dot(other.values_) / static_cast<double>(values_.size());
}

DiffusionMatrix::DiffusionMatrix(Eigen::MatrixXd m) : M(std::move(m)) {
  if (M.rows() != M.cols()) throw std::invalid_argument("diffusion matrix must be square");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("diffusion matrix must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("diffusion matrix must be positive definite");
}

DiffusionMatrix DiffusionMatrix::identity(int d) {
  return DiffusionMatrix(Eigen::MatrixXd::Identity(d, d));
}

DiffusionMatrix DiffusionMatrix::diagonal(const Eigen::VectorXd& diag) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(diag.size(), diag.size());
  m.diagonal() = diag;
  return DiffusionMatrix(std::move(m));
}

void fft_radix2(std::vector<std::complex<double>>& a, int sign) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft length must be a power of two");
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (sign > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& z : a) z *= inv;
  }
}

namespace {

// d-dimensional complex FFT over the node-major array, one axis at a time.
void fft_nd(std::vector<std::complex<double>>& data, int dim, int n, int sign) {
  std::int64_t total = 1;
  for (int a = 0; a < dim; ++a) total *= n;
  std::vector<std::complex<double>> line(static_cast<std::size_t>(n));
  for (int axis = 0; axis < dim; ++axis) {
    std::int64_t stride = 1;
    for (int a = axis + 1; a < dim; ++a) stride *= n;
    const std::int64_t block = stride * n;
    for (std::int64_t start = 0; start < total; start += block) {
      for (std::int64_t off = 0; off < stride; ++off) {
        for (int k = 0; k < n; ++k)
          line[static_cast<std::size_t>(k)] = data[static_cast<std::size_t>(start + off + k * stride)];
        fft_radix2(line, sign);
        for (int k = 0; k < n; ++k)
          data[static_cast<std::size_t>(start + off + k * stride)] = line[static_cast<std::size_t>(k)];
      }
    }
  }
}

// Applies a symbol-of-frequency multiplier in Fourier space and transforms
// back. multiplier receives the signed integer frequency vector.
GridField apply_multiplier(const GridField& g,
                           const std::function<double(const std::vector<double>&)>& multiplier) {
  const int d = g.dim();
  const int n = g.resolution();
  std::vector<std::complex<double>> data(static_cast<std::size_t>(g.n_nodes()));
  for (std::int64_t i = 0; i < g.n_nodes(); ++i) data[static_cast<std::size_t>(i)] = g.values()[i];
  fft_nd(data, d, n, -1);

  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> freq(static_cast<std::size_t>(d));
  for (std::int64_t node = 0; node < g.n_nodes(); ++node) {
    for (int a = 0; a < d; ++a) {
      const int k = idx[static_cast<std::size_t>(a)];
      freq[static_cast<std::size_t>(a)] = k <= n / 2 ? k : k - n;
    }
    data[static_cast<std::size_t>(node)] *= multiplier(freq);
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < n) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }

  fft_nd(data, d, n, +1);
  GridField out(d, n, g.tag());
  for (std::int64_t i = 0; i < g.n_nodes(); ++i)
    out.values()[i] = data[static_cast<std::size_t>(i)].real();
  return out;
}

double quadratic_symbol(const DiffusionMatrix& D, const std::vector<double>& freq) {
  // (2 pi n) . D (2 pi n)
  double s = 0.0;
  const int d = D.dim();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      s += freq[static_cast<std::size_t>(i)] * D.M(i, j) * freq[static_cast<std::size_t>(j)];
  return 4.0 * std::numbers::pi * std::numbers::pi * s;
}

}  // namespace

GridField heat_evolve(const GridField& rho0, const DiffusionMatrix& D, double t) {
  if (t < 0.0) throw std::invalid_argument("heat_evolve: t must be >= 0");
  if (D.dim() != rho0.dim()) throw std::invalid_argument("heat_evolve: dimension mismatch");
  if (t == 0.0) return rho0;
  GridField out = apply_multiplier(
      rho0, [&](const std::vector<double>& freq) { return std::exp(-t * quadratic_symbol(D, freq)); });
  out.set_tag("density");
  return out;
}

GridField resolvent_continuum(const GridField& f, const DiffusionMatrix& D, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("resolvent: lambda must be > 0");
  if (D.dim() != f.dim()) throw std::invalid_argument("resolvent: dimension mismatch");
  GridField out = apply_multiplier(
      f, [&](const std::vector<double>& freq) { return 1.0 / (lambda + quadratic_symbol(D, freq)); });
  out.set_tag("solution");
  return out;
}

Eigen::VectorXd sample_on_cluster(const GridField& g, double eps, const GiantGraph& graph) {
  if (g.dim() != graph.dim()) throw std::invalid_argument("sample_on_cluster: dimension mismatch");
  const std::int64_t n = graph.n_sites();
  Eigen::VectorXd out(n);
  std::vector<double> point(static_cast<std::size_t>(g.dim()));
  for (std::int64_t r = 0; r < n; ++r) {
    for (int a = 0; a < g.dim(); ++a)
      point[static_cast<std::size_t>(a)] = eps * graph.coord(r, a);
    out[r] = g.interpolate(point.data());
  }
  return out;
}

void write_grid(const GridField& g, const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  nlohmann::json header;
  header["d"] = g.dim();
  header["N"] = g.resolution();
  header["tag"] = g.tag();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << header.dump() << "\n";
  os.write(reinterpret_cast<const char*>(g.values().data()),
           static_cast<std::streamsize>(g.values().size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

GridField read_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("grid dump missing header: " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  GridField g(header.at("d").get<int>(), header.at("N").get<int>(), header.value("tag", ""));
  is.read(reinterpret_cast<char*>(g.values().data()),
          static_cast<std::streamsize>(g.values().size() * sizeof(double)));
  if (!is) throw std::runtime_error("grid dump truncated: " + path);
  for (std::int64_t i = 0; i < g.n_nodes(); ++i)
    if (!std::isfinite(g.values()[i])) throw std::runtime_error("grid dump has non-finite values");
  return g;
}

}  // namespace pchm
