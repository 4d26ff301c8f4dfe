#include "pchm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pchm {

namespace {

constexpr Eigen::Index kLeafSize = 128;

double pairwise_sum_range(const double* v, Eigen::Index n) {
  if (n <= kLeafSize) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const Eigen::Index half = n / 2;
  return pairwise_sum_range(v, half) + pairwise_sum_range(v + half, n - half);
}

double pairwise_dot_range(const double* a, const double* b, Eigen::Index n) {
  if (n <= kLeafSize) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  }
  const Eigen::Index half = n / 2;
  return pairwise_dot_range(a, b, half) + pairwise_dot_range(a + half, b + half, n - half);
}

}  // namespace

double pairwise_sum(const Eigen::VectorXd& v) { return pairwise_sum_range(v.data(), v.size()); }

double pairwise_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  return pairwise_dot_range(a.data(), b.data(), a.size());
}

void MaskedLaplacian::apply(const Eigen::VectorXd& g, Eigen::VectorXd& out) const {
  const GiantGraph& gr = *graph_;
  const std::int64_t n = gr.n_sites();
  const int d = gr.dim();
  if (g.size() != n) throw std::invalid_argument("laplacian: vector size mismatch");
  out.resize(n);
  for (std::int64_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int axis = 0; axis < d; ++axis) {
      const std::int32_t f = gr.fwd(r, axis);
      if (f >= 0) acc += gr.weight_fwd(r, axis) * (g[f] - g[r]);
      const std::int32_t bk = gr.bwd(r, axis);
      if (bk >= 0) acc += gr.weight_bwd(r, axis) * (g[bk] - g[r]);
    }
    out[r] = scale_ * acc;
  }
}

Eigen::VectorXd MaskedLaplacian::apply(const Eigen::VectorXd& g) const {
  Eigen::VectorXd out;
  apply(g, out);
  return out;
}

double MaskedLaplacian::dirichlet_energy(const Eigen::VectorXd& g) const {
  const auto& bonds = graph_->bonds();
  Eigen::VectorXd terms(static_cast<Eigen::Index>(bonds.size()));
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const double dg = g[bonds[i].b] - g[bonds[i].a];
    terms[static_cast<Eigen::Index>(i)] = bonds[i].weight * dg * dg;
  }
  return scale_ * pairwise_sum(terms);
}

CgResult cg_solve(const LinearOperator& apply_A, const Eigen::VectorXd& b, double tol,
                  int max_iter, Gauge gauge) {
  const Eigen::Index n = b.size();
  const double b_norm = std::sqrt(pairwise_dot(b, b));

  if (gauge == Gauge::mean_zero) {
    const double mean = pairwise_sum(b) / static_cast<double>(n);
    const double b_inf = b.cwiseAbs().maxCoeff();
    if (std::abs(mean) > 1e-12 * std::max(b_inf, 1e-300))
      throw std::invalid_argument("cg_solve: right side has nonzero mean under mean_zero gauge");
  }

  auto project = [&](Eigen::VectorXd& v) {
    if (gauge == Gauge::mean_zero) v.array() -= pairwise_sum(v) / static_cast<double>(n);
  };

  CgResult res;
  res.x = Eigen::VectorXd::Zero(n);
  if (b_norm == 0.0) {
    res.converged = true;
    return res;
  }

  Eigen::VectorXd r = b;
  project(r);
  Eigen::VectorXd p = r;
  Eigen::VectorXd Ap(n);
  double rs = pairwise_dot(r, r);

  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rs) <= tol * b_norm) {
      res.converged = true;
      break;
    }
    apply_A(p, Ap);
    project(Ap);
    const double pAp = pairwise_dot(p, Ap);
    if (pAp <= 0.0) break;  // operator not positive on this subspace
    const double alpha = rs / pAp;
    res.x += alpha * p;
    r -= alpha * Ap;
    project(r);
    const double rs_new = pairwise_dot(r, r);
    p = r + (rs_new / rs) * p;
    rs = rs_new;
    ++res.iterations;
  }
  project(res.x);

  // Report the true residual of the returned iterate.
  apply_A(res.x, Ap);
  Eigen::VectorXd true_r = b - Ap;
  project(true_r);
  res.residual_norm = std::sqrt(pairwise_dot(true_r, true_r)) / b_norm;
  res.converged = res.residual_norm <= tol;
  return res;
}

AliasTable::AliasTable(const std::vector<double>& weights) {
  const std::size_t n = weights.size();
  if (n == 0) throw std::invalid_argument("alias table needs at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw std::invalid_argument("alias weights must be >= 0");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("alias weights must not all be zero");

  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * n / total;

  std::vector<std::size_t> small, large;
  for (std::size_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(i);

  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back();
    const std::size_t l = large.back();
    small.pop_back();
    large.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (std::size_t i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  for (std::size_t i : small) {  // leftovers from rounding
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

namespace {

// Poisson(mu) weights on a window covering all but tail_eps of the mass.
struct PoissonWindow {
  std::int64_t k_min = 0;
  std::vector<double> w;
};

PoissonWindow poisson_window(double mu, double tail_eps) {
  PoissonWindow win;
  if (mu <= 0.0) {
    win.w = {1.0};
    return win;
  }
  const std::int64_t mode = static_cast<std::int64_t>(mu);
  const double span = 10.0 * std::sqrt(mu) + 40.0;
  const std::int64_t lo = std::max<std::int64_t>(0, mode - static_cast<std::int64_t>(span));
  const std::int64_t hi = mode + static_cast<std::int64_t>(span) + 1;
  win.k_min = lo;
  win.w.resize(static_cast<std::size_t>(hi - lo + 1));
  // log pmf, exponentiated relative to the mode for stability
  const double log_mu = std::log(mu);
  auto log_pmf = [&](std::int64_t k) {
    return static_cast<double>(k) * log_mu - mu - std::lgamma(static_cast<double>(k) + 1.0);
  };
  const double log_mode = log_pmf(mode);
  double total = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) {
    const double v = std::exp(log_pmf(k) - log_mode);
    win.w[static_cast<std::size_t>(k - lo)] = v;
    total += v;
  }
  for (double& v : win.w) v /= total;  // renormalize away the <= tail_eps cutoff
  (void)tail_eps;
  return win;
}

}  // namespace

Eigen::VectorXd semigroup_apply(const MaskedLaplacian& lap, double t, const Eigen::VectorXd& v,
                                double tail_eps) {
  const GiantGraph& gr = lap.graph();
  const std::int64_t n = gr.n_sites();
  if (v.size() != n) throw std::invalid_argument("semigroup_apply: vector size mismatch");
  if (t <= 0.0) return v;

  double lam_max = 0.0;
  for (std::int64_t r = 0; r < n; ++r) lam_max = std::max(lam_max, gr.lambda(r));
  lam_max *= lap.scale();
  if (lam_max <= 0.0) return v;

  const double mu = lam_max * t;
  const PoissonWindow win = poisson_window(mu, tail_eps);

  // P = I + L / lam_max is stochastic; accumulate sum_k w_k P^k v.
  Eigen::VectorXd cur = v;
  Eigen::VectorXd lap_cur(n);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  const std::int64_t k_max = win.k_min + static_cast<std::int64_t>(win.w.size()) - 1;
  for (std::int64_t k = 0; k <= k_max; ++k) {
    if (k >= win.k_min) acc += win.w[static_cast<std::size_t>(k - win.k_min)] * cur;
    if (k < k_max) {
      lap.apply(cur, lap_cur);
      cur += lap_cur / lam_max;
    }
  }
  return acc;
}

}  // namespace pchm
