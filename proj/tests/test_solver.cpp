#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pchm/cluster.hpp"
#include "pchm/rng.hpp"
#include "pchm/solver.hpp"

using namespace pchm;

namespace {

GiantGraph full_torus_graph(const ConductanceField& field) {
  return GiantGraph(field, label_components(field));
}

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t key) {
  CounterRng rng(key);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 2.0 * rng.u01() - 1.0;
  return v;
}

// Inner product in extended precision, the reference for the pairwise one.
double dot_long(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  long double s = 0.0L;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    s += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
  return static_cast<double>(s);
}

}  // namespace

TEST_CASE("pairwise reductions match extended precision") {
  const auto a = random_vector(10001, 1);
  const auto b = random_vector(10001, 2);
  CHECK(pairwise_dot(a, b) == doctest::Approx(dot_long(a, b)).epsilon(1e-13));
  CHECK(pairwise_sum(a) == doctest::Approx(dot_long(a, Eigen::VectorXd::Ones(a.size()))).epsilon(1e-13));
}

TEST_CASE("laplacian annihilates constants") {
  const auto field = sample_field(FieldLaw::iid_uniform(0.1, 1.0), 2, 8, 1.0, 3);
  const GiantGraph graph = full_torus_graph(field);
  const MaskedLaplacian lap(graph, 2.5);
  const Eigen::VectorXd out = lap.apply(Eigen::VectorXd::Constant(graph.n_sites(), 3.0));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("laplacian stencil on the 4x4 unit torus") {
  // g = indicator of one site: -4 scale there, + scale at the 4 neighbors.
  const auto field = sample_field(FieldLaw::constant(1.0), 2, 4, 1.0, 1);
  const GiantGraph graph = full_torus_graph(field);
  const double scale = 1.75;
  const MaskedLaplacian lap(graph, scale);
  const std::int64_t x = 5;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(graph.n_sites());
  g[x] = 1.0;
  const Eigen::VectorXd out = lap.apply(g);
  int neighbors = 0;
  for (std::int64_t r = 0; r < graph.n_sites(); ++r) {
    if (r == x) {
      CHECK(out[r] == doctest::Approx(-4.0 * scale));
    } else if (out[r] != 0.0) {
      CHECK(out[r] == doctest::Approx(scale));
      ++neighbors;
    }
  }
  CHECK(neighbors == 4);
}

TEST_CASE("laplacian is symmetric and negative semidefinite on masked graphs") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto field =
        sample_field(FieldLaw::iid_mixture(0.4, PositiveLaw::uniform(0.2, 1.0)), 2, 6, 1.0, seed);
    const auto lab = label_components(field);
    if (lab.giant_id < 0) continue;
    const GiantGraph graph(field, lab);
    const MaskedLaplacian lap(graph);
    for (int rep = 0; rep < 100; ++rep) {
      const auto f = random_vector(graph.n_sites(), 100 * seed + rep);
      const auto g = random_vector(graph.n_sites(), 100 * seed + rep + 50);
      const double fg = pairwise_dot(f, lap.apply(g));
      const double gf = pairwise_dot(g, lap.apply(f));
      CHECK(std::abs(fg - gf) <= 1e-10 * f.norm() * g.norm());
      CHECK(pairwise_dot(g, lap.apply(g)) <= 1e-12 * g.squaredNorm());
    }
    // equality only for constants on the (connected) giant
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(graph.n_sites());
    CHECK(std::abs(pairwise_dot(ones, lap.apply(ones))) <= 1e-12);
  }
}

TEST_CASE("dirichlet identity <g,-Lg> = sum_b omega (grad g)^2") {
  const auto field = sample_field(FieldLaw::iid_uniform(0.1, 1.0), 2, 8, 1.0, 17);
  const GiantGraph graph = full_torus_graph(field);
  const double scale = 3.0;
  const MaskedLaplacian lap(graph, scale);
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_vector(graph.n_sites(), 600 + rep);
    const double quad = -pairwise_dot(g, lap.apply(g));
    const double dirichlet = lap.dirichlet_energy(g);
    CHECK(quad == doctest::Approx(dirichlet).epsilon(1e-12));
  }
}

TEST_CASE("cg on the identity converges in one iteration") {
  const Eigen::VectorXd b = random_vector(50, 4);
  const auto res = cg_solve([](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out = v; }, b,
                            1e-12, 100, Gauge::none);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK((res.x - b).norm() <= 1e-12 * b.norm());
}

TEST_CASE("cg with mean-zero gauge matches the dense pseudo-inverse") {
  const auto field = sample_field(FieldLaw::constant(1.0), 2, 4, 1.0, 1);
  const GiantGraph graph = full_torus_graph(field);
  const MaskedLaplacian lap(graph);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(graph.n_sites());
  b[3] = 1.0;
  b[12] = -1.0;  // e_x - e_y has zero mean

  const auto res = cg_solve(
      [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
        lap.apply(v, out);
        out = -out;
      },
      b, 1e-12, 1000, Gauge::mean_zero);
  CHECK(res.converged);
  CHECK(std::abs(res.x.mean()) <= 1e-12);

  const Eigen::MatrixXd A = -oracles::walk_generator(graph);
  Eigen::VectorXd x_ref = oracles::pinv_solve(A, b);
  x_ref.array() -= x_ref.mean();
  CHECK((res.x - x_ref).norm() <= 1e-8 * std::max(1.0, x_ref.norm()));
}

TEST_CASE("cg rejects a right side with nonzero mean under the gauge") {
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(16, 1.0);
  CHECK_THROWS_AS(cg_solve([](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out = v; }, b,
                           1e-10, 10, Gauge::mean_zero),
                  std::invalid_argument);
}

TEST_CASE("cg matches dense solves on SPD systems up to 512 unknowns") {
  for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
    const auto field =
        sample_field(FieldLaw::iid_mixture(0.3, PositiveLaw::uniform(0.1, 1.0)), 2, 16, 1.0, seed);
    const auto lab = label_components(field);
    const GiantGraph graph(field, lab);
    REQUIRE(graph.n_sites() <= 512);
    const MaskedLaplacian lap(graph);
    const double lambda = 0.7;
    const Eigen::VectorXd b = random_vector(graph.n_sites(), seed + 900);

    const auto res = cg_solve(
        [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
          lap.apply(v, out);
          out = lambda * v - out;
        },
        b, 1e-12, 5000, Gauge::none);
    CHECK(res.converged);

    const Eigen::MatrixXd A =
        lambda * Eigen::MatrixXd::Identity(graph.n_sites(), graph.n_sites()) -
        oracles::walk_generator(graph);
    const Eigen::VectorXd x_ref = A.llt().solve(b);
    CHECK((res.x - x_ref).norm() <= 1e-9 * x_ref.norm());
  }
}

TEST_CASE("cg reports non-convergence with the best iterate") {
  const auto field = sample_field(FieldLaw::constant(1.0), 2, 8, 1.0, 1);
  const GiantGraph graph = full_torus_graph(field);
  const MaskedLaplacian lap(graph);
  Eigen::VectorXd b = random_vector(graph.n_sites(), 5);
  b.array() -= b.mean();
  const auto res = cg_solve(
      [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
        lap.apply(v, out);
        out = -out;
      },
      b, 1e-14, 2, Gauge::mean_zero);
  CHECK(!res.converged);
  CHECK(res.iterations == 2);
  CHECK(res.residual_norm > 0.0);
}

TEST_CASE("alias table frequencies: symmetric pair") {
  AliasTable table({1.0, 1.0});
  CounterRng rng(8);
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += table.sample(rng) == 1;
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(ones / static_cast<double>(n) - 0.5) <= 3.0 * sigma);
}

TEST_CASE("alias table frequencies: 1:3 weights") {
  AliasTable table({1.0, 3.0});
  CounterRng rng(9);
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += table.sample(rng) == 1;
  // exact multinomial: p = 3/4, sd = sqrt(p(1-p)/n)
  const double sigma = std::sqrt(0.75 * 0.25 / n);
  CHECK(std::abs(ones / static_cast<double>(n) - 0.75) <= 3.0 * sigma);
}

TEST_CASE("alias table degenerate weight") {
  AliasTable table({0.0, 1.0});
  CounterRng rng(10);
  for (int i = 0; i < 1000; ++i) CHECK(table.sample(rng) == 1);
}

TEST_CASE("alias table rejects all-zero weights") {
  CHECK_THROWS_AS(AliasTable({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(AliasTable({}), std::invalid_argument);
}

TEST_CASE("uniformized semigroup matches the dense exponential") {
  for (std::uint64_t seed : {41ull, 42ull}) {
    const auto field =
        sample_field(FieldLaw::iid_uniform(0.2, 1.0), 2, 4, 1.0, seed);
    const GiantGraph graph = full_torus_graph(field);
    const MaskedLaplacian lap(graph);
    const auto v = random_vector(graph.n_sites(), seed + 7);
    for (double t : {0.1, 1.0, 10.0}) {
      const Eigen::VectorXd fast = semigroup_apply(lap, t, v);
      const Eigen::MatrixXd Pt = oracles::expm_symmetric(oracles::walk_generator(graph), t);
      CHECK((fast - Pt * v).cwiseAbs().maxCoeff() <= 1e-9 * v.cwiseAbs().maxCoeff());
    }
  }
}
