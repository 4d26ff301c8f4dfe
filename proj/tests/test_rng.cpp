#include "doctest.h"

#include <cmath>
#include <set>

#include "pchm/rng.hpp"

using namespace pchm;

TEST_CASE("counter rng is deterministic per key") {
  CounterRng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    any_diff = any_diff || va != c.next_u64();
  }
  CHECK(any_diff);
}

TEST_CASE("u01 stays in [0,1) and u01_open in (0,1)") {
  CounterRng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.u01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.u01_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("below(n) covers the full range") {
  CounterRng rng(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto k = rng.below(5);
    CHECK(k < 5);
    seen.insert(k);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("derived stream keys separate by purpose and index") {
  const auto a = derive_stream_key(1, "walk", 0);
  const auto b = derive_stream_key(1, "walk", 1);
  const auto c = derive_stream_key(1, "exclusion", 0);
  const auto d = derive_stream_key(2, "walk", 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(derive_stream_key(1, "walk", 0) == a);
}

TEST_CASE("exponential has the right mean") {
  CounterRng rng(3);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += rng.exponential(2.0);
  // mean 1/2, sd of the average = 0.5/sqrt(n)
  CHECK(std::abs(sum / n - 0.5) < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}
