#include <catch2/catch_amalgamated.hpp>

#include "vba/rng.hpp"

using namespace vba;

TEST_CASE("streams are deterministic given seed") {
  rng::Stream a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("substreams with different tags are distinct") {
  auto a = rng::substream(7, 0, 1);
  auto b = rng::substream(7, 0, 2);
  auto c = rng::substream(7, 1, 1);
  REQUIRE(a.next_u64() != b.next_u64());
  REQUIRE(a.next_u64() != c.next_u64());
}

TEST_CASE("uniform01 stays in [0,1)") {
  rng::Stream s(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("normal has standard moments") {
  rng::Stream s(3);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = s.normal();
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(var - 1.0) < 0.02);
}
