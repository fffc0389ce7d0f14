#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <random>

#include "doctest.h"
#include "holoslide/bitgrid.hpp"
#include "holoslide/rng.hpp"

using namespace holoslide;

namespace {
std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "hs_test_common";
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("counter rng is deterministic and stream-separated") {
  CounterRng a(42, 0), b(42, 0), c(42, 1), d(43, 0);
  for (std::uint64_t i = 0; i < 100; ++i) {
    CHECK(a.bits(i) == b.bits(i));
    CHECK(a.bits(i) != c.bits(i));
    CHECK(a.bits(i) != d.bits(i));
  }
}

TEST_CASE("counter rng bounded draws stay in range and cover values") {
  CounterRng rng(7, 3);
  std::vector<int> seen(10, 0);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const std::uint64_t v = rng.below(i, 10);
    REQUIRE(v < 10);
    ++seen[v];
  }
  for (int s : seen) CHECK(s > 50);  // crude uniformity
}

TEST_CASE("counter rng unit draws are in [0,1)") {
  CounterRng rng(9, 0);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = rng.unit(i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("bitgrid set/get/count round about") {
  BitGrid g(130, 7);
  CHECK(g.count() == 0);
  g.set(0, 0, true);
  g.set(129, 6, true);
  g.set(64, 3, true);
  CHECK(g.count() == 3);
  CHECK(g.get(0, 0));
  CHECK(g.get(129, 6));
  CHECK(!g.get(1, 0));
  g.set(64, 3, false);
  CHECK(g.count() == 2);
}

TEST_CASE("count_rect equals brute force on random grids") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint64_t w = 1 + rng() % 200, h = 1 + rng() % 50;
    BitGrid g(w, h);
    for (std::uint64_t y = 0; y < h; ++y)
      for (std::uint64_t x = 0; x < w; ++x)
        if (rng() & 1) g.set(x, y, true);
    const std::uint64_t x0 = rng() % w, y0 = rng() % h;
    const std::uint64_t rw = 1 + rng() % (w - x0), rh = 1 + rng() % (h - y0);
    std::uint64_t expect = 0;
    for (std::uint64_t y = y0; y < y0 + rh; ++y)
      for (std::uint64_t x = x0; x < x0 + rw; ++x)
        if (g.get(x, y)) ++expect;
    CHECK(g.count_rect(x0, y0, rw, rh) == expect);
  }
}

TEST_CASE("runs round-trip random grids") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const std::uint64_t w = 1 + rng() % 80, h = 1 + rng() % 40;
    BitGrid g(w, h);
    for (std::uint64_t y = 0; y < h; ++y)
      for (std::uint64_t x = 0; x < w; ++x)
        if (rng() % 3 == 0) g.set(x, y, true);
    const auto runs = BitGrid::from_runs(w, h, g.to_runs());
    CHECK(runs == g);
  }
}

TEST_CASE("runs start with background") {
  BitGrid g(4, 1);
  g.set(0, 0, true);
  const auto runs = g.to_runs();
  REQUIRE(runs.size() == 2);
  CHECK(runs[0] == 0);  // leading background run of length zero
  CHECK(runs[1] == 1);
}

TEST_CASE("mask file round-trips and rejects bad magic") {
  const auto dir = scratch_dir();
  BitGrid g(100, 40);
  for (std::uint64_t i = 0; i < 100; ++i) g.set(i, (i * 7) % 40, true);
  RleMask m = RleMask::from_grid(2, g);
  write_mask(dir / "a.fg", "HHFG", m);
  std::string magic;
  RleMask back = read_mask(dir / "a.fg", &magic);
  CHECK(magic == "HHFG");
  CHECK(back.level == 2);
  CHECK(back.width == 100);
  CHECK(back.to_grid() == g);

  write_mask(dir / "b.mask", "HHSM", m);
  read_mask(dir / "b.mask", &magic);
  CHECK(magic == "HHSM");

  std::ofstream bad(dir / "bad.fg", std::ios::binary);
  bad << "NOPE1234";
  bad.close();
  CHECK_THROWS_AS(read_mask(dir / "bad.fg"), Error);
}

TEST_CASE("or_downsample reduces by block-any") {
  BitGrid g(5, 5);
  g.set(4, 4, true);
  g.set(0, 0, true);
  BitGrid d = g.or_downsample(1);
  CHECK(d.width() == 3);
  CHECK(d.height() == 3);
  CHECK(d.get(0, 0));
  CHECK(d.get(2, 2));
  CHECK(d.count() == 2);
}
