// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "ucts/phantom.hpp"

using namespace ucts;

namespace {

bool in_tissue_envelope(double v) {
  return (v >= 1430.0 && v <= 2900.0) || v == kCouplingSpeed;
}

}  // namespace

TEST_CASE("forearm phantom carries the empirical tissue values") {
  Grid2D grid(64, 64, 1.0e-3);
  PhantomSpec spec;
  spec.seed = 42;
  SosMap map = generate_phantom(spec, grid);

  std::set<double> distinct(map.values.begin(), map.values.end());
  CHECK(distinct.count(2900.0) == 1);  // bone
  CHECK(distinct.count(1450.0) == 1);  // marrow
  CHECK(distinct.count(1580.0) == 1);  // skin
  CHECK(distinct.count(kCouplingSpeed) == 1);
  for (double v : map.values) CHECK(in_tissue_envelope(v));
  // ranged tissues drew from inside their ranges
  bool has_fat = false, has_muscle = false;
  for (double v : distinct) {
    if (v > 1430.0 && v < 1478.0) has_fat = true;
    if (v > 1540.0 && v < 1630.0) has_muscle = true;
  }
  CHECK(has_fat);
  CHECK(has_muscle);
}

TEST_CASE("phantom generation is deterministic per seed") {
  Grid2D grid(48, 48, 1.0e-3);
  PhantomSpec spec;
  spec.seed = 7;
  SosMap a = generate_phantom(spec, grid);
  SosMap b = generate_phantom(spec, grid);
  CHECK(a.values == b.values);
}

TEST_CASE("distinct seeds give structurally distinct phantoms") {
  Grid2D grid(48, 48, 1.0e-3);
  std::set<std::vector<double>> seen;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PhantomSpec spec;
    spec.seed = seed;
    seen.insert(generate_phantom(spec, grid).values);
  }
  CHECK(seen.size() == 100);
}

TEST_CASE("background outside the anatomy is the coupling speed") {
  Grid2D grid(64, 64, 1.0e-3);
  PhantomSpec spec;
  spec.seed = 3;
  SosMap map = generate_phantom(spec, grid);
  // grid corners are always outside the body
  CHECK(map.at(0, 0) == kCouplingSpeed);
  CHECK(map.at(63, 0) == kCouplingSpeed);
  CHECK(map.at(0, 63) == kCouplingSpeed);
  CHECK(map.at(63, 63) == kCouplingSpeed);
}

TEST_CASE("unknown preset is rejected") {
  Grid2D grid(32, 32, 1.0e-3);
  PhantomSpec spec;
  spec.preset = "cranium";
  CHECK_THROWS_AS(generate_phantom(spec, grid), ConfigError);
}

TEST_CASE("shifted preset perturbs tissue speeds within 3%") {
  Grid2D grid(64, 64, 1.0e-3);
  PhantomSpec spec;
  spec.seed = 5;
  spec.preset = "forearm_shifted";
  SosMap map = generate_phantom(spec, grid);
  double vmax = *std::max_element(map.values.begin(), map.values.end());
  CHECK(vmax <= 2900.0 * 1.03 + 1e-9);
  CHECK(vmax > 2900.0 * 0.97 - 1e-9);  // bone still present
  double vmin = *std::min_element(map.values.begin(), map.values.end());
  CHECK(vmin >= 1430.0 * 0.97 - 1e-9);
}
