// SPDX-License-Identifier: Apache-2.0
//
// nrfrt: differentiable RF ray tracing with neural reflectance fields
// Copyright (C) 2026 The nrfrt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "nrf/error.hpp"
#include "nrf/renderer.hpp"
#include "nrf/synth.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace nrf;
using namespace nrf::test;

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

SceneGenSpec small_spec() {
  SceneGenSpec s;
  s.seed = 4;
  s.area_x_m = 120.0;
  s.area_y_m = 120.0;
  s.ground_tiles_x = 2;
  s.ground_tiles_y = 1;
  s.buildings = 1;
  s.footprint_min_m = 10.0;
  s.footprint_max_m = 20.0;
  s.height_min_m = 8.0;
  s.height_max_m = 15.0;
  s.tx_count = 1;
  s.tx_mast_m = 5.0;
  s.rx_count = 40;
  return s;
}

}  // namespace

TEST_CASE("ground-truth coefficient examples") {
  const MaterialModel zero{0, "mirror", 0.0, 0.0, 0.0};
  CHECK(ground_truth_coefficient(zero, 0.3).amplitude == 1.0);
  // 20 log10 2 dB halves the amplitude.
  const MaterialModel half{0, "half", 20.0 * std::log10(2.0), 0.0, 1.0};
  CHECK(ground_truth_coefficient(half, 0.0).amplitude == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(20.0 * std::log10(2.0) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK(ground_truth_coefficient(half, 1.0).phase == 1.0);
  CHECK_THROWS_AS(ground_truth_coefficient(half, -0.1), ValidationError);
  CHECK_THROWS_AS(ground_truth_coefficient(half, 1.6), ValidationError);
}

TEST_CASE("default materials are ordered and decrease in loss with angle") {
  const auto mats = default_materials();
  REQUIRE(mats.size() == 4);
  validate_materials(mats);
  for (std::size_t i = 1; i < mats.size(); ++i) CHECK(mats[i].attenuation_db(0.0) > mats[i - 1].attenuation_db(0.0));
  CHECK(mats.front().attenuation_db(0.0) == doctest::Approx(2.0));
  CHECK(mats.back().attenuation_db(0.0) == doctest::Approx(10.0));
  for (const auto& m : mats) {
    CHECK(m.b_db_per_rad < 0.0);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double a = ground_truth_coefficient(m, kHalfPi * i / 100.0).amplitude;
      CHECK(a > prev);  // less loss means larger amplitude
      CHECK(a <= 1.0);
      prev = a;
    }
  }
  // With a positive slope the amplitude decreases instead.
  const MaterialModel rising{0, "rising", 1.0, 2.0, 0.0};
  double prev = 2.0;
  for (int i = 0; i <= 100; ++i) {
    const double a = ground_truth_coefficient(rising, kHalfPi * i / 100.0).amplitude;
    CHECK(a < prev);
    prev = a;
  }
  auto bad = mats;
  bad[1].id = 7;
  CHECK_THROWS_AS(validate_materials(bad), ValidationError);
  bad = mats;
  bad[0].a_db = -1.0;
  CHECK_THROWS_AS(validate_materials(bad), ValidationError);
}

TEST_CASE("generated scenes: box decomposition, rx height, validity") {
  SceneGenSpec spec = small_spec();
  const Scene scene = gen_scene(spec);
  CHECK(scene.surface_count() == spec.surface_count());
  CHECK(scene.surface_count() >= 5);
  CHECK(static_cast<int>(scene.tx_nodes.size()) == spec.tx_count);
  CHECK(static_cast<int>(scene.rx_nodes.size()) == spec.rx_count);
  for (const auto& rx : scene.rx_nodes) CHECK(rx.position.z() == 1.0);
  for (const auto& tx : scene.tx_nodes) CHECK(tx.power_watts == 10.0);
  validate(scene);
  // Generate -> save -> load keeps the scene.
  const auto dir = scratch_dir("synth_scene");
  save_scene(scene, dir / "scene.json");
  const Scene back = load_scene(dir / "scene.json");
  CHECK(dump_scene(back) == dump_scene(scene));
  // Determinism.
  CHECK(dump_scene(gen_scene(spec)) == dump_scene(scene));
  spec.seed = 5;
  CHECK(dump_scene(gen_scene(spec)) != dump_scene(scene));
}

TEST_CASE("random generator specs always give valid scenes") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 30; ++i) {
    SceneGenSpec spec = small_spec();
    spec.seed = rng();
    spec.buildings = 1 + static_cast<int>(rng() % 3);
    spec.ground_tiles_x = 1 + static_cast<int>(rng() % 3);
    spec.ground_tiles_y = 1 + static_cast<int>(rng() % 3);
    spec.tx_count = 1 + static_cast<int>(rng() % 3);
    const Scene s = gen_scene(spec);
    validate(s);
    CHECK(s.surface_count() == spec.surface_count());
    const Scene back = parse_scene(dump_scene(s));
    CHECK(dump_scene(back) == dump_scene(s));
  }
}

TEST_CASE("infeasible placement is reported") {
  SceneGenSpec spec = small_spec();
  spec.area_x_m = 30.0;
  spec.area_y_m = 30.0;
  spec.buildings = 6;
  spec.max_attempts = 200;
  CHECK_THROWS_AS(gen_scene(spec), ValidationError);
}

TEST_CASE("generator spec round trip and validation") {
  const SceneGenSpec spec = small_spec();
  const SceneGenSpec back = parse_gen_spec(dump_gen_spec(spec));
  CHECK(dump_gen_spec(back) == dump_gen_spec(spec));
  CHECK(dump_scene(gen_scene(back)) == dump_scene(gen_scene(spec)));
  CHECK_THROWS_AS(parse_gen_spec(R"({"format":"nrfrt-synth","version":1,"rx_count":-3})"), Error);
  CHECK_THROWS_AS(parse_gen_spec(R"({"format":"other","version":1})"), ParseError);
}

TEST_CASE("ground truth sidecar reproduces the curves bit-exactly") {
  const Scene scene = gen_scene(small_spec());
  const GroundTruth truth = ground_truth_for(scene, default_materials());
  REQUIRE(truth.surface_material.size() == static_cast<std::size_t>(scene.surface_count()));
  const GroundTruth back = parse_ground_truth(dump_ground_truth(truth));
  CHECK(back.surface_material == truth.surface_material);
  std::mt19937_64 rng(2);
  for (int s = 0; s < scene.surface_count(); ++s) {
    for (int k = 0; k < 20; ++k) {
      const double a = uniform(rng, 0.0, kHalfPi);
      const Coefficient x = ground_truth_coefficient(truth.material_of(s), a);
      const Coefficient y = ground_truth_coefficient(back.material_of(s), a);
      CHECK(x.amplitude == y.amplitude);
      CHECK(x.phase == y.phase);
    }
  }
}

TEST_CASE("measurements: LOS-only scene equals Friis power") {
  Scene scene;
  scene.carrier_wavelength_m = 0.125;
  scene.tx_nodes.push_back({0, Vec3(0, 0, 10), 10.0});
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) scene.rx_nodes.push_back({i, Vec3(uniform(rng, 5, 300), uniform(rng, -50, 50), 1.0)});
  const PathSet paths = trace_all(scene, TraceCaps{3, 7});
  const GroundTruth truth = ground_truth_for(scene, default_materials());
  const auto m = gen_measurements(scene, paths, truth);
  REQUIRE(m.size() == scene.rx_nodes.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const long double d = (scene.rx_nodes[i].position - scene.tx_nodes[0].position).norm();
    const long double w = 10.0L * std::pow(0.125L / (4 * oracle::kPi * d), 2.0L);
    CHECK(m[i].power_dbm == doctest::Approx(static_cast<double>(oracle::watts_to_dbm(w))).epsilon(1e-12));
  }
}

TEST_CASE("measurements: transparent materials match a unit-coefficient oracle") {
  SceneGenSpec spec = small_spec();
  for (auto& mat : spec.materials) {
    mat.a_db = 0.0;
    mat.b_db_per_rad = 0.0;
    mat.phase_rad = 0.0;
  }
  const Scene scene = gen_scene(spec);
  const PathSet paths = trace_all(scene, TraceCaps{2, 5});
  const GroundTruth truth = ground_truth_for(scene, spec.materials);
  const auto m = gen_measurements(scene, paths, truth);
  const auto want = oracle::receive_power(scene, paths, [](double, int) { return std::pair{1.0, 0.0}; });
  REQUIRE(m.size() == want.size());
  int finite = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (want[i] == 0) {
      CHECK(m[i].power_dbm == kNoSignal);
      continue;
    }
    ++finite;
    CHECK(m[i].power_dbm == doctest::Approx(static_cast<double>(oracle::watts_to_dbm(want[i]))).epsilon(1e-12));
  }
  CHECK(finite > 0);
}

TEST_CASE("measurements: determinism, noise and csv round trip") {
  const SceneGenSpec spec = small_spec();
  const Scene scene = gen_scene(spec);
  const PathSet paths = trace_all(scene, TraceCaps{2, 5});
  const GroundTruth truth = ground_truth_for(scene, spec.materials);
  const auto a = gen_measurements(scene, paths, truth, 0.0, 1);
  const auto b = gen_measurements(scene, paths, truth, 0.0, 1);
  CHECK(dump_measurements_csv(a) == dump_measurements_csv(b));
  for (const auto& m : a) {
    const PairPaths* pp = paths.find(0, m.rx_id);
    if (pp && !pp->paths.empty()) CHECK(std::isfinite(m.power_dbm));
  }
  const auto n1 = gen_measurements(scene, paths, truth, 2.0, 9);
  const auto n2 = gen_measurements(scene, paths, truth, 2.0, 9);
  CHECK(dump_measurements_csv(n1) == dump_measurements_csv(n2));
  CHECK(dump_measurements_csv(n1) != dump_measurements_csv(a));

  const auto back = parse_measurements_csv(dump_measurements_csv(a));
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].rx_id == a[i].rx_id);
    CHECK(back[i].power_dbm == a[i].power_dbm);
  }
  CHECK_THROWS_AS(parse_measurements_csv("rx_id,P_rx_dBm\n1,abc\n"), ParseError);
}
