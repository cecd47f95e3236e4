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

#pragma once

#include "nrf/reflectance.hpp"
#include "nrf/renderer.hpp"
#include "nrf/scene.hpp"
#include "nrf/tracer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nrf {

/// Ground-truth material: attenuation_dB(theta) = a_db + b_db_per_rad * theta,
/// constant phase.
struct MaterialModel {
  int id = 0;
  std::string name;
  double a_db = 0.0;
  double b_db_per_rad = 0.0;
  double phase_rad = 0.0;

  double attenuation_db(double angle_rad) const { return a_db + b_db_per_rad * angle_rad; }
};

/// Water, vegetation, concrete and brick, ordered by increasing attenuation.
std::vector<MaterialModel> default_materials();

/// Passivity over [0, pi/2] and dense ids; throws ValidationError.
void validate_materials(const std::vector<MaterialModel>& materials);

Coefficient ground_truth_coefficient(const MaterialModel& material, double angle_rad);

/// Procedural scene description (the synth spec file).
struct SceneGenSpec {
  std::uint64_t seed = 1;
  double carrier_wavelength_m = 0.125;
  double area_x_m = 200.0;
  double area_y_m = 200.0;
  int ground_tiles_x = 1;
  int ground_tiles_y = 1;
  int buildings = 2;
  double footprint_min_m = 20.0;
  double footprint_max_m = 40.0;
  double height_min_m = 10.0;
  double height_max_m = 25.0;
  double building_gap_m = 10.0;
  int tx_count = 2;
  double tx_power_watts = 10.0;
  double tx_mast_m = 3.0;
  int rx_count = 100;
  double rx_height_m = 1.0;
  double rx_clearance_m = 1.0;
  std::vector<MaterialModel> materials = default_materials();
  std::vector<int> ground_materials = {0, 1};
  std::vector<int> building_materials = {2, 3};
  double noise_db = 0.0;
  TraceCaps caps;
  int max_attempts = 10000;

  int surface_count() const { return ground_tiles_x * ground_tiles_y + 5 * buildings; }
};

SceneGenSpec parse_gen_spec(const std::string& text, const std::string& source = "<memory>");
SceneGenSpec load_gen_spec(const std::filesystem::path& path);
std::string dump_gen_spec(const SceneGenSpec& spec);

/// Box buildings (4 walls + roof) on tiled ground, TX on rooftops, RX at a
/// fixed height outside buildings. Deterministic in spec.seed.
Scene gen_scene(const SceneGenSpec& spec);

/// Ground truth consumed by the evaluator: material table plus per-surface label.
struct GroundTruth {
  std::vector<MaterialModel> materials;
  std::vector<int> surface_material;  // indexed by surface id

  Coefficient coefficient(int surface_id, double angle_rad) const;
  const MaterialModel& material_of(int surface_id) const;
};

GroundTruth ground_truth_for(const Scene& scene, const std::vector<MaterialModel>& materials);
std::string dump_ground_truth(const GroundTruth& truth);
GroundTruth parse_ground_truth(const std::string& text, const std::string& source = "<memory>");
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct Measurement {
  int rx_id = 0;
  double power_dbm = 0.0;  // kNoSignal when the rx has no path
};

/// Renders receive power with ground-truth coefficients, optionally adding
/// zero-mean Gaussian noise of `noise_db` standard deviation.
std::vector<Measurement> gen_measurements(const Scene& scene, const PathSet& paths,
                                          const GroundTruth& truth, double noise_db = 0.0,
                                          std::uint64_t seed = 0);

std::string dump_measurements_csv(const std::vector<Measurement>& m);
std::vector<Measurement> parse_measurements_csv(const std::string& text,
                                                const std::string& source = "<memory>");
void save_measurements(const std::vector<Measurement>& m, const std::filesystem::path& path);
std::vector<Measurement> load_measurements(const std::filesystem::path& path);

}  // namespace nrf
