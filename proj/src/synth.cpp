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

#include "nrf/synth.hpp"

#include "nrf/error.hpp"
#include "nrf/json_util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

namespace nrf {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

MaterialModel linear_material(int id, const char* name, double at_normal_db, double at_grazing_db,
                              double phase_rad) {
  return {id, name, at_normal_db, (at_grazing_db - at_normal_db) / kHalfPi, phase_rad};
}

}  // namespace

std::vector<MaterialModel> default_materials() {
  // Loss is largest at normal incidence and falls linearly toward grazing.
  return {
      linear_material(0, "water", 2.0, 0.5, 2.8),
      linear_material(1, "vegetation", 4.5, 1.5, 2.6),
      linear_material(2, "concrete", 7.0, 2.5, 2.4),
      linear_material(3, "brick", 10.0, 3.5, 2.2),
  };
}

void validate_materials(const std::vector<MaterialModel>& materials) {
  if (materials.empty()) throw ValidationError("at least one material is required");
  for (std::size_t i = 0; i < materials.size(); ++i) {
    const auto& m = materials[i];
    if (m.id != static_cast<int>(i)) {
      throw ValidationError("material ids must be 0..N-1 in order (got " + std::to_string(m.id) + ")");
    }
    if (m.attenuation_db(0.0) < 0.0 || m.attenuation_db(kHalfPi) < 0.0) {
      throw ValidationError("material '" + m.name + "' amplifies (negative attenuation) on [0, pi/2]");
    }
    if (!std::isfinite(m.a_db) || !std::isfinite(m.b_db_per_rad) || !std::isfinite(m.phase_rad)) {
      throw ValidationError("material '" + m.name + "' has non-finite parameters");
    }
  }
}

Coefficient ground_truth_coefficient(const MaterialModel& material, double angle_rad) {
  if (!(angle_rad >= 0.0 && angle_rad <= kHalfPi)) {
    throw ValidationError("ground_truth_coefficient: angle outside [0, pi/2]");
  }
  return {std::pow(10.0, -material.attenuation_db(angle_rad) / 20.0), material.phase_rad};
}

namespace {

using json_util::Json;

constexpr const char* kSpecFormat = "nrfrt-synth";
constexpr const char* kTruthFormat = "nrfrt-groundtruth";

std::vector<MaterialModel> parse_materials(const Json& arr, const std::string& where) {
  std::vector<MaterialModel> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    MaterialModel m;
    m.id = json_util::get_int(arr[i], "id", w);
    m.name = json_util::get_string(arr[i], "name", w);
    m.a_db = json_util::get_number(arr[i], "a_db", w);
    m.b_db_per_rad = json_util::get_number(arr[i], "b_db_per_rad", w);
    m.phase_rad = json_util::get_number(arr[i], "phase_rad", w);
    out.push_back(m);
  }
  return out;
}

Json materials_json(const std::vector<MaterialModel>& materials) {
  Json arr = Json::array();
  for (const auto& m : materials) {
    Json j;
    j["id"] = m.id;
    j["name"] = m.name;
    j["a_db"] = m.a_db;
    j["b_db_per_rad"] = m.b_db_per_rad;
    j["phase_rad"] = m.phase_rad;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<int> int_list(const Json& arr, const std::string& where) {
  std::vector<int> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_integer()) throw ParseError(where + "[" + std::to_string(i) + "]: expected integer");
    out.push_back(arr[i].get<int>());
  }
  return out;
}

std::pair<double, double> range_or(const Json& obj, const char* key, std::pair<double, double> fallback,
                                   const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ParseError(where + ": field '" + key + "' must be [min, max]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

void check_spec(const SceneGenSpec& s);

}  // namespace

SceneGenSpec parse_gen_spec(const std::string& text, const std::string& source) {
  const Json doc = json_util::parse(text, source);
  json_util::expect_format(doc, kSpecFormat, 1, source);
  SceneGenSpec s;
  const auto& w = source;
  s.seed = static_cast<std::uint64_t>(json_util::int_or(doc, "seed", static_cast<int>(s.seed), w));
  s.carrier_wavelength_m = json_util::number_or(doc, "carrier_wavelength_m", s.carrier_wavelength_m, w);
  std::tie(s.area_x_m, s.area_y_m) = range_or(doc, "area_m", {s.area_x_m, s.area_y_m}, w);
  if (doc.contains("ground_tiles")) {
    const auto tiles = int_list(json_util::get_array(doc, "ground_tiles", w), w + ": ground_tiles");
    if (tiles.size() != 2) throw ParseError(w + ": ground_tiles must be [nx, ny]");
    s.ground_tiles_x = tiles[0];
    s.ground_tiles_y = tiles[1];
  }
  s.buildings = json_util::int_or(doc, "buildings", s.buildings, w);
  std::tie(s.footprint_min_m, s.footprint_max_m) =
      range_or(doc, "footprint_m", {s.footprint_min_m, s.footprint_max_m}, w);
  std::tie(s.height_min_m, s.height_max_m) = range_or(doc, "height_m", {s.height_min_m, s.height_max_m}, w);
  s.building_gap_m = json_util::number_or(doc, "building_gap_m", s.building_gap_m, w);
  s.tx_count = json_util::int_or(doc, "tx_count", s.tx_count, w);
  s.tx_power_watts = json_util::number_or(doc, "tx_power_watts", s.tx_power_watts, w);
  s.tx_mast_m = json_util::number_or(doc, "tx_mast_m", s.tx_mast_m, w);
  s.rx_count = json_util::int_or(doc, "rx_count", s.rx_count, w);
  s.rx_height_m = json_util::number_or(doc, "rx_height_m", s.rx_height_m, w);
  s.rx_clearance_m = json_util::number_or(doc, "rx_clearance_m", s.rx_clearance_m, w);
  if (doc.contains("materials")) s.materials = parse_materials(json_util::get_array(doc, "materials", w), w + ": materials");
  if (doc.contains("ground_materials")) s.ground_materials = int_list(json_util::get_array(doc, "ground_materials", w), w + ": ground_materials");
  if (doc.contains("building_materials")) s.building_materials = int_list(json_util::get_array(doc, "building_materials", w), w + ": building_materials");
  s.noise_db = json_util::number_or(doc, "noise_db", s.noise_db, w);
  s.caps.max_reflections = json_util::int_or(doc, "max_reflections", s.caps.max_reflections, w);
  s.caps.max_paths_per_pair = json_util::int_or(doc, "max_paths_per_pair", s.caps.max_paths_per_pair, w);
  s.max_attempts = json_util::int_or(doc, "max_attempts", s.max_attempts, w);
  check_spec(s);
  return s;
}

SceneGenSpec load_gen_spec(const std::filesystem::path& path) {
  return parse_gen_spec(read_file(path), path.string());
}

std::string dump_gen_spec(const SceneGenSpec& s) {
  Json doc;
  doc["format"] = kSpecFormat;
  doc["version"] = 1;
  doc["seed"] = s.seed;
  doc["carrier_wavelength_m"] = s.carrier_wavelength_m;
  doc["area_m"] = {s.area_x_m, s.area_y_m};
  doc["ground_tiles"] = {s.ground_tiles_x, s.ground_tiles_y};
  doc["buildings"] = s.buildings;
  doc["footprint_m"] = {s.footprint_min_m, s.footprint_max_m};
  doc["height_m"] = {s.height_min_m, s.height_max_m};
  doc["building_gap_m"] = s.building_gap_m;
  doc["tx_count"] = s.tx_count;
  doc["tx_power_watts"] = s.tx_power_watts;
  doc["tx_mast_m"] = s.tx_mast_m;
  doc["rx_count"] = s.rx_count;
  doc["rx_height_m"] = s.rx_height_m;
  doc["rx_clearance_m"] = s.rx_clearance_m;
  doc["materials"] = materials_json(s.materials);
  doc["ground_materials"] = s.ground_materials;
  doc["building_materials"] = s.building_materials;
  doc["noise_db"] = s.noise_db;
  doc["max_reflections"] = s.caps.max_reflections;
  doc["max_paths_per_pair"] = s.caps.max_paths_per_pair;
  doc["max_attempts"] = s.max_attempts;
  return json_util::dump(doc);
}

namespace {

struct Box {
  double x0, y0, x1, y1, height;

  bool inside(double x, double y, double margin) const {
    return x > x0 - margin && x < x1 + margin && y > y0 - margin && y < y1 + margin;
  }
};

void check_spec(const SceneGenSpec& s) {
  auto fail = [](const std::string& m) { throw ValidationError("synth spec: " + m); };
  if (!(s.area_x_m > 0.0 && s.area_y_m > 0.0)) fail("area must be positive");
  if (s.ground_tiles_x < 0 || s.ground_tiles_y < 0) fail("ground_tiles must be non-negative");
  if (s.buildings < 0) fail("buildings must be non-negative");
  if (!(s.footprint_min_m > 0.0 && s.footprint_max_m >= s.footprint_min_m)) fail("bad footprint range");
  if (!(s.height_min_m > 0.0 && s.height_max_m >= s.height_min_m)) fail("bad height range");
  if (s.tx_count < 0 || s.rx_count < 0) fail("node counts must be non-negative");
  if (s.tx_count > 0 && s.buildings == 0) fail("tx nodes need at least one rooftop");
  if (!(s.tx_power_watts > 0.0)) fail("tx_power_watts must be positive");
  if (!(s.tx_mast_m > 0.0)) fail("tx_mast_m must be positive");
  if (!(s.rx_height_m > 0.0)) fail("rx_height_m must be positive");
  validate_materials(s.materials);
  const int nm = static_cast<int>(s.materials.size());
  for (int m : s.ground_materials) if (m < 0 || m >= nm) fail("ground material out of range");
  for (int m : s.building_materials) if (m < 0 || m >= nm) fail("building material out of range");
  if (s.ground_tiles_x * s.ground_tiles_y > 0 && s.ground_materials.empty()) fail("ground_materials empty");
  if (s.buildings > 0 && s.building_materials.empty()) fail("building_materials empty");
}

std::vector<Vec3> rect_xy(double x0, double y0, double x1, double y1, double z) {
  return {Vec3(x0, y0, z), Vec3(x1, y0, z), Vec3(x1, y1, z), Vec3(x0, y1, z)};
}

}  // namespace

Scene gen_scene(const SceneGenSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  Scene scene;
  scene.carrier_wavelength_m = spec.carrier_wavelength_m;
  int next_id = 0;

  const double tx_step = spec.area_x_m / std::max(1, spec.ground_tiles_x);
  const double ty_step = spec.area_y_m / std::max(1, spec.ground_tiles_y);
  for (int j = 0; j < spec.ground_tiles_y; ++j) {
    for (int i = 0; i < spec.ground_tiles_x; ++i) {
      const int tile = j * spec.ground_tiles_x + i;
      const int material = spec.ground_materials[static_cast<std::size_t>(tile) % spec.ground_materials.size()];
      scene.surfaces.push_back(make_surface(next_id++,
                                            rect_xy(i * tx_step, j * ty_step, (i + 1) * tx_step,
                                                    (j + 1) * ty_step, 0.0),
                                            material));
    }
  }

  std::vector<Box> boxes;
  int attempts = 0;
  while (static_cast<int>(boxes.size()) < spec.buildings) {
    if (++attempts > spec.max_attempts) {
      throw ValidationError("gen_scene: could not place " + std::to_string(spec.buildings) +
                            " buildings after " + std::to_string(spec.max_attempts) + " attempts");
    }
    const double w = uniform(spec.footprint_min_m, spec.footprint_max_m);
    const double d = uniform(spec.footprint_min_m, spec.footprint_max_m);
    const double h = uniform(spec.height_min_m, spec.height_max_m);
    const double margin = spec.building_gap_m;
    if (w + 2 * margin >= spec.area_x_m || d + 2 * margin >= spec.area_y_m) continue;
    const double x0 = uniform(margin, spec.area_x_m - margin - w);
    const double y0 = uniform(margin, spec.area_y_m - margin - d);
    const Box b{x0, y0, x0 + w, y0 + d, h};
    const bool overlaps = std::any_of(boxes.begin(), boxes.end(), [&](const Box& o) {
      return b.x0 < o.x1 + margin && o.x0 < b.x1 + margin && b.y0 < o.y1 + margin && o.y0 < b.y1 + margin;
    });
    if (!overlaps) boxes.push_back(b);
  }

  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box& b = boxes[k];
    const int material = spec.building_materials[k % spec.building_materials.size()];
    // Walls with outward normals (-y, +x, +y, -x), then the roof.
    scene.surfaces.push_back(make_surface(next_id++, {Vec3(b.x0, b.y0, 0), Vec3(b.x1, b.y0, 0), Vec3(b.x1, b.y0, b.height), Vec3(b.x0, b.y0, b.height)}, material));
    scene.surfaces.push_back(make_surface(next_id++, {Vec3(b.x1, b.y0, 0), Vec3(b.x1, b.y1, 0), Vec3(b.x1, b.y1, b.height), Vec3(b.x1, b.y0, b.height)}, material));
    scene.surfaces.push_back(make_surface(next_id++, {Vec3(b.x1, b.y1, 0), Vec3(b.x0, b.y1, 0), Vec3(b.x0, b.y1, b.height), Vec3(b.x1, b.y1, b.height)}, material));
    scene.surfaces.push_back(make_surface(next_id++, {Vec3(b.x0, b.y1, 0), Vec3(b.x0, b.y0, 0), Vec3(b.x0, b.y0, b.height), Vec3(b.x0, b.y1, b.height)}, material));
    scene.surfaces.push_back(make_surface(next_id++, rect_xy(b.x0, b.y0, b.x1, b.y1, b.height), material));
  }

  for (int t = 0; t < spec.tx_count; ++t) {
    const Box& b = boxes[static_cast<std::size_t>(t) % boxes.size()];
    // Later transmitters sharing a roof are spread along its diagonal.
    const int on_roof = t / static_cast<int>(boxes.size());
    const double f = 0.5 + 0.25 * on_roof / std::max(1, (spec.tx_count - 1) / static_cast<int>(boxes.size()) + 1);
    const Vec3 pos(b.x0 + f * (b.x1 - b.x0), b.y0 + f * (b.y1 - b.y0), b.height + spec.tx_mast_m);
    scene.tx_nodes.push_back(TxNode{t, pos, spec.tx_power_watts});
  }

  attempts = 0;
  while (static_cast<int>(scene.rx_nodes.size()) < spec.rx_count) {
    if (++attempts > spec.max_attempts + 100 * spec.rx_count) {
      throw ValidationError("gen_scene: could not place " + std::to_string(spec.rx_count) + " rx nodes");
    }
    const double x = uniform(0.0, spec.area_x_m);
    const double y = uniform(0.0, spec.area_y_m);
    const bool blocked = std::any_of(boxes.begin(), boxes.end(),
                                     [&](const Box& b) { return b.inside(x, y, spec.rx_clearance_m); });
    if (blocked) continue;
    scene.rx_nodes.push_back(RxNode{static_cast<int>(scene.rx_nodes.size()), Vec3(x, y, spec.rx_height_m)});
  }

  validate(scene);
  return scene;
}

Coefficient GroundTruth::coefficient(int surface_id, double angle_rad) const {
  return ground_truth_coefficient(material_of(surface_id), angle_rad);
}

const MaterialModel& GroundTruth::material_of(int surface_id) const {
  if (surface_id < 0 || static_cast<std::size_t>(surface_id) >= surface_material.size()) {
    throw ValidationError("ground truth has no surface " + std::to_string(surface_id));
  }
  const int m = surface_material[static_cast<std::size_t>(surface_id)];
  if (m < 0 || static_cast<std::size_t>(m) >= materials.size()) {
    throw ValidationError("surface " + std::to_string(surface_id) + " has no ground-truth material");
  }
  return materials[static_cast<std::size_t>(m)];
}

GroundTruth ground_truth_for(const Scene& scene, const std::vector<MaterialModel>& materials) {
  validate_materials(materials);
  GroundTruth gt;
  gt.materials = materials;
  for (const auto& s : scene.surfaces) {
    if (s.material_id < 0 || static_cast<std::size_t>(s.material_id) >= materials.size()) {
      throw ValidationError("surface " + std::to_string(s.id) + " has no valid material label");
    }
    gt.surface_material.push_back(s.material_id);
  }
  return gt;
}

std::string dump_ground_truth(const GroundTruth& truth) {
  Json doc;
  doc["format"] = kTruthFormat;
  doc["version"] = 1;
  doc["materials"] = materials_json(truth.materials);
  doc["surface_material"] = truth.surface_material;
  return json_util::dump(doc);
}

GroundTruth parse_ground_truth(const std::string& text, const std::string& source) {
  const Json doc = json_util::parse(text, source);
  json_util::expect_format(doc, kTruthFormat, 1, source);
  GroundTruth gt;
  gt.materials = parse_materials(json_util::get_array(doc, "materials", source), source + ": materials");
  gt.surface_material = int_list(json_util::get_array(doc, "surface_material", source), source + ": surface_material");
  validate_materials(gt.materials);
  for (int m : gt.surface_material) {
    if (m < 0 || static_cast<std::size_t>(m) >= gt.materials.size()) {
      throw ValidationError(source + ": surface_material refers to unknown material " + std::to_string(m));
    }
  }
  return gt;
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  write_file_atomic(path, dump_ground_truth(truth));
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_file(path), path.string());
}

std::vector<Measurement> gen_measurements(const Scene& scene, const PathSet& paths,
                                          const GroundTruth& truth, double noise_db,
                                          std::uint64_t seed) {
  if (noise_db < 0.0) throw ValidationError("noise_db must be non-negative");
  const PaddedBatch batch = pad(scene, paths);
  const RenderResult r = render_with(batch, [&](double angle, int surface) {
    return truth.coefficient(surface, angle);
  });
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_db > 0.0 ? noise_db : 1.0);
  std::vector<Measurement> out;
  out.reserve(static_cast<std::size_t>(batch.n_rx));
  for (int d = 0; d < batch.n_rx; ++d) {
    double p = r.power_dbm[static_cast<std::size_t>(d)];
    if (noise_db > 0.0 && p != kNoSignal) p += noise(rng);
    out.push_back({batch.rx_ids[static_cast<std::size_t>(d)], p});
  }
  return out;
}

std::string dump_measurements_csv(const std::vector<Measurement>& m) {
  std::string out = "rx_id,P_rx_dBm\n";
  char buf[64];
  for (const auto& x : m) {
    if (x.power_dbm == kNoSignal) {
      out += std::to_string(x.rx_id) + ",-inf\n";
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.17g\n", x.rx_id, x.power_dbm);
      out += buf;
    }
  }
  return out;
}

std::vector<Measurement> parse_measurements_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "rx_id,P_rx_dBm") {
    throw ParseError(source + ":1: expected header 'rx_id,P_rx_dBm'");
  }
  std::vector<Measurement> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = source + ":" + std::to_string(line_no);
    if (comma == std::string::npos) throw ParseError(where + ": expected 2 fields");
    Measurement m;
    const auto r1 = std::from_chars(line.data(), line.data() + comma, m.rx_id);
    if (r1.ec != std::errc() || r1.ptr != line.data() + comma) throw ParseError(where + ": bad rx_id");
    const std::string value = line.substr(comma + 1);
    if (value == "-inf") {
      m.power_dbm = kNoSignal;
    } else {
      const auto r2 = std::from_chars(value.data(), value.data() + value.size(), m.power_dbm);
      if (r2.ec != std::errc() || r2.ptr != value.data() + value.size() || !std::isfinite(m.power_dbm)) {
        throw ParseError(where + ": bad P_rx_dBm '" + value + "'");
      }
    }
    out.push_back(m);
  }
  return out;
}

void save_measurements(const std::vector<Measurement>& m, const std::filesystem::path& path) {
  write_file_atomic(path, dump_measurements_csv(m));
}

std::vector<Measurement> load_measurements(const std::filesystem::path& path) {
  return parse_measurements_csv(read_file(path), path.string());
}

}  // namespace nrf
