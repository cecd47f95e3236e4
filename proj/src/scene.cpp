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

#include "nrf/scene.hpp"

#include "nrf/error.hpp"
#include "nrf/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nrf {

namespace {

constexpr double kPlanarityTol = 1e-9;
constexpr double kNormalTol = 1e-12;
constexpr double kRxClearance = 1e-6;
constexpr const char* kSceneFormat = "nrfrt-scene";
constexpr int kSceneVersion = 1;

}  // namespace

bool Surface::contains(const Vec3& p, double tol) const {
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& a = vertices[i];
    const Vec3& b = vertices[(i + 1) % n];
    const Vec3 edge = b - a;
    const double len = edge.norm();
    // Distance of p to the inside of the edge line, positive inside.
    const double inside = normal.dot(edge.cross(p - a)) / len;
    if (inside < -tol) return false;
  }
  return true;
}

double Surface::area() const {
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 1; i + 1 < vertices.size(); ++i) {
    sum += (vertices[i] - vertices[0]).cross(vertices[i + 1] - vertices[0]);
  }
  return 0.5 * std::abs(sum.dot(normal));
}

Surface make_surface(int id, std::vector<Vec3> vertices, int material_id) {
  auto fail = [id](const std::string& what) {
    throw ValidationError("surface " + std::to_string(id) + ": " + what);
  };
  if (vertices.size() < 3) fail("needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!v.allFinite()) fail("non-finite vertex");
  }

  Surface s;
  s.id = id;
  s.material_id = material_id;
  s.vertices = std::move(vertices);

  const Vec3 cross = (s.vertices[1] - s.vertices[0]).cross(s.vertices[2] - s.vertices[1]);
  const double cross_norm = cross.norm();
  if (!(cross_norm > 0.0)) fail("first two edges are collinear");
  s.normal = cross / cross_norm;
  if (std::abs(s.normal.norm() - 1.0) > kNormalTol) fail("normal is not unit length");

  Vec3 centroid = Vec3::Zero();
  for (const auto& v : s.vertices) centroid += v;
  centroid /= static_cast<double>(s.vertices.size());
  s.offset = s.normal.dot(centroid);
  for (const auto& v : s.vertices) {
    if (std::abs(s.signed_distance(v)) > kPlanarityTol) fail("vertices are not coplanar");
  }

  const std::size_t n = s.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 e0 = s.vertices[(i + 1) % n] - s.vertices[i];
    const Vec3 e1 = s.vertices[(i + 2) % n] - s.vertices[(i + 1) % n];
    if (e0.norm() == 0.0) fail("repeated vertex");
    if (s.normal.dot(e0.cross(e1)) < -kPlanarityTol * e0.norm() * e1.norm()) {
      fail("polygon is not convex");
    }
  }
  if (!(s.area() > 0.0)) fail("polygon has zero area");
  return s;
}

const Surface& Scene::surface(int id) const {
  if (id < 0 || id >= surface_count()) {
    throw ValidationError("surface id " + std::to_string(id) + " out of range");
  }
  return surfaces[static_cast<std::size_t>(id)];
}

void validate(const Scene& scene) {
  if (!(scene.carrier_wavelength_m > 0.0) || !std::isfinite(scene.carrier_wavelength_m)) {
    throw ValidationError("carrier_wavelength_m must be positive");
  }
  const int count = scene.surface_count();
  std::vector<int> seen(static_cast<std::size_t>(count), 0);
  for (const auto& s : scene.surfaces) {
    if (s.id < 0 || s.id >= count) {
      throw ValidationError("surface id " + std::to_string(s.id) + " outside 0.." +
                            std::to_string(count - 1));
    }
    if (seen[static_cast<std::size_t>(s.id)]++) {
      throw ValidationError("duplicate surface id " + std::to_string(s.id));
    }
  }
  for (std::size_t i = 0; i < scene.surfaces.size(); ++i) {
    if (scene.surfaces[i].id != static_cast<int>(i)) {
      throw ValidationError("surface id " + std::to_string(scene.surfaces[i].id) +
                            " stored at position " + std::to_string(i));
    }
  }

  auto check_ids = [](const auto& nodes, const char* kind) {
    std::vector<int> ids;
    for (const auto& n : nodes) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw ValidationError(std::string("duplicate ") + kind + " id");
    }
  };
  check_ids(scene.tx_nodes, "tx");
  check_ids(scene.rx_nodes, "rx");

  for (const auto& tx : scene.tx_nodes) {
    if (!(tx.power_watts > 0.0) || !std::isfinite(tx.power_watts)) {
      throw ValidationError("tx " + std::to_string(tx.id) + ": power_watts must be positive");
    }
    if (!tx.position.allFinite()) {
      throw ValidationError("tx " + std::to_string(tx.id) + ": non-finite position");
    }
  }
  for (const auto& rx : scene.rx_nodes) {
    if (!rx.position.allFinite()) {
      throw ValidationError("rx " + std::to_string(rx.id) + ": non-finite position");
    }
    for (const auto& s : scene.surfaces) {
      if (std::abs(s.signed_distance(rx.position)) < kRxClearance &&
          s.contains(rx.position, kRxClearance)) {
        throw ValidationError("rx " + std::to_string(rx.id) + " lies on surface " +
                              std::to_string(s.id));
      }
    }
  }
}

namespace {

Vec3 read_point(const json_util::Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(where + ": expected [x, y, z]");
  }
  Vec3 p;
  for (int k = 0; k < 3; ++k) {
    if (!j[static_cast<std::size_t>(k)].is_number()) {
      throw ParseError(where + ": coordinate " + std::to_string(k) + " is not a number");
    }
    p[k] = j[static_cast<std::size_t>(k)].get<double>();
  }
  return p;
}

json_util::Json point_json(const Vec3& p) { return json_util::Json::array({p.x(), p.y(), p.z()}); }

}  // namespace

Scene parse_scene(std::string_view text, const std::string& source) {
  using json_util::Json;
  const Json doc = json_util::parse(text, source);
  json_util::expect_format(doc, kSceneFormat, kSceneVersion, source);

  Scene scene;
  scene.carrier_wavelength_m = json_util::get_number(doc, "carrier_wavelength_m", source);

  const Json& surfaces = json_util::get_array(doc, "surfaces", source);
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    const std::string where = source + ": surfaces[" + std::to_string(i) + "]";
    const Json& js = surfaces[i];
    const int id = json_util::get_int(js, "id", where);
    const int material = js.contains("material_id") ? json_util::get_int(js, "material_id", where)
                                                    : kNoMaterial;
    const Json& verts = json_util::get_array(js, "vertices", where);
    std::vector<Vec3> vertices;
    for (std::size_t v = 0; v < verts.size(); ++v) {
      vertices.push_back(read_point(verts[v], where + ".vertices[" + std::to_string(v) + "]"));
    }
    scene.surfaces.push_back(make_surface(id, std::move(vertices), material));
  }
  // Ids must be dense; keep them in id order so surface(id) is an index.
  std::stable_sort(scene.surfaces.begin(), scene.surfaces.end(),
                   [](const Surface& a, const Surface& b) { return a.id < b.id; });

  const Json& txs = json_util::get_array(doc, "tx_nodes", source);
  for (std::size_t i = 0; i < txs.size(); ++i) {
    const std::string where = source + ": tx_nodes[" + std::to_string(i) + "]";
    TxNode tx;
    tx.id = json_util::get_int(txs[i], "id", where);
    tx.position = read_point(json_util::get_field(txs[i], "position", where), where + ".position");
    tx.power_watts = json_util::get_number(txs[i], "power_watts", where);
    scene.tx_nodes.push_back(tx);
  }
  const Json& rxs = json_util::get_array(doc, "rx_nodes", source);
  for (std::size_t i = 0; i < rxs.size(); ++i) {
    const std::string where = source + ": rx_nodes[" + std::to_string(i) + "]";
    RxNode rx;
    rx.id = json_util::get_int(rxs[i], "id", where);
    rx.position = read_point(json_util::get_field(rxs[i], "position", where), where + ".position");
    scene.rx_nodes.push_back(rx);
  }

  try {
    validate(scene);
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return scene;
}

Scene load_scene(const std::filesystem::path& path) {
  return parse_scene(read_file(path), path.string());
}

std::string dump_scene(const Scene& scene) {
  using json_util::Json;
  Json doc;
  doc["format"] = kSceneFormat;
  doc["version"] = kSceneVersion;
  doc["carrier_wavelength_m"] = scene.carrier_wavelength_m;
  Json surfaces = Json::array();
  for (const auto& s : scene.surfaces) {
    Json js;
    js["id"] = s.id;
    if (s.material_id != kNoMaterial) js["material_id"] = s.material_id;
    Json verts = Json::array();
    for (const auto& v : s.vertices) verts.push_back(point_json(v));
    js["vertices"] = std::move(verts);
    surfaces.push_back(std::move(js));
  }
  doc["surfaces"] = std::move(surfaces);
  Json txs = Json::array();
  for (const auto& tx : scene.tx_nodes) {
    Json jt;
    jt["id"] = tx.id;
    jt["position"] = point_json(tx.position);
    jt["power_watts"] = tx.power_watts;
    txs.push_back(std::move(jt));
  }
  doc["tx_nodes"] = std::move(txs);
  Json rxs = Json::array();
  for (const auto& rx : scene.rx_nodes) {
    Json jr;
    jr["id"] = rx.id;
    jr["position"] = point_json(rx.position);
    rxs.push_back(std::move(jr));
  }
  doc["rx_nodes"] = std::move(rxs);
  return json_util::dump(doc);
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  write_file_atomic(path, dump_scene(scene));
}

std::vector<double> one_hot(int surface_id, int count) {
  if (count < 1 || surface_id < 0 || surface_id >= count) {
    throw ValidationError("one_hot: surface id " + std::to_string(surface_id) +
                          " outside 0.." + std::to_string(count - 1));
  }
  std::vector<double> v(static_cast<std::size_t>(count), 0.0);
  v[static_cast<std::size_t>(surface_id)] = 1.0;
  return v;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nrf
