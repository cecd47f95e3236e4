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

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nrf {

using Vec3 = Eigen::Vector3d;

inline constexpr int kNoMaterial = -1;

/// Planar convex polygon with a dense 0-based id.
///
/// The normal is the normalized cross product of the first two edges and
/// `offset` is the plane constant, so that points on the plane satisfy
/// normal.dot(p) == offset. `material_id` is a ground-truth label used by the
/// synthesizer and evaluator only; it is never fed to the network.
struct Surface {
  int id = 0;
  int material_id = kNoMaterial;
  std::vector<Vec3> vertices;
  Vec3 normal = Vec3::Zero();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  Vec3 mirror(const Vec3& p) const { return p - 2.0 * signed_distance(p) * normal; }

  /// True if the orthogonal projection of `p` lies inside the polygon, with
  /// edges inflated by `tol` meters.
  bool contains(const Vec3& p, double tol) const;

  double area() const;
};

/// Builds a surface from its vertex loop, deriving the normal and checking
/// planarity, convexity and non-degeneracy. Throws ValidationError naming `id`.
Surface make_surface(int id, std::vector<Vec3> vertices, int material_id = kNoMaterial);

struct TxNode {
  int id = 0;
  Vec3 position = Vec3::Zero();
  double power_watts = 1.0;
};

struct RxNode {
  int id = 0;
  Vec3 position = Vec3::Zero();
};

struct Scene {
  std::vector<Surface> surfaces;
  std::vector<TxNode> tx_nodes;
  std::vector<RxNode> rx_nodes;
  double carrier_wavelength_m = 0.125;

  int surface_count() const { return static_cast<int>(surfaces.size()); }
  /// Surface by id; ids are dense so this is an index lookup after validation.
  const Surface& surface(int id) const;
};

/// Checks every scene invariant; throws ValidationError on the first failure.
void validate(const Scene& scene);

Scene parse_scene(std::string_view text, const std::string& source = "<memory>");
Scene load_scene(const std::filesystem::path& path);

/// Deterministic text form of the scene (fixed field order).
std::string dump_scene(const Scene& scene);
void save_scene(const Scene& scene, const std::filesystem::path& path);

/// Encodes a surface id as a length-`count` indicator vector.
std::vector<double> one_hot(int surface_id, int count);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace nrf
