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

#include "nrf/scene.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace nrf {

/// Geometric tolerance for surface hits and degenerate segments (meters).
inline constexpr double kHitTolerance = 1e-6;

struct ReflectionPoint {
  Vec3 position = Vec3::Zero();
  int surface_id = 0;
  double incident_angle_rad = 0.0;  // from the surface normal
  bool is_virtual = false;
};

/// One specular path TX -> points... -> RX. An empty point list is line of sight.
struct PathRecord {
  int tx_id = 0;
  int rx_id = 0;
  std::vector<ReflectionPoint> points;
  double length_m = 0.0;
  bool is_virtual_ray = false;

  int bounces() const { return static_cast<int>(points.size()); }
};

struct TraceCaps {
  int max_reflections = 3;
  int max_paths_per_pair = 7;
};

struct PairPaths {
  int tx_id = 0;
  int rx_id = 0;
  std::vector<PathRecord> paths;  // strongest first
};

/// All traced paths, one entry per (tx, rx) pair in (tx id, rx id) order,
/// including pairs that have no path.
struct PathSet {
  TraceCaps caps;
  std::vector<PairPaths> pairs;

  const PairPaths* find(int tx_id, int rx_id) const;
  std::size_t path_count() const;
};

/// Angle between a propagation direction and a surface normal, in [0, pi/2].
/// Both inputs must be unit vectors.
double incident_angle(const Vec3& direction, const Vec3& normal);

/// Enumerates specular paths with the image method, ranks them by length
/// (1/d under unit coefficients) and keeps the `caps.max_paths_per_pair`
/// strongest. Throws ValidationError if either node lies on a surface.
std::vector<PathRecord> trace_pair(const Scene& scene, const TxNode& tx, const RxNode& rx,
                                   const TraceCaps& caps);

/// Path set holding every (tx, rx) pair of the scene with no paths.
PathSet empty_pathset(const Scene& scene, const TraceCaps& caps);

/// Traces every (tx, rx) pair; `threads` > 1 traces pairs concurrently with an
/// identical, ordered result.
PathSet trace_all(const Scene& scene, const TraceCaps& caps, int threads = 1);

/// True if the open segment a-b crosses any surface polygon away from its endpoints.
bool segment_blocked(const Scene& scene, const Vec3& a, const Vec3& b);

// CSV interchange. Columns: tx_id, rx_id, path_rank, n_bounces, length_m, then
// for each of max_reflections bounce slots: surface_id, incident_angle_rad, x, y, z.
std::string dump_pathset_csv(const PathSet& paths);
void save_pathset(const PathSet& paths, const std::filesystem::path& path);
/// Reads a path CSV; the scene supplies the full list of tx/rx pairs.
PathSet parse_pathset_csv(const std::string& text, const Scene& scene,
                          const std::string& source = "<memory>");
PathSet load_pathset(const std::filesystem::path& path, const Scene& scene);

}  // namespace nrf
