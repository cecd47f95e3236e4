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

#include "nrf/tracer.hpp"

#include "nrf/error.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>
#include <tuple>

namespace nrf {

const PairPaths* PathSet::find(int tx_id, int rx_id) const {
  const auto it = std::lower_bound(pairs.begin(), pairs.end(), std::pair{tx_id, rx_id},
                                   [](const PairPaths& p, const std::pair<int, int>& key) {
                                     return std::pair{p.tx_id, p.rx_id} < key;
                                   });
  if (it == pairs.end() || it->tx_id != tx_id || it->rx_id != rx_id) return nullptr;
  return &*it;
}

std::size_t PathSet::path_count() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.paths.size();
  return n;
}

double incident_angle(const Vec3& direction, const Vec3& normal) {
  constexpr double kUnitTol = 1e-9;
  if (std::abs(direction.norm() - 1.0) > kUnitTol || std::abs(normal.norm() - 1.0) > kUnitTol) {
    throw ValidationError("incident_angle: inputs must be unit vectors");
  }
  const double c = std::min(1.0, std::abs(direction.dot(normal)));
  return std::acos(c);
}

bool segment_blocked(const Scene& scene, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len = ab.norm();
  for (const auto& s : scene.surfaces) {
    const double da = s.signed_distance(a);
    const double db = s.signed_distance(b);
    // Strictly on opposite sides; segments grazing or ending on the plane do not count.
    if ((da > kHitTolerance && db < -kHitTolerance) || (da < -kHitTolerance && db > kHitTolerance)) {
      const double t = da / (da - db);
      if (t * len <= kHitTolerance || (1.0 - t) * len <= kHitTolerance) continue;
      const Vec3 hit = a + t * ab;
      if (s.contains(hit, kHitTolerance)) return true;
    }
  }
  return false;
}

namespace {

void check_node_clear(const Scene& scene, const Vec3& p, const std::string& name) {
  for (const auto& s : scene.surfaces) {
    if (std::abs(s.signed_distance(p)) <= kHitTolerance && s.contains(p, kHitTolerance)) {
      throw ValidationError(name + " lies on surface " + std::to_string(s.id));
    }
  }
}

struct Candidate {
  PathRecord record;
  std::vector<int> sequence;
};

class ImageSearch {
 public:
  ImageSearch(const Scene& scene, const TxNode& tx, const RxNode& rx, int max_reflections)
      : scene_(scene), tx_(tx), rx_(rx), max_reflections_(max_reflections) {}

  std::vector<Candidate> run() {
    if ((rx_.position - tx_.position).norm() > kHitTolerance &&
        !segment_blocked(scene_, tx_.position, rx_.position)) {
      Candidate los;
      los.record.tx_id = tx_.id;
      los.record.rx_id = rx_.id;
      los.record.length_m = (rx_.position - tx_.position).norm();
      found_.push_back(std::move(los));
    }
    images_.push_back(tx_.position);
    descend();
    return std::move(found_);
  }

 private:
  void descend() {
    if (static_cast<int>(sequence_.size()) >= max_reflections_) return;
    for (const auto& s : scene_.surfaces) {
      if (!sequence_.empty() && sequence_.back() == s.id) continue;
      const Vec3& source = images_.back();
      if (std::abs(s.signed_distance(source)) <= kHitTolerance) continue;
      sequence_.push_back(s.id);
      images_.push_back(s.mirror(source));
      try_construct();
      descend();
      images_.pop_back();
      sequence_.pop_back();
    }
  }

  // Back-projects the receiver through the image chain for the current
  // surface sequence and validates the resulting path.
  void try_construct() {
    const std::size_t k = sequence_.size();
    std::vector<Vec3> points(k);
    Vec3 target = rx_.position;
    for (std::size_t j = k; j-- > 0;) {
      const Surface& s = scene_.surfaces[static_cast<std::size_t>(sequence_[j])];
      const Vec3& image = images_[j + 1];
      const double di = s.signed_distance(image);
      const double dt = s.signed_distance(target);
      if (!((di > kHitTolerance && dt < -kHitTolerance) || (di < -kHitTolerance && dt > kHitTolerance))) {
        return;
      }
      const double t = di / (di - dt);
      const Vec3 p = image + t * (target - image);
      if (!s.contains(p, kHitTolerance)) return;
      points[j] = p;
      target = p;
    }

    // Both neighbours of every reflection point on the same side of its plane.
    for (std::size_t j = 0; j < k; ++j) {
      const Surface& s = scene_.surfaces[static_cast<std::size_t>(sequence_[j])];
      const Vec3& prev = j == 0 ? tx_.position : points[j - 1];
      const Vec3& next = j + 1 == k ? rx_.position : points[j + 1];
      const double dp = s.signed_distance(prev);
      const double dn = s.signed_distance(next);
      if (!((dp > kHitTolerance && dn > kHitTolerance) || (dp < -kHitTolerance && dn < -kHitTolerance))) {
        return;
      }
    }

    Candidate c;
    c.record.tx_id = tx_.id;
    c.record.rx_id = rx_.id;
    c.sequence = sequence_;
    double length = 0.0;
    Vec3 prev = tx_.position;
    for (std::size_t j = 0; j <= k; ++j) {
      const Vec3& next = j == k ? rx_.position : points[j];
      const double seg = (next - prev).norm();
      if (seg <= kHitTolerance) return;
      if (segment_blocked(scene_, prev, next)) return;
      if (j < k) {
        const Surface& s = scene_.surfaces[static_cast<std::size_t>(sequence_[j])];
        ReflectionPoint rp;
        rp.position = next;
        rp.surface_id = s.id;
        rp.incident_angle_rad = incident_angle((next - prev) / seg, s.normal);
        c.record.points.push_back(rp);
      }
      length += seg;
      prev = next;
    }
    c.record.length_m = length;
    found_.push_back(std::move(c));
  }

  const Scene& scene_;
  const TxNode& tx_;
  const RxNode& rx_;
  int max_reflections_;
  std::vector<int> sequence_;
  std::vector<Vec3> images_;
  std::vector<Candidate> found_;
};

}  // namespace

std::vector<PathRecord> trace_pair(const Scene& scene, const TxNode& tx, const RxNode& rx,
                                   const TraceCaps& caps) {
  if (caps.max_reflections < 0 || caps.max_paths_per_pair < 0) {
    throw ValidationError("trace caps must be non-negative");
  }
  check_node_clear(scene, tx.position, "tx " + std::to_string(tx.id));
  check_node_clear(scene, rx.position, "rx " + std::to_string(rx.id));

  std::vector<Candidate> found = ImageSearch(scene, tx, rx, caps.max_reflections).run();
  // Strongest first under unit coefficients: shortest path, then fewer
  // bounces, then surface ids.
  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    return std::forward_as_tuple(a.record.length_m, a.sequence.size(), a.sequence) <
           std::forward_as_tuple(b.record.length_m, b.sequence.size(), b.sequence);
  });
  if (found.size() > static_cast<std::size_t>(caps.max_paths_per_pair)) {
    found.resize(static_cast<std::size_t>(caps.max_paths_per_pair));
  }
  std::vector<PathRecord> out;
  out.reserve(found.size());
  for (auto& c : found) out.push_back(std::move(c.record));
  return out;
}

namespace {

template <typename Node>
std::vector<const Node*> sorted_nodes(const std::vector<Node>& nodes) {
  std::vector<const Node*> out;
  for (const auto& n : nodes) out.push_back(&n);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return out;
}

}  // namespace

PathSet empty_pathset(const Scene& scene, const TraceCaps& caps) {
  const auto txs = sorted_nodes(scene.tx_nodes);
  const auto rxs = sorted_nodes(scene.rx_nodes);
  PathSet set;
  set.caps = caps;
  set.pairs.reserve(txs.size() * rxs.size());
  for (const auto* tx : txs) {
    for (const auto* rx : rxs) set.pairs.push_back(PairPaths{tx->id, rx->id, {}});
  }
  return set;
}

PathSet trace_all(const Scene& scene, const TraceCaps& caps, int threads) {
  const auto txs = sorted_nodes(scene.tx_nodes);
  const auto rxs = sorted_nodes(scene.rx_nodes);
  PathSet set = empty_pathset(scene, caps);

  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(set.pairs.size());
  auto worker = [&] {
    for (std::size_t idx = next++; idx < set.pairs.size(); idx = next++) {
      const auto& tx = *txs[idx / rxs.size()];
      const auto& rx = *rxs[idx % rxs.size()];
      try {
        set.pairs[idx].paths = trace_pair(scene, tx, rx, caps);
      } catch (const Error& e) {
        errors[idx] = "pair (tx " + std::to_string(tx.id) + ", rx " + std::to_string(rx.id) +
                      "): " + e.what();
      }
    }
  };
  const int n = std::max(1, threads);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw ValidationError(e);
  }
  return set;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

constexpr const char* kPathsetTag = "# nrfrt-pathset v1";

}  // namespace

std::string dump_pathset_csv(const PathSet& paths) {
  std::string out;
  out += kPathsetTag;
  out += " max_reflections=" + std::to_string(paths.caps.max_reflections) +
         " max_paths_per_pair=" + std::to_string(paths.caps.max_paths_per_pair) + "\n";
  out += "tx_id,rx_id,path_rank,n_bounces,length_m";
  for (int b = 1; b <= paths.caps.max_reflections; ++b) {
    const std::string k = std::to_string(b);
    out += ",surface_id_" + k + ",incident_angle_rad_" + k + ",x_" + k + ",y_" + k + ",z_" + k;
  }
  out += '\n';
  for (const auto& pair : paths.pairs) {
    for (std::size_t rank = 0; rank < pair.paths.size(); ++rank) {
      const auto& p = pair.paths[rank];
      out += std::to_string(p.tx_id) + ',' + std::to_string(p.rx_id) + ',' + std::to_string(rank) +
             ',' + std::to_string(p.bounces()) + ',';
      append_double(out, p.length_m);
      for (int b = 0; b < paths.caps.max_reflections; ++b) {
        if (b < p.bounces()) {
          const auto& rp = p.points[static_cast<std::size_t>(b)];
          out += ',' + std::to_string(rp.surface_id) + ',';
          append_double(out, rp.incident_angle_rad);
          for (int c = 0; c < 3; ++c) {
            out += ',';
            append_double(out, rp.position[c]);
          }
        } else {
          out += ",,,,,";
        }
      }
      out += '\n';
    }
  }
  return out;
}

void save_pathset(const PathSet& paths, const std::filesystem::path& path) {
  write_file_atomic(path, dump_pathset_csv(paths));
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                        : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view f, const std::string& where) {
  T v{};
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size()) {
    throw ParseError(where + ": cannot parse '" + std::string(f) + "'");
  }
  return v;
}

}  // namespace

PathSet parse_pathset_csv(const std::string& text, const Scene& scene, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  PathSet set;

  if (!std::getline(in, line) || line.rfind(kPathsetTag, 0) != 0) {
    throw ParseError(source + ":1: missing '" + std::string(kPathsetTag) + "' tag line");
  }
  ++line_no;
  {
    int mr = -1, mp = -1;
    if (std::sscanf(line.c_str() + std::string(kPathsetTag).size(),
                    " max_reflections=%d max_paths_per_pair=%d", &mr, &mp) != 2 ||
        mr < 0 || mp < 0) {
      throw ParseError(source + ":1: malformed caps in tag line");
    }
    set.caps = {mr, mp};
  }
  if (!std::getline(in, line)) throw ParseError(source + ":2: missing header");
  ++line_no;
  const std::size_t columns = 5 + 5 * static_cast<std::size_t>(set.caps.max_reflections);
  if (split_csv(line).size() != columns || line.rfind("tx_id,rx_id,path_rank,n_bounces,length_m", 0) != 0) {
    throw ParseError(source + ":2: unexpected header");
  }

  // Every scene pair is present, even without paths.
  set.pairs = empty_pathset(scene, set.caps).pairs;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto f = split_csv(line);
    if (f.size() != columns) throw ParseError(where + ": expected " + std::to_string(columns) + " fields");
    PathRecord p;
    p.tx_id = parse_field<int>(f[0], where + " tx_id");
    p.rx_id = parse_field<int>(f[1], where + " rx_id");
    const int rank = parse_field<int>(f[2], where + " path_rank");
    const int n = parse_field<int>(f[3], where + " n_bounces");
    p.length_m = parse_field<double>(f[4], where + " length_m");
    if (n < 0 || n > set.caps.max_reflections) throw ParseError(where + ": n_bounces out of range");
    for (int b = 0; b < n; ++b) {
      const std::size_t o = 5 + 5 * static_cast<std::size_t>(b);
      ReflectionPoint rp;
      rp.surface_id = parse_field<int>(f[o], where + " surface_id");
      rp.incident_angle_rad = parse_field<double>(f[o + 1], where + " incident_angle_rad");
      for (int c = 0; c < 3; ++c) {
        rp.position[c] = parse_field<double>(f[o + 2 + static_cast<std::size_t>(c)], where + " position");
      }
      if (rp.surface_id < 0 || rp.surface_id >= scene.surface_count()) {
        throw ParseError(where + ": surface_id " + std::to_string(rp.surface_id) + " not in scene");
      }
      p.points.push_back(rp);
    }
    auto it = std::find_if(set.pairs.begin(), set.pairs.end(), [&](const PairPaths& pp) {
      return pp.tx_id == p.tx_id && pp.rx_id == p.rx_id;
    });
    if (it == set.pairs.end()) throw ParseError(where + ": pair not in scene");
    if (rank != static_cast<int>(it->paths.size())) throw ParseError(where + ": path_rank out of order");
    if (rank >= set.caps.max_paths_per_pair) throw ParseError(where + ": path_rank exceeds cap");
    it->paths.push_back(std::move(p));
  }
  return set;
}

PathSet load_pathset(const std::filesystem::path& path, const Scene& scene) {
  return parse_pathset_csv(read_file(path), scene, path.string());
}

}  // namespace nrf
