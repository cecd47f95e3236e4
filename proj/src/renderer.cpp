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

#include "nrf/renderer.hpp"

#include "nrf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace nrf {

std::vector<std::size_t> PaddedBatch::real_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < ray_count(); ++r) {
    if (virtual_ray[r]) continue;
    for (int b = 0; b < k_max; ++b) {
      const std::size_t s = r * static_cast<std::size_t>(k_max) + b;
      if (!virtual_point[s]) out.push_back(s);
    }
  }
  return out;
}

PaddedBatch PaddedBatch::select_rx(std::span<const int> rows) const {
  PaddedBatch out;
  out.n_rx = static_cast<int>(rows.size());
  out.n_tx = n_tx;
  out.r_max = r_max;
  out.k_max = k_max;
  out.wavelength_m = wavelength_m;
  out.tx_ids = tx_ids;
  out.tx_power_watts = tx_power_watts;
  const std::size_t rays_per_rx = static_cast<std::size_t>(n_tx) * r_max;
  const std::size_t slots_per_rx = rays_per_rx * k_max;
  for (int row : rows) {
    if (row < 0 || row >= n_rx) throw ValidationError("select_rx: row out of range");
    const std::size_t r0 = static_cast<std::size_t>(row) * rays_per_rx;
    const std::size_t s0 = static_cast<std::size_t>(row) * slots_per_rx;
    out.rx_ids.push_back(rx_ids[static_cast<std::size_t>(row)]);
    out.length_m.insert(out.length_m.end(), length_m.begin() + r0, length_m.begin() + r0 + rays_per_rx);
    out.virtual_ray.insert(out.virtual_ray.end(), virtual_ray.begin() + r0, virtual_ray.begin() + r0 + rays_per_rx);
    out.angle_rad.insert(out.angle_rad.end(), angle_rad.begin() + s0, angle_rad.begin() + s0 + slots_per_rx);
    out.surface_id.insert(out.surface_id.end(), surface_id.begin() + s0, surface_id.begin() + s0 + slots_per_rx);
    out.virtual_point.insert(out.virtual_point.end(), virtual_point.begin() + s0, virtual_point.begin() + s0 + slots_per_rx);
    out.position.insert(out.position.end(), position.begin() + s0, position.begin() + s0 + slots_per_rx);
  }
  return out;
}

PathSet PaddedBatch::unpad(const TraceCaps& caps) const {
  PathSet set;
  set.caps = caps;
  for (int t = 0; t < n_tx; ++t) {
    for (int r = 0; r < n_rx; ++r) {
      PairPaths pair{tx_ids[static_cast<std::size_t>(t)], rx_ids[static_cast<std::size_t>(r)], {}};
      for (int k = 0; k < r_max; ++k) {
        const std::size_t ri = ray_index(r, t, k);
        if (virtual_ray[ri]) continue;
        PathRecord p;
        p.tx_id = pair.tx_id;
        p.rx_id = pair.rx_id;
        p.length_m = length_m[ri];
        for (int b = 0; b < k_max; ++b) {
          const std::size_t s = slot_index(r, t, k, b);
          if (virtual_point[s]) continue;
          p.points.push_back(ReflectionPoint{position[s], surface_id[s], angle_rad[s], false});
        }
        pair.paths.push_back(std::move(p));
      }
      set.pairs.push_back(std::move(pair));
    }
  }
  std::sort(set.pairs.begin(), set.pairs.end(), [](const PairPaths& a, const PairPaths& b) {
    return std::pair{a.tx_id, a.rx_id} < std::pair{b.tx_id, b.rx_id};
  });
  return set;
}

PaddedBatch pad(const Scene& scene, const PathSet& paths, int min_rays, int min_bounces) {
  PaddedBatch b;
  b.wavelength_m = scene.carrier_wavelength_m;
  std::vector<const TxNode*> txs;
  for (const auto& t : scene.tx_nodes) txs.push_back(&t);
  std::sort(txs.begin(), txs.end(), [](auto* x, auto* y) { return x->id < y->id; });
  for (const auto* t : txs) {
    b.tx_ids.push_back(t->id);
    b.tx_power_watts.push_back(t->power_watts);
  }
  for (const auto& r : scene.rx_nodes) b.rx_ids.push_back(r.id);
  std::sort(b.rx_ids.begin(), b.rx_ids.end());
  b.n_rx = static_cast<int>(b.rx_ids.size());
  b.n_tx = static_cast<int>(b.tx_ids.size());

  int r_max = std::max(0, min_rays);
  int k_max = std::max(0, min_bounces);
  for (const auto& pair : paths.pairs) {
    r_max = std::max(r_max, static_cast<int>(pair.paths.size()));
    for (const auto& p : pair.paths) k_max = std::max(k_max, p.bounces());
  }
  b.r_max = r_max;
  b.k_max = k_max;

  const std::size_t rays = static_cast<std::size_t>(b.n_rx) * b.n_tx * r_max;
  b.length_m.assign(rays, 0.0);
  b.virtual_ray.assign(rays, 1);
  b.angle_rad.assign(rays * k_max, kVirtualAngle);
  b.surface_id.assign(rays * k_max, 0);
  b.virtual_point.assign(rays * k_max, 1);
  b.position.assign(rays * k_max, Vec3::Zero());

  for (int r = 0; r < b.n_rx; ++r) {
    for (int t = 0; t < b.n_tx; ++t) {
      const PairPaths* pair = paths.find(b.tx_ids[static_cast<std::size_t>(t)], b.rx_ids[static_cast<std::size_t>(r)]);
      if (pair == nullptr) continue;
      for (std::size_t k = 0; k < pair->paths.size(); ++k) {
        const auto& p = pair->paths[k];
        const std::size_t ri = b.ray_index(r, t, static_cast<int>(k));
        b.length_m[ri] = p.length_m;
        b.virtual_ray[ri] = 0;
        for (int l = 0; l < p.bounces(); ++l) {
          const std::size_t s = b.slot_index(r, t, static_cast<int>(k), l);
          const auto& rp = p.points[static_cast<std::size_t>(l)];
          b.angle_rad[s] = rp.incident_angle_rad;
          b.surface_id[s] = rp.surface_id;
          b.virtual_point[s] = 0;
          b.position[s] = rp.position;
        }
      }
    }
  }
  return b;
}

Complex friis_factor(double length_m, double wavelength_m) {
  if (!(length_m > 0.0) || !(wavelength_m > 0.0)) {
    throw ValidationError("friis_factor: length and wavelength must be positive");
  }
  const double amplitude = wavelength_m / (4.0 * std::numbers::pi * length_m);
  // Reduce the cycle count before scaling so long paths keep full phase precision.
  // The fma remainder d - n*lambda is exact up to one rounding of a value below lambda.
  const double n = std::nearbyint(length_m / wavelength_m);
  const double remainder = std::fma(-n, wavelength_m, length_m);
  double phase = 2.0 * std::numbers::pi * (remainder / wavelength_m);
  if (phase <= -std::numbers::pi) phase = std::numbers::pi;
  return std::polar(amplitude, phase);
}

Complex ray_attenuation(std::span<const Coefficient> coefficients) {
  Complex delta(1.0, 0.0);
  for (const auto& c : coefficients) delta *= c.value();
  return delta;
}

Complex channel(std::span<const double> lengths_m, std::span<const Complex> attenuations,
                double wavelength_m, std::span<const std::uint8_t> virtual_ray) {
  if (lengths_m.size() != attenuations.size() ||
      (!virtual_ray.empty() && virtual_ray.size() != lengths_m.size())) {
    throw ValidationError("channel: ray arrays are not aligned");
  }
  Complex h(0.0, 0.0);
  for (std::size_t k = 0; k < lengths_m.size(); ++k) {
    if (!virtual_ray.empty() && virtual_ray[k]) continue;
    h += friis_factor(lengths_m[k], wavelength_m) * attenuations[k];
  }
  return h;
}

double watts_to_dbm(double watts) {
  if (!(watts > 0.0)) return kNoSignal;
  const double dbm = 10.0 * std::log10(watts * 1000.0);
  return dbm < kPowerFloorDbm ? kNoSignal : dbm;
}

double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) / 1000.0; }

Renderer::Renderer(const PaddedBatch& batch) : batch_(batch) {
  if (batch.tx_power_watts.size() != static_cast<std::size_t>(batch.n_tx) ||
      batch.length_m.size() != static_cast<std::size_t>(batch.n_rx) * batch.n_tx * batch.r_max ||
      batch.angle_rad.size() != batch.length_m.size() * batch.k_max) {
    throw ValidationError("renderer: padded batch arrays have inconsistent sizes");
  }
  friis_.assign(batch.ray_count(), Complex(0.0, 0.0));
  for (std::size_t r = 0; r < batch.ray_count(); ++r) {
    if (!batch.virtual_ray[r]) friis_[r] = friis_factor(batch.length_m[r], batch.wavelength_m);
  }
}

const RenderResult& Renderer::forward(std::span<const double> amplitude, std::span<const double> phase) {
  const PaddedBatch& b = batch_;
  if (amplitude.size() != b.slot_count() || phase.size() != b.slot_count()) {
    throw ValidationError("renderer: coefficient arrays do not match batch slots");
  }
  amplitude_.assign(amplitude.begin(), amplitude.end());
  phase_.assign(phase.begin(), phase.end());
  ray_.assign(b.ray_count(), Complex(0.0, 0.0));
  result_.channel.assign(static_cast<std::size_t>(b.n_rx) * b.n_tx, Complex(0.0, 0.0));
  result_.signal.assign(static_cast<std::size_t>(b.n_rx), Complex(0.0, 0.0));
  result_.power_w.assign(static_cast<std::size_t>(b.n_rx), 0.0);
  result_.power_dbm.assign(static_cast<std::size_t>(b.n_rx), kNoSignal);

  for (int d = 0; d < b.n_rx; ++d) {
    Complex s(0.0, 0.0);
    for (int i = 0; i < b.n_tx; ++i) {
      const double amp_tx = std::sqrt(b.tx_power_watts[static_cast<std::size_t>(i)]);
      Complex h(0.0, 0.0);
      for (int k = 0; k < b.r_max; ++k) {
        const std::size_t ri = b.ray_index(d, i, k);
        if (b.virtual_ray[ri]) continue;
        Complex delta(1.0, 0.0);
        for (int l = 0; l < b.k_max; ++l) {
          const std::size_t si = ri * static_cast<std::size_t>(b.k_max) + l;
          if (b.virtual_point[si]) continue;
          delta *= std::polar(amplitude[si], phase[si]);
        }
        const Complex term = friis_[ri] * delta;
        h += term;
        ray_[ri] = amp_tx * term;
      }
      result_.channel[static_cast<std::size_t>(d) * b.n_tx + i] = h;
      s += amp_tx * h;
    }
    result_.signal[static_cast<std::size_t>(d)] = s;
    const double p = std::norm(s);
    result_.power_w[static_cast<std::size_t>(d)] = p;
    result_.power_dbm[static_cast<std::size_t>(d)] = watts_to_dbm(p);
  }
  has_forward_ = true;
  return result_;
}

void Renderer::backward(std::span<const double> d_power_dbm, std::span<double> d_amplitude,
                        std::span<double> d_phase) const {
  if (!has_forward_) throw ValidationError("renderer: backward called before forward");
  const PaddedBatch& b = batch_;
  if (d_power_dbm.size() != static_cast<std::size_t>(b.n_rx)) {
    throw ValidationError("renderer: upstream gradient does not match rx count");
  }
  if (d_amplitude.size() != b.slot_count() || d_phase.size() != b.slot_count()) {
    throw ValidationError("renderer: gradient buffers do not match batch slots");
  }
  std::fill(d_amplitude.begin(), d_amplitude.end(), 0.0);
  std::fill(d_phase.begin(), d_phase.end(), 0.0);

  const double db_per_watt = 10.0 / std::log(10.0);
  for (int d = 0; d < b.n_rx; ++d) {
    const double up = d_power_dbm[static_cast<std::size_t>(d)];
    if (up == 0.0 || result_.power_dbm[static_cast<std::size_t>(d)] == kNoSignal) continue;
    // dP_dBm = 10/ln10 * dP / P and dP = 2 Re(conj(S) dS).
    const Complex s = result_.signal[static_cast<std::size_t>(d)];
    const double g = up * db_per_watt / result_.power_w[static_cast<std::size_t>(d)];
    const Complex sc = 2.0 * g * std::conj(s);
    for (int i = 0; i < b.n_tx; ++i) {
      for (int k = 0; k < b.r_max; ++k) {
        const std::size_t ri = b.ray_index(d, i, k);
        if (b.virtual_ray[ri]) continue;
        const Complex c = ray_[ri];
        // d c / d phase_l = j c for every bounce on the ray.
        const double dphase = -(sc * c).imag();
        for (int l = 0; l < b.k_max; ++l) {
          const std::size_t si = ri * static_cast<std::size_t>(b.k_max) + l;
          if (b.virtual_point[si]) continue;
          // d c / d amp_l = c without the l-th amplitude, built without dividing.
          Complex dc = std::sqrt(b.tx_power_watts[static_cast<std::size_t>(i)]) * friis_[ri];
          for (int m = 0; m < b.k_max; ++m) {
            const std::size_t sm = ri * static_cast<std::size_t>(b.k_max) + m;
            if (b.virtual_point[sm]) continue;
            dc *= m == l ? std::polar(1.0, phase_[sm]) : std::polar(amplitude_[sm], phase_[sm]);
          }
          d_amplitude[si] += (sc * dc).real();
          d_phase[si] += dphase;
        }
      }
    }
  }
}

RenderResult render_with_net(const PaddedBatch& batch, const ReflectanceNet& net) {
  const auto slots = batch.real_slots();
  std::vector<double> angles(slots.size());
  std::vector<int> surfaces(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    angles[i] = batch.angle_rad[slots[i]];
    surfaces[i] = batch.surface_id[slots[i]];
  }
  const auto coeffs = net.forward(angles, surfaces);
  std::vector<double> amp(batch.slot_count(), 1.0), ph(batch.slot_count(), 0.0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    amp[slots[i]] = coeffs[i].amplitude;
    ph[slots[i]] = coeffs[i].phase;
  }
  Renderer r(batch);
  return r.forward(amp, ph);
}

namespace {

void append_number(std::string& out, double v) {
  if (std::isinf(v)) {
    out += v < 0 ? "-inf" : "inf";
    return;
  }
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

std::string dump_predictions_csv(const PaddedBatch& batch, const RenderResult& result,
                                 std::span<const double> true_dbm) {
  std::string out = "rx_id,P_rx_dBm_pred,P_rx_dBm_true";
  for (int id : batch.tx_ids) {
    out += ",H_dB_tx" + std::to_string(id) + ",phase_rad_tx" + std::to_string(id);
  }
  out += '\n';
  for (int d = 0; d < batch.n_rx; ++d) {
    out += std::to_string(batch.rx_ids[static_cast<std::size_t>(d)]) + ',';
    append_number(out, result.power_dbm[static_cast<std::size_t>(d)]);
    out += ',';
    if (!true_dbm.empty()) append_number(out, true_dbm[static_cast<std::size_t>(d)]);
    for (int i = 0; i < batch.n_tx; ++i) {
      const Complex h = result.channel[static_cast<std::size_t>(d) * batch.n_tx + i];
      const double gain = std::norm(h);
      out += ',';
      append_number(out, gain > 0.0 ? 10.0 * std::log10(gain) : kNoSignal);
      out += ',';
      append_number(out, std::arg(h));
    }
    out += '\n';
  }
  return out;
}

}  // namespace nrf
