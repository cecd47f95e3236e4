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
#include "nrf/scene.hpp"
#include "nrf/tracer.hpp"

#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace nrf {

using Complex = std::complex<double>;

/// Powers below this floor are reported as the -inf sentinel and excluded from the loss.
inline constexpr double kPowerFloorDbm = -300.0;
inline constexpr double kNoSignal = -std::numeric_limits<double>::infinity();

/// Incident angle stored in virtual bounce slots (90 degrees).
inline constexpr double kVirtualAngle = std::numbers::pi / 2.0;

/// Rectangular view of a path set: dimensions (rx, tx, ray, bounce), rx-major.
///
/// Virtual bounce slots (shorter rays) carry the sentinel angle and act as the
/// identity coefficient; virtual rays (pairs with fewer rays) contribute
/// nothing. Both are driven by the masks, never by network output.
struct PaddedBatch {
  int n_rx = 0;
  int n_tx = 0;
  int r_max = 0;
  int k_max = 0;
  double wavelength_m = 0.125;

  std::vector<int> rx_ids;
  std::vector<int> tx_ids;
  std::vector<double> tx_power_watts;  // per tx

  // Ray level, size n_rx * n_tx * r_max.
  std::vector<double> length_m;
  std::vector<std::uint8_t> virtual_ray;

  // Bounce level, size n_rx * n_tx * r_max * k_max.
  std::vector<double> angle_rad;
  std::vector<int> surface_id;
  std::vector<std::uint8_t> virtual_point;
  std::vector<Vec3> position;

  std::size_t ray_count() const { return length_m.size(); }
  std::size_t slot_count() const { return angle_rad.size(); }
  std::size_t ray_index(int rx, int tx, int ray) const {
    return (static_cast<std::size_t>(rx) * n_tx + tx) * r_max + ray;
  }
  std::size_t slot_index(int rx, int tx, int ray, int bounce) const {
    return ray_index(rx, tx, ray) * k_max + bounce;
  }

  /// Indices of all non-virtual bounce slots, in slot order.
  std::vector<std::size_t> real_slots() const;

  /// Sub-batch restricted to the given rx rows (in the given order).
  PaddedBatch select_rx(std::span<const int> rows) const;

  /// Recovers the path records (without tracing caps) from the real entries.
  PathSet unpad(const TraceCaps& caps) const;
};

/// Pads a path set to (R_max, K_max). `min_rays` / `min_bounces` widen the
/// padding beyond what the data needs.
PaddedBatch pad(const Scene& scene, const PathSet& paths, int min_rays = 0, int min_bounces = 0);

/// Free-space factor lambda/(4 pi d) * exp(j 2 pi d / lambda); phase wrapped to (-pi, pi].
Complex friis_factor(double length_m, double wavelength_m);

/// Product of the coefficients along a ray; empty list is 1.
Complex ray_attenuation(std::span<const Coefficient> coefficients);

/// Sum over rays of friis_factor(d_k) * attenuation_k; masked rays are skipped.
Complex channel(std::span<const double> lengths_m, std::span<const Complex> attenuations,
                double wavelength_m, std::span<const std::uint8_t> virtual_ray = {});

double watts_to_dbm(double watts);
double dbm_to_watts(double dbm);

struct RenderResult {
  std::vector<Complex> channel;  // n_rx * n_tx, H between tx and rx (no tx power)
  std::vector<Complex> signal;   // n_rx, sum over tx of sqrt(P_tx) * H
  std::vector<double> power_w;   // n_rx
  std::vector<double> power_dbm; // n_rx, kNoSignal below the floor
};

/// Differentiable forward model over a padded batch.
///
/// Coefficients are given per bounce slot (amplitude, phase); values at
/// virtual slots are ignored. backward() returns gradients of
/// sum_d upstream[d] * power_dbm[d] with respect to every slot coefficient.
class Renderer {
 public:
  explicit Renderer(const PaddedBatch& batch);

  const RenderResult& forward(std::span<const double> amplitude, std::span<const double> phase);
  void backward(std::span<const double> d_power_dbm, std::span<double> d_amplitude,
                std::span<double> d_phase) const;

  const PaddedBatch& batch() const { return batch_; }
  const RenderResult& result() const { return result_; }

 private:
  const PaddedBatch& batch_;
  std::vector<Complex> friis_;  // per ray
  std::vector<Complex> ray_;    // per ray, sqrt(P_tx) * F * delta
  std::vector<double> amplitude_;
  std::vector<double> phase_;
  RenderResult result_;
  bool has_forward_ = false;
};

/// Convenience: renders with the coefficient returned by `coefficient(angle, surface)`.
template <typename CoefficientFn>
RenderResult render_with(const PaddedBatch& batch, CoefficientFn&& coefficient) {
  std::vector<double> amp(batch.slot_count(), 1.0), ph(batch.slot_count(), 0.0);
  for (std::size_t s : batch.real_slots()) {
    const Coefficient c = coefficient(batch.angle_rad[s], batch.surface_id[s]);
    amp[s] = c.amplitude;
    ph[s] = c.phase;
  }
  Renderer r(batch);
  return r.forward(amp, ph);
}

/// Renders a batch with the network's coefficients.
RenderResult render_with_net(const PaddedBatch& batch, const ReflectanceNet& net);

/// Prediction dump: rx_id, P_rx_dBm_pred, P_rx_dBm_true, then per tx the
/// channel gain |H|^2 in dB and its phase. `true_dbm` may be empty.
std::string dump_predictions_csv(const PaddedBatch& batch, const RenderResult& result,
                                 std::span<const double> true_dbm);

}  // namespace nrf
