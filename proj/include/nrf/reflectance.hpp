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

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

namespace nrf {

/// Reflection coefficient amplitude * exp(j * phase).
struct Coefficient {
  double amplitude = 1.0;  // in [0, 1]
  double phase = 0.0;      // radians

  std::complex<double> value() const { return std::polar(amplitude, phase); }
};

struct LayerShape {
  int rows = 0;
  int cols = 0;
  std::size_t weight_offset = 0;  // column-major rows x cols block
  std::size_t bias_offset = 0;
};

/// Neural reflectance field: maps (incident angle, surface id) to a
/// reflection coefficient.
///
/// Eight ReLU layers of width 256 followed by a linear head with two outputs.
/// The network input is [angle / (pi/2), one_hot(surface)] and the fifth
/// layer's activation is concatenated with that input before the sixth
/// layer. The head's outputs are squashed to amplitude = sigmoid(z0) and
/// phase = pi * tanh(z1), so every coefficient is passive (|delta| <= 1).
///
/// All parameters live in one flat array; `layers()` describes the views.
class ReflectanceNet {
 public:
  static constexpr int kHiddenLayers = 8;
  static constexpr int kWidth = 256;
  static constexpr int kSkipLayer = 5;  // this layer's input is [x, activation of layer 4]
  static constexpr int kOutputs = 2;

  ReflectanceNet() = default;

  /// Fan-in scaled uniform weights, zero biases; deterministic in `seed`.
  static ReflectanceNet init(int surfaces, std::uint64_t seed);
  /// All parameters zero: every input maps to amplitude 0.5, phase 0.
  static ReflectanceNet zeros(int surfaces);

  int surface_count() const { return surfaces_; }
  int input_dim() const { return 1 + surfaces_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  std::int64_t iteration() const { return iteration_; }
  void set_iteration(std::int64_t it) { iteration_ = it; }

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  Coefficient forward(double angle_rad, int surface_id) const;

  /// Activations kept for backpropagation.
  struct Cache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> inputs;  // per layer, column-major (cols x batch)
    std::vector<double> head;                 // 2 x batch pre-squash outputs
    std::vector<double> amplitude;
    std::vector<double> phase;
  };

  /// Evaluates a batch; each sample's result is bitwise equal to forward().
  void forward(std::span<const double> angles, std::span<const int> surfaces, Cache& cache) const;
  std::vector<Coefficient> forward(std::span<const double> angles, std::span<const int> surfaces) const;

  /// Accumulates d(sum_i d_amp[i]*amp[i] + d_phase[i]*phase[i]) / d(params)
  /// into `grad` (same layout as parameters()).
  void backward(const Cache& cache, std::span<const double> d_amplitude,
                std::span<const double> d_phase, std::span<double> grad) const;

  /// Encoded network input for one sample.
  std::vector<double> encode(double angle_rad, int surface_id) const;

 private:
  explicit ReflectanceNet(int surfaces);
  void check_input(double angle_rad, int surface_id) const;

  int surfaces_ = 0;
  std::uint64_t seed_ = 0;
  std::int64_t iteration_ = 0;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

/// Adam moments saved next to the parameters so training can resume bitwise.
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  bool empty() const { return first_moment.empty(); }
};

/// Binary checkpoint: magic, version, surface count, seed, iteration, shape
/// table, little-endian row-major parameters and optional optimizer state.
void save_checkpoint(const ReflectanceNet& net, const std::filesystem::path& path,
                     const OptimizerState* optimizer = nullptr);
ReflectanceNet load_checkpoint(const std::filesystem::path& path, OptimizerState* optimizer = nullptr);

namespace detail {
/// out(rows x n) = W(rows x k, column-major) * in(k x n, column-major). Each
/// output is accumulated in the same order for any n.
void matmul(const double* w, int rows, int k, const double* in, std::size_t n, double* out);
}  // namespace detail

}  // namespace nrf
