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
#include "nrf/synth.hpp"
#include "nrf/tracer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nrf {

enum class Schedule { WarmRestarts, Single };

struct TrainConfig {
  double lr_init = 1e-3;
  double weight_decay = 5e-5;
  std::int64_t t_max = 10000;
  double eta_min = 1e-6;
  std::int64_t max_iterations = 110000;
  Schedule schedule = Schedule::WarmRestarts;
  int batch_rx = 0;  // rx nodes per step; 0 = every training rx
  // Global gradient-norm cap applied before each Adam step; 0 disables it.
  // Deep fades make the dB loss spike, and a capped step keeps the network alive.
  double grad_clip_norm = 0.0;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 1000;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;  // carved from the training part
  double density_fraction = 1.0;     // share of the training part actually used

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
};

void validate(const TrainConfig& config);
TrainConfig parse_train_config(const std::string& text, const std::string& source = "<memory>");
TrainConfig load_train_config(const std::filesystem::path& path);
std::string dump_train_config(const TrainConfig& config);

/// Mean squared dB error over entries where both values are finite; sentinel
/// entries (-inf) are excluded. Throws ValidationError on length mismatch or
/// when nothing is left.
double loss(std::span<const double> pred_dbm, std::span<const double> true_dbm);

/// d loss / d pred_dbm; zero at excluded entries.
std::vector<double> loss_gradient(std::span<const double> pred_dbm, std::span<const double> true_dbm);

/// Cosine annealing. With warm restarts the cycle position is t mod T_max,
/// except that the last iteration of each cycle (t = k*T_max, k >= 1) reports
/// eta_min. The single schedule anneals once over `max_iterations`.
double lr_schedule(std::int64_t t, const TrainConfig& config);

/// Human-readable location of a flat parameter, e.g. "layer 3 weight[12,4]".
std::string parameter_path(const std::vector<LayerShape>& layers, std::size_t index);

/// One Adam step with decoupled weight decay (param -= lr*wd*param first).
/// `state` is initialized on first use. Throws NumericError naming the
/// parameter when a gradient is not finite; parameters are untouched then.
void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
               double lr, double weight_decay, const std::vector<LayerShape>& layers = {});

/// Row partition of a dataset (indices refer to rows of the padded batch).
struct Split {
  std::vector<int> train;       // rows used for gradient steps
  std::vector<int> validation;  // rows used for model selection
  std::vector<int> test;        // held out
};

/// Seeded shuffle; the first train_fraction is the training part, the rest is
/// test. Only the first density_fraction of the training part is used, and
/// the last validation_fraction of that is reserved for validation. The test
/// rows do not depend on density_fraction.
Split make_split(int rows, const TrainConfig& config);

/// Measurements aligned to the rows of a padded batch.
struct Dataset {
  PaddedBatch batch;
  std::vector<double> true_dbm;  // per batch row
};

/// Pads the path set and matches every traced rx to exactly one measurement.
Dataset make_dataset(const Scene& scene, const PathSet& paths, const std::vector<Measurement>& measurements);

/// Gradient of the loss over `batch` w.r.t. every network parameter; returns the loss.
double loss_and_gradient(const ReflectanceNet& net, const PaddedBatch& batch,
                         std::span<const double> true_dbm, std::span<double> grad);

/// Loss of the network's predictions on `batch`.
double evaluate_loss(const ReflectanceNet& net, const PaddedBatch& batch, std::span<const double> true_dbm);

struct LossPoint {
  std::int64_t iteration = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation set
};

struct TrainResult {
  ReflectanceNet net;            // best on validation (last good on divergence)
  ReflectanceNet final_net;      // parameters after the last step taken
  OptimizerState optimizer;      // state matching final_net
  std::vector<LossPoint> curve;
  std::int64_t best_iteration = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
  std::string divergence_message;
  Split split;
};

using ProgressFn = std::function<void(const LossPoint&)>;

/// Runs the forward-render, loss, backward, Adam loop. Training starts from
/// `initial` (with its iteration counter) and `optimizer` if given, otherwise
/// from a fresh init seeded with config.seed.
TrainResult train(const Dataset& data, const TrainConfig& config, const ReflectanceNet* initial = nullptr,
                  const OptimizerState* optimizer = nullptr, const ProgressFn& progress = {});

std::string dump_loss_curve_csv(const std::vector<LossPoint>& curve);

}  // namespace nrf
