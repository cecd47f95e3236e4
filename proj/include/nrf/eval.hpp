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
#include "nrf/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nrf {

inline constexpr double kDefaultNoiseDbm = -94.0;

/// |10 log10(|est| / |truth|)| in dB; magnitudes only. Returns NaN when the
/// ground-truth magnitude is zero (callers exclude and count those).
double coefficient_error(const Coefficient& est, const Coefficient& truth);

/// |pred - true| for finite dBm values; NaN when either is a sentinel.
double power_error(double pred_dbm, double true_dbm);

/// Absolute phase difference wrapped to [0, pi].
double phase_error(double est_rad, double truth_rad);

/// Percentile with linear interpolation between order statistics
/// (rank q/100 * (n-1)). Throws on an empty input or q outside [0, 100].
double percentile(std::vector<double> values, double q);

struct Stats {
  std::size_t count = 0;
  std::size_t excluded = 0;
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

/// Summary of the finite entries; NaN / infinite entries are counted as excluded.
Stats summarize(std::span<const double> values);

struct CoefficientSample {
  int surface_id = 0;
  int material_id = 0;
  double angle_rad = 0.0;
  double error_db = 0.0;
  double phase_error_rad = 0.0;
};

struct AngleBin {
  int index = 0;
  double lo_deg = 0.0;
  double hi_deg = 0.0;
  Stats stats;
};

struct MaterialRow {
  int material_id = 0;
  std::string name;
  Stats stats;
  Stats phase;  // radians
};

struct CoefficientReport {
  std::vector<CoefficientSample> samples;
  Stats overall;
  Stats phase;        // radians
  std::vector<AngleBin> bins;  // only bins with samples
  std::vector<MaterialRow> materials;
  int bin_count = 1000;
};

/// Per-surface angle interval [lo, hi] to sample from.
struct AngleRange {
  double lo = 0.0;
  double hi = std::numbers::pi / 2.0;
};

/// Incident-angle extent of the real bounce slots of the given batch rows,
/// per surface. Surfaces never hit get an empty (lo > hi) range.
std::vector<AngleRange> training_angle_ranges(const PaddedBatch& batch, int surface_count);

/// Draws `samples_per_surface` uniform angles per surface from its range and
/// compares the network against the ground truth. Surfaces with an empty
/// range are skipped.
CoefficientReport sweep_coefficients(const ReflectanceNet& net, const GroundTruth& truth,
                                     std::span<const AngleRange> ranges, int samples_per_surface,
                                     std::uint64_t seed, int bin_count = 1000);

/// Rebuilds bins and material rows from samples.
CoefficientReport aggregate_coefficients(std::vector<CoefficientSample> samples, const GroundTruth& truth,
                                         int bin_count);

struct PowerReport {
  std::vector<int> rx_ids;
  std::vector<double> pred_dbm;
  std::vector<double> true_dbm;
  std::vector<double> error_db;
  Stats stats;
};

PowerReport power_report(const PaddedBatch& batch, std::span<const double> pred_dbm,
                         std::span<const double> true_dbm, std::span<const int> rows);

/// Per-rx SINR and per-pair interference gains for one render.
struct LinkBudget {
  std::vector<int> serving_tx;       // per rx row: index into the batch's tx list
  std::vector<double> sinr_db;       // per rx row; NaN when excluded
  std::vector<double> gain_db;       // per (rx row, tx): 10 log10 |H|^2; -inf without paths
  std::size_t excluded = 0;
};

/// Serving tx is the geometrically nearest; interferers add incoherently:
/// SINR = P_s |H_s|^2 / (sum_{i != s} P_i |H_i|^2 + N).
LinkBudget sinr_and_interference(const Scene& scene, const PaddedBatch& batch, std::span<const Complex> channel,
                                 double noise_dbm = kDefaultNoiseDbm);

struct LinkReport {
  std::vector<int> rx_ids;
  std::vector<double> sinr_pred_db, sinr_true_db, sinr_error_db;
  // Interference pairs (non-serving tx of each rx).
  std::vector<int> pair_rx, pair_tx;
  std::vector<double> gain_pred_db, gain_true_db, gain_error_db;
  Stats sinr;
  Stats gain;
  double noise_dbm = kDefaultNoiseDbm;
};

LinkReport link_report(const Scene& scene, const PaddedBatch& batch, std::span<const Complex> pred_channel,
                       std::span<const Complex> true_channel, std::span<const int> rows,
                       double noise_dbm = kDefaultNoiseDbm);

/// Everything produced by evaluating one trained model.
struct EvalReport {
  CoefficientReport coefficients;
  PowerReport power;  // test rows
  LinkReport links;   // test rows
  double samples_per_km2 = 0.0;
  double noise_dbm = kDefaultNoiseDbm;
};

struct EvalOptions {
  int samples_per_surface = 2000;
  int bin_count = 1000;
  std::uint64_t seed = 0;
  double noise_dbm = kDefaultNoiseDbm;
};

/// Scene footprint used for densities: area of the xy bounding box of all
/// surfaces and nodes, in km^2.
double scene_area_km2(const Scene& scene);

EvalReport evaluate(const Scene& scene, const Dataset& data, const GroundTruth& truth, const ReflectanceNet& net,
                    const Split& split, const EvalOptions& options);

struct DensityRow {
  double fraction = 0.0;
  int train_rx = 0;
  double samples_per_km2 = 0.0;
  Stats power;        // eps_P on the shared test rows
  Stats coefficient;  // eps_delta
  double final_train_loss = 0.0;
};

/// Retrains from scratch for each fraction with the same seed and evaluates
/// on the (fraction independent) test rows. Training is deterministic, so
/// fraction 1 reproduces a base run with the same config bitwise.
std::vector<DensityRow> density_sweep(const Scene& scene, const Dataset& data, const GroundTruth& truth,
                                      const TrainConfig& config, std::span<const double> fractions,
                                      const EvalOptions& options, const ProgressFn& progress = {});

// CSV writers; every file starts with a '#' comment carrying the noise level.
std::string fig5a_bins_csv(const CoefficientReport& r, double noise_dbm);
std::string fig5b_materials_csv(const CoefficientReport& r, double noise_dbm);
std::string fig6a_density_csv(std::span<const DensityRow> rows, double noise_dbm);
std::string fig6b_density_csv(std::span<const DensityRow> rows, double noise_dbm);
std::string fig7a_sinr_cdf_csv(const LinkReport& r);
std::string fig7b_interference_cdf_csv(const LinkReport& r);
std::string power_errors_csv(const PowerReport& r, double noise_dbm);
std::string summary_json(const EvalReport& r);

/// Writes the eval CSVs and summary.json into `dir`; returns the file names.
std::vector<std::string> write_eval_outputs(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace nrf
