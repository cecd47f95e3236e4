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

#include "nrf/eval.hpp"

#include "nrf/error.hpp"
#include "nrf/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

namespace nrf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string header_comment(const std::string& what, double noise_dbm) {
  return "# nrfrt " + what + " noise_dbm=" + num(noise_dbm) + "\n";
}

}  // namespace

double coefficient_error(const Coefficient& est, const Coefficient& truth) {
  const double gt = std::abs(truth.amplitude);
  if (!(gt > 0.0)) return kNaN;
  return std::abs(10.0 * std::log10(std::abs(est.amplitude) / gt));
}

double power_error(double pred_dbm, double true_dbm) {
  if (!std::isfinite(pred_dbm) || !std::isfinite(true_dbm)) return kNaN;
  return std::abs(pred_dbm - true_dbm);
}

double phase_error(double est_rad, double truth_rad) {
  const double d = std::remainder(est_rad - truth_rad, 2.0 * std::numbers::pi);
  return std::abs(d);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw ValidationError("percentile rank outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Stats summarize(std::span<const double> values) {
  Stats s;
  std::vector<double> v;
  v.reserve(values.size());
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
    else ++s.excluded;
  }
  s.count = v.size();
  if (v.empty()) {
    s.mean = s.median = s.p90 = s.p95 = s.p99 = s.max = kNaN;
    return s;
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  s.median = percentile(v, 50.0);
  s.p90 = percentile(v, 90.0);
  s.p95 = percentile(v, 95.0);
  s.p99 = percentile(v, 99.0);
  s.max = v.back();
  return s;
}

std::vector<AngleRange> training_angle_ranges(const PaddedBatch& batch, int surface_count) {
  std::vector<AngleRange> r(static_cast<std::size_t>(surface_count),
                            AngleRange{std::numeric_limits<double>::infinity(),
                                       -std::numeric_limits<double>::infinity()});
  for (std::size_t s : batch.real_slots()) {
    const int id = batch.surface_id[s];
    if (id < 0 || id >= surface_count) throw ValidationError("batch references unknown surface " + std::to_string(id));
    auto& range = r[static_cast<std::size_t>(id)];
    range.lo = std::min(range.lo, batch.angle_rad[s]);
    range.hi = std::max(range.hi, batch.angle_rad[s]);
  }
  return r;
}

CoefficientReport aggregate_coefficients(std::vector<CoefficientSample> samples, const GroundTruth& truth,
                                         int bin_count) {
  if (bin_count <= 0) throw ValidationError("bin_count must be positive");
  CoefficientReport rep;
  rep.bin_count = bin_count;
  rep.samples = std::move(samples);
  std::vector<double> all, phase;
  std::vector<std::vector<double>> per_bin(static_cast<std::size_t>(bin_count));
  std::vector<std::vector<double>> per_mat(truth.materials.size()), per_mat_phase(truth.materials.size());
  for (const auto& s : rep.samples) {
    all.push_back(s.error_db);
    phase.push_back(s.phase_error_rad);
    const double f = s.angle_rad / (std::numbers::pi / 2.0);
    const int b = std::clamp(static_cast<int>(std::floor(f * bin_count)), 0, bin_count - 1);
    per_bin[static_cast<std::size_t>(b)].push_back(s.error_db);
    per_mat[static_cast<std::size_t>(s.material_id)].push_back(s.error_db);
    per_mat_phase[static_cast<std::size_t>(s.material_id)].push_back(s.phase_error_rad);
  }
  rep.overall = summarize(all);
  rep.phase = summarize(phase);
  const double width = 90.0 / bin_count;
  for (int b = 0; b < bin_count; ++b) {
    const auto& v = per_bin[static_cast<std::size_t>(b)];
    if (v.empty()) continue;
    rep.bins.push_back({b, b * width, (b + 1) * width, summarize(v)});
  }
  for (std::size_t m = 0; m < truth.materials.size(); ++m) {
    if (per_mat[m].empty()) continue;
    rep.materials.push_back(
        {static_cast<int>(m), truth.materials[m].name, summarize(per_mat[m]), summarize(per_mat_phase[m])});
  }
  return rep;
}

CoefficientReport sweep_coefficients(const ReflectanceNet& net, const GroundTruth& truth,
                                     std::span<const AngleRange> ranges, int samples_per_surface,
                                     std::uint64_t seed, int bin_count) {
  if (samples_per_surface <= 0) throw ValidationError("samples_per_surface must be positive");
  std::mt19937_64 rng(seed);
  std::vector<double> angles;
  std::vector<int> surfaces;
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    const AngleRange r = ranges[s];
    if (!(r.lo <= r.hi)) continue;
    for (int i = 0; i < samples_per_surface; ++i) {
      // Uniform on [lo, hi] from 53 random bits, portable across standard libraries.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      angles.push_back(std::min(r.lo + u * (r.hi - r.lo), r.hi));
      surfaces.push_back(static_cast<int>(s));
    }
  }
  std::vector<CoefficientSample> samples;
  if (!angles.empty()) {
    const auto est = net.forward(angles, surfaces);
    samples.reserve(angles.size());
    for (std::size_t i = 0; i < angles.size(); ++i) {
      const Coefficient gt = truth.coefficient(surfaces[i], angles[i]);
      samples.push_back({surfaces[i], truth.surface_material[static_cast<std::size_t>(surfaces[i])], angles[i],
                         coefficient_error(est[i], gt), phase_error(est[i].phase, gt.phase)});
    }
  }
  return aggregate_coefficients(std::move(samples), truth, bin_count);
}

PowerReport power_report(const PaddedBatch& batch, std::span<const double> pred_dbm,
                         std::span<const double> true_dbm, std::span<const int> rows) {
  PowerReport r;
  for (int row : rows) {
    const auto i = static_cast<std::size_t>(row);
    r.rx_ids.push_back(batch.rx_ids[i]);
    r.pred_dbm.push_back(pred_dbm[i]);
    r.true_dbm.push_back(true_dbm[i]);
    r.error_db.push_back(power_error(pred_dbm[i], true_dbm[i]));
  }
  r.stats = summarize(r.error_db);
  return r;
}

namespace {

double to_db(double linear) { return linear > 0.0 ? 10.0 * std::log10(linear) : -std::numeric_limits<double>::infinity(); }

}  // namespace

LinkBudget sinr_and_interference(const Scene& scene, const PaddedBatch& batch, std::span<const Complex> channel,
                                 double noise_dbm) {
  if (channel.size() != static_cast<std::size_t>(batch.n_rx) * batch.n_tx) {
    throw ValidationError("sinr: channel array does not match the batch");
  }
  std::vector<Vec3> tx_pos, rx_pos;
  for (int id : batch.tx_ids) {
    const auto it = std::find_if(scene.tx_nodes.begin(), scene.tx_nodes.end(), [&](const TxNode& t) { return t.id == id; });
    if (it == scene.tx_nodes.end()) throw ValidationError("sinr: unknown tx " + std::to_string(id));
    tx_pos.push_back(it->position);
  }
  for (int id : batch.rx_ids) {
    const auto it = std::find_if(scene.rx_nodes.begin(), scene.rx_nodes.end(), [&](const RxNode& r) { return r.id == id; });
    if (it == scene.rx_nodes.end()) throw ValidationError("sinr: unknown rx " + std::to_string(id));
    rx_pos.push_back(it->position);
  }
  // noise_dbm = -inf is an explicit noiseless setting.
  const double noise_w = std::isinf(noise_dbm) && noise_dbm < 0 ? 0.0 : dbm_to_watts(noise_dbm);

  LinkBudget out;
  out.serving_tx.assign(static_cast<std::size_t>(batch.n_rx), -1);
  out.sinr_db.assign(static_cast<std::size_t>(batch.n_rx), kNaN);
  out.gain_db.assign(channel.size(), 0.0);
  for (int d = 0; d < batch.n_rx; ++d) {
    const auto di = static_cast<std::size_t>(d);
    int serving = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < batch.n_tx; ++i) {
      const double dist = (tx_pos[static_cast<std::size_t>(i)] - rx_pos[di]).norm();
      if (dist < best) {  // ties go to the lower tx index
        best = dist;
        serving = i;
      }
    }
    out.serving_tx[di] = serving;
    double signal = 0.0, interference = 0.0;
    for (int i = 0; i < batch.n_tx; ++i) {
      const std::size_t ci = di * static_cast<std::size_t>(batch.n_tx) + static_cast<std::size_t>(i);
      const double g = std::norm(channel[ci]);
      out.gain_db[ci] = to_db(g);
      const double p = batch.tx_power_watts[static_cast<std::size_t>(i)] * g;
      (i == serving ? signal : interference) += p;
    }
    const double denom = interference + noise_w;
    if (serving < 0 || !(signal > 0.0) || !(denom > 0.0)) {
      ++out.excluded;
      continue;
    }
    out.sinr_db[di] = 10.0 * std::log10(signal / denom);
  }
  return out;
}

LinkReport link_report(const Scene& scene, const PaddedBatch& batch, std::span<const Complex> pred_channel,
                       std::span<const Complex> true_channel, std::span<const int> rows, double noise_dbm) {
  const LinkBudget pred = sinr_and_interference(scene, batch, pred_channel, noise_dbm);
  const LinkBudget truth = sinr_and_interference(scene, batch, true_channel, noise_dbm);
  LinkReport r;
  r.noise_dbm = noise_dbm;
  for (int row : rows) {
    const auto d = static_cast<std::size_t>(row);
    r.rx_ids.push_back(batch.rx_ids[d]);
    r.sinr_pred_db.push_back(pred.sinr_db[d]);
    r.sinr_true_db.push_back(truth.sinr_db[d]);
    const bool ok = std::isfinite(pred.sinr_db[d]) && std::isfinite(truth.sinr_db[d]);
    r.sinr_error_db.push_back(ok ? std::abs(pred.sinr_db[d] - truth.sinr_db[d]) : kNaN);
    for (int i = 0; i < batch.n_tx; ++i) {
      if (i == truth.serving_tx[d]) continue;
      const std::size_t ci = d * static_cast<std::size_t>(batch.n_tx) + static_cast<std::size_t>(i);
      r.pair_rx.push_back(batch.rx_ids[d]);
      r.pair_tx.push_back(batch.tx_ids[static_cast<std::size_t>(i)]);
      r.gain_pred_db.push_back(pred.gain_db[ci]);
      r.gain_true_db.push_back(truth.gain_db[ci]);
      r.gain_error_db.push_back(power_error(pred.gain_db[ci], truth.gain_db[ci]));
    }
  }
  r.sinr = summarize(r.sinr_error_db);
  r.gain = summarize(r.gain_error_db);
  return r;
}

double scene_area_km2(const Scene& scene) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  auto grow = [&](const Vec3& p) {
    x0 = std::min(x0, p.x());
    y0 = std::min(y0, p.y());
    x1 = std::max(x1, p.x());
    y1 = std::max(y1, p.y());
  };
  for (const auto& s : scene.surfaces) for (const auto& v : s.vertices) grow(v);
  for (const auto& t : scene.tx_nodes) grow(t.position);
  for (const auto& r : scene.rx_nodes) grow(r.position);
  if (!(x1 > x0 && y1 > y0)) throw ValidationError("scene has no horizontal extent");
  return (x1 - x0) * (y1 - y0) / 1e6;
}

EvalReport evaluate(const Scene& scene, const Dataset& data, const GroundTruth& truth, const ReflectanceNet& net,
                    const Split& split, const EvalOptions& options) {
  EvalReport rep;
  rep.noise_dbm = options.noise_dbm;
  const PaddedBatch train_batch = data.batch.select_rx(split.train);
  const auto ranges = training_angle_ranges(train_batch, scene.surface_count());
  rep.coefficients =
      sweep_coefficients(net, truth, ranges, options.samples_per_surface, options.seed, options.bin_count);

  const RenderResult pred = render_with_net(data.batch, net);
  const RenderResult gt = render_with(data.batch, [&](double angle, int surface) {
    return truth.coefficient(surface, angle);
  });
  rep.power = power_report(data.batch, pred.power_dbm, data.true_dbm, split.test);
  rep.links = link_report(scene, data.batch, pred.channel, gt.channel, split.test, options.noise_dbm);
  rep.samples_per_km2 = static_cast<double>(split.train.size() + split.validation.size()) / scene_area_km2(scene);
  return rep;
}

std::vector<DensityRow> density_sweep(const Scene& scene, const Dataset& data, const GroundTruth& truth,
                                      const TrainConfig& config, std::span<const double> fractions,
                                      const EvalOptions& options, const ProgressFn& progress) {
  std::vector<DensityRow> rows;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("density fraction must be in (0, 1]");
    TrainConfig c = config;
    c.density_fraction = f;
    const TrainResult tr = train(data, c, nullptr, nullptr, progress);
    if (tr.diverged) throw NumericError("density " + num(f) + ": training diverged at " + tr.divergence_message);
    const EvalReport rep = evaluate(scene, data, truth, tr.net, tr.split, options);
    DensityRow row;
    row.fraction = f;
    row.train_rx = static_cast<int>(tr.split.train.size() + tr.split.validation.size());
    row.samples_per_km2 = rep.samples_per_km2;
    row.power = rep.power.stats;
    row.coefficient = rep.coefficients.overall;
    row.final_train_loss = tr.curve.empty() ? kNaN : tr.curve.back().train_loss;
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string stats_cols(const Stats& s) {
  return std::to_string(s.count) + "," + num(s.mean) + "," + num(s.median) + "," + num(s.p90) + "," + num(s.p95) +
         "," + num(s.p99) + "," + num(s.max);
}

constexpr const char* kStatsHeader = "count,mean,median,p90,p95,p99,max";

std::vector<double> sorted_finite(std::span<const double> v) {
  std::vector<double> out;
  for (double x : v) if (std::isfinite(x)) out.push_back(x);
  std::sort(out.begin(), out.end());
  return out;
}

/// Empirical CDFs of several columns, each sorted on its own; rows are
/// aligned by rank. Columns with fewer finite values are padded with "nan".
std::string cdf_table(const std::string& comment, const std::vector<std::string>& names,
                      const std::vector<std::vector<double>>& columns) {
  std::string out = comment + "rank,cdf";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  std::vector<std::vector<double>> sorted;
  std::size_t n = 0;
  for (const auto& c : columns) {
    sorted.push_back(sorted_finite(c));
    n = std::max(n, sorted.back().size());
  }
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i) + "," + num(static_cast<double>(i + 1) / static_cast<double>(n));
    for (const auto& c : sorted) out += "," + (i < c.size() ? num(c[i]) : std::string("nan"));
    out += "\n";
  }
  return out;
}

}  // namespace

std::string fig5a_bins_csv(const CoefficientReport& r, double noise_dbm) {
  std::string out = header_comment("coefficient error per incident-angle bin, bins=" + std::to_string(r.bin_count) +
                                       ", error_db=|10log10(|est|/|gt|)|",
                                   noise_dbm);
  out += "bin,angle_lo_deg,angle_hi_deg," + std::string(kStatsHeader) + "\n";
  for (const auto& b : r.bins) {
    out += std::to_string(b.index) + "," + num(b.lo_deg) + "," + num(b.hi_deg) + "," + stats_cols(b.stats) + "\n";
  }
  return out;
}

std::string fig5b_materials_csv(const CoefficientReport& r, double noise_dbm) {
  std::string out = header_comment("coefficient error per material", noise_dbm);
  out += "material_id,material,count,mean,median,p90,p95,p99,max,phase_mean_rad,phase_p99_rad\n";
  for (const auto& m : r.materials) {
    out += std::to_string(m.material_id) + "," + m.name + "," + stats_cols(m.stats) + "," + num(m.phase.mean) + "," +
           num(m.phase.p99) + "\n";
  }
  out += "-1,all," + stats_cols(r.overall) + "," + num(r.phase.mean) + "," + num(r.phase.p99) + "\n";
  return out;
}

std::string fig6a_density_csv(std::span<const DensityRow> rows, double noise_dbm) {
  std::string out = header_comment("held-out power error vs data density, error_db=|P_pred-P_true|", noise_dbm);
  out += "fraction,train_rx,samples_per_km2," + std::string(kStatsHeader) + "\n";
  for (const auto& r : rows) {
    out += num(r.fraction) + "," + std::to_string(r.train_rx) + "," + num(r.samples_per_km2) + "," +
           stats_cols(r.power) + "\n";
  }
  return out;
}

std::string fig6b_density_csv(std::span<const DensityRow> rows, double noise_dbm) {
  std::string out = header_comment("coefficient error vs data density", noise_dbm);
  out += "fraction,train_rx,samples_per_km2," + std::string(kStatsHeader) + "\n";
  for (const auto& r : rows) {
    out += num(r.fraction) + "," + std::to_string(r.train_rx) + "," + num(r.samples_per_km2) + "," +
           stats_cols(r.coefficient) + "\n";
  }
  return out;
}

std::string fig7a_sinr_cdf_csv(const LinkReport& r) {
  return cdf_table(header_comment("SINR CDFs on test rx (columns sorted independently), serving tx = nearest",
                                  r.noise_dbm),
                   {"sinr_true_db", "sinr_pred_db", "abs_error_db"}, {r.sinr_true_db, r.sinr_pred_db, r.sinr_error_db});
}

std::string fig7b_interference_cdf_csv(const LinkReport& r) {
  return cdf_table(header_comment("interference channel gain CDFs on test rx (columns sorted independently)",
                                  r.noise_dbm),
                   {"gain_true_db", "gain_pred_db", "abs_error_db"}, {r.gain_true_db, r.gain_pred_db, r.gain_error_db});
}

std::string power_errors_csv(const PowerReport& r, double noise_dbm) {
  std::string out = header_comment("held-out receive power", noise_dbm);
  out += "rx_id,P_rx_dBm_pred,P_rx_dBm_true,abs_error_db\n";
  for (std::size_t i = 0; i < r.rx_ids.size(); ++i) {
    out += std::to_string(r.rx_ids[i]) + "," + num(r.pred_dbm[i]) + "," + num(r.true_dbm[i]) + "," +
           num(r.error_db[i]) + "\n";
  }
  return out;
}

namespace {

json_util::Json stats_json(const Stats& s) {
  json_util::Json j;
  auto put = [&](const char* k, double v) {
    if (std::isfinite(v)) j[k] = v;
    else j[k] = nullptr;
  };
  j["count"] = s.count;
  j["excluded"] = s.excluded;
  put("mean", s.mean);
  put("median", s.median);
  put("p90", s.p90);
  put("p95", s.p95);
  put("p99", s.p99);
  put("max", s.max);
  return j;
}

}  // namespace

std::string summary_json(const EvalReport& r) {
  json_util::Json doc;
  doc["format"] = "nrfrt-eval-summary";
  doc["version"] = 1;
  doc["noise_dbm"] = r.noise_dbm;
  doc["samples_per_km2"] = r.samples_per_km2;
  doc["coefficient_error_db"] = stats_json(r.coefficients.overall);
  doc["coefficient_phase_error_rad"] = stats_json(r.coefficients.phase);
  doc["power_error_db"] = stats_json(r.power.stats);
  doc["sinr_error_db"] = stats_json(r.links.sinr);
  doc["interference_gain_error_db"] = stats_json(r.links.gain);
  return json_util::dump(doc);
}

std::vector<std::string> write_eval_outputs(const EvalReport& r, const std::filesystem::path& dir) {
  const std::vector<std::pair<std::string, std::string>> files = {
      {"fig5a_bins.csv", fig5a_bins_csv(r.coefficients, r.noise_dbm)},
      {"fig5b_materials.csv", fig5b_materials_csv(r.coefficients, r.noise_dbm)},
      {"fig7a_sinr_cdf.csv", fig7a_sinr_cdf_csv(r.links)},
      {"fig7b_interference_cdf.csv", fig7b_interference_cdf_csv(r.links)},
      {"power_errors.csv", power_errors_csv(r.power, r.noise_dbm)},
      {"summary.json", summary_json(r)},
  };
  std::vector<std::string> names;
  for (const auto& [name, text] : files) {
    write_file_atomic(dir / name, text);
    names.push_back(name);
  }
  return names;
}

}  // namespace nrf
