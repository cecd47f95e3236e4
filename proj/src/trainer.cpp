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

#include "nrf/trainer.hpp"

#include "nrf/error.hpp"
#include "nrf/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

namespace nrf {

namespace {

constexpr const char* kConfigFormat = "nrfrt-train-config";

const char* schedule_name(Schedule s) { return s == Schedule::Single ? "single" : "warm_restarts"; }

}  // namespace

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  if (!(c.lr_init > 0.0)) fail("lr_init must be positive");
  if (!(c.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (c.t_max <= 0) fail("t_max must be positive");
  if (!(c.eta_min > 0.0 && c.eta_min < c.lr_init)) fail("eta_min must be in (0, lr_init)");
  if (c.max_iterations < 0) fail("max_iterations must be non-negative");
  if (c.batch_rx < 0) fail("batch_rx must be non-negative");
  if (!(c.grad_clip_norm >= 0.0)) fail("grad_clip_norm must be non-negative");
  if (c.checkpoint_interval <= 0) fail("checkpoint_interval must be positive");
  if (!(c.train_fraction > 0.0 && c.train_fraction <= 1.0)) fail("train_fraction must be in (0, 1]");
  if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0)) fail("validation_fraction must be in [0, 1)");
  if (!(c.density_fraction > 0.0 && c.density_fraction <= 1.0)) fail("density_fraction must be in (0, 1]");
}

TrainConfig parse_train_config(const std::string& text, const std::string& source) {
  using json_util::Json;
  const Json doc = json_util::parse(text, source);
  json_util::expect_format(doc, kConfigFormat, 1, source);
  const auto& w = source;
  auto int64_or = [&](const char* key, std::int64_t fallback) -> std::int64_t {
    if (!doc.contains(key)) return fallback;
    if (!doc.at(key).is_number_integer()) throw ParseError(w + ": field '" + key + "' must be an integer");
    return doc.at(key).get<std::int64_t>();
  };
  TrainConfig c;
  c.lr_init = json_util::number_or(doc, "lr_init", c.lr_init, w);
  c.weight_decay = json_util::number_or(doc, "weight_decay", c.weight_decay, w);
  c.t_max = int64_or("t_max", c.t_max);
  c.eta_min = json_util::number_or(doc, "eta_min", c.eta_min, w);
  c.max_iterations = int64_or("max_iterations", c.max_iterations);
  if (doc.contains("schedule")) {
    const std::string s = json_util::get_string(doc, "schedule", w);
    if (s == "warm_restarts") c.schedule = Schedule::WarmRestarts;
    else if (s == "single") c.schedule = Schedule::Single;
    else throw ParseError(w + ": field 'schedule' must be \"warm_restarts\" or \"single\"");
  }
  c.batch_rx = json_util::int_or(doc, "batch_rx", c.batch_rx, w);
  c.grad_clip_norm = json_util::number_or(doc, "grad_clip_norm", c.grad_clip_norm, w);
  c.seed = static_cast<std::uint64_t>(int64_or("seed", static_cast<std::int64_t>(c.seed)));
  c.checkpoint_interval = int64_or("checkpoint_interval", c.checkpoint_interval);
  c.train_fraction = json_util::number_or(doc, "train_fraction", c.train_fraction, w);
  c.validation_fraction = json_util::number_or(doc, "validation_fraction", c.validation_fraction, w);
  c.density_fraction = json_util::number_or(doc, "density_fraction", c.density_fraction, w);
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(read_file(path), path.string());
}

std::string dump_train_config(const TrainConfig& c) {
  json_util::Json doc;
  doc["format"] = kConfigFormat;
  doc["version"] = 1;
  doc["lr_init"] = c.lr_init;
  doc["weight_decay"] = c.weight_decay;
  doc["t_max"] = c.t_max;
  doc["eta_min"] = c.eta_min;
  doc["max_iterations"] = c.max_iterations;
  doc["schedule"] = schedule_name(c.schedule);
  doc["batch_rx"] = c.batch_rx;
  doc["grad_clip_norm"] = c.grad_clip_norm;
  doc["seed"] = c.seed;
  doc["checkpoint_interval"] = c.checkpoint_interval;
  doc["train_fraction"] = c.train_fraction;
  doc["validation_fraction"] = c.validation_fraction;
  doc["density_fraction"] = c.density_fraction;
  return json_util::dump(doc);
}

double loss(std::span<const double> pred_dbm, std::span<const double> true_dbm) {
  if (pred_dbm.size() != true_dbm.size()) throw ValidationError("loss: length mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred_dbm.size(); ++i) {
    if (!std::isfinite(pred_dbm[i]) || !std::isfinite(true_dbm[i])) continue;
    const double e = pred_dbm[i] - true_dbm[i];
    sum += e * e;
    ++n;
  }
  if (n == 0) throw ValidationError("loss: no finite entries");
  return sum / static_cast<double>(n);
}

std::vector<double> loss_gradient(std::span<const double> pred_dbm, std::span<const double> true_dbm) {
  if (pred_dbm.size() != true_dbm.size()) throw ValidationError("loss: length mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred_dbm.size(); ++i) {
    if (std::isfinite(pred_dbm[i]) && std::isfinite(true_dbm[i])) ++n;
  }
  if (n == 0) throw ValidationError("loss: no finite entries");
  std::vector<double> g(pred_dbm.size(), 0.0);
  for (std::size_t i = 0; i < pred_dbm.size(); ++i) {
    if (std::isfinite(pred_dbm[i]) && std::isfinite(true_dbm[i])) {
      g[i] = 2.0 * (pred_dbm[i] - true_dbm[i]) / static_cast<double>(n);
    }
  }
  return g;
}

double lr_schedule(std::int64_t t, const TrainConfig& c) {
  if (t < 0) throw ValidationError("lr_schedule: negative iteration");
  double u = 0.0;
  double period = 0.0;
  if (c.schedule == Schedule::Single) {
    period = static_cast<double>(std::max<std::int64_t>(c.max_iterations, 1));
    u = std::min(static_cast<double>(t), period);
  } else {
    period = static_cast<double>(c.t_max);
    std::int64_t pos = t % c.t_max;
    if (t > 0 && pos == 0) pos = c.t_max;
    u = static_cast<double>(pos);
  }
  return c.eta_min + 0.5 * (c.lr_init - c.eta_min) * (1.0 + std::cos(std::numbers::pi * u / period));
}

std::string parameter_path(const std::vector<LayerShape>& layers, std::size_t index) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    const std::size_t nw = static_cast<std::size_t>(s.rows) * s.cols;
    if (index >= s.weight_offset && index < s.weight_offset + nw) {
      const std::size_t k = index - s.weight_offset;
      return "layer " + std::to_string(l) + " weight[" + std::to_string(k % s.rows) + "," +
             std::to_string(k / s.rows) + "]";
    }
    if (index >= s.bias_offset && index < s.bias_offset + static_cast<std::size_t>(s.rows)) {
      return "layer " + std::to_string(l) + " bias[" + std::to_string(index - s.bias_offset) + "]";
    }
  }
  return "parameter " + std::to_string(index);
}

void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
               double lr, double weight_decay, const std::vector<LayerShape>& layers) {
  if (params.size() != grads.size()) throw ValidationError("adam_step: gradient size mismatch");
  if (state.empty()) {
    state.step = 0;
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ValidationError("adam_step: optimizer state size mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient at " + parameter_path(layers, i));
    }
  }
  constexpr double b1 = TrainConfig::kBeta1, b2 = TrainConfig::kBeta2, eps = TrainConfig::kEpsilon;
  ++state.step;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double decay = lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    params[i] -= decay * params[i];
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
  }
}

Split make_split(int rows, const TrainConfig& c) {
  validate(c);
  std::vector<int> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(c.seed);
  // Fisher-Yates with our own index draw: std::shuffle is not specified bitwise
  // across standard libraries.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(c.train_fraction * rows));
  const auto n_used = std::max<std::size_t>(
      std::min<std::size_t>(n_train, 1), static_cast<std::size_t>(std::llround(c.density_fraction * n_train)));
  std::size_t n_val = static_cast<std::size_t>(std::llround(c.validation_fraction * n_used));
  if (c.validation_fraction > 0.0 && n_val == 0 && n_used >= 2) n_val = 1;
  if (n_val >= n_used) n_val = n_used > 0 ? n_used - 1 : 0;

  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_used - n_val));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_used - n_val),
                      order.begin() + static_cast<std::ptrdiff_t>(n_used));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Dataset make_dataset(const Scene& scene, const PathSet& paths, const std::vector<Measurement>& measurements) {
  Dataset d;
  d.batch = pad(scene, paths);
  std::map<int, double> by_rx;
  for (const auto& m : measurements) {
    if (!by_rx.emplace(m.rx_id, m.power_dbm).second) {
      throw ValidationError("dataset: duplicate measurement for rx " + std::to_string(m.rx_id));
    }
  }
  d.true_dbm.reserve(d.batch.rx_ids.size());
  for (int rx : d.batch.rx_ids) {
    const auto it = by_rx.find(rx);
    if (it == by_rx.end()) throw ValidationError("dataset: no measurement for rx " + std::to_string(rx));
    d.true_dbm.push_back(it->second);
    by_rx.erase(it);
  }
  if (!by_rx.empty()) {
    throw ValidationError("dataset: measurement for rx " + std::to_string(by_rx.begin()->first) +
                          " which is not in the path set");
  }
  return d;
}

namespace {

struct SlotInputs {
  std::vector<std::size_t> slots;
  std::vector<double> angles;
  std::vector<int> surfaces;
};

SlotInputs gather_inputs(const PaddedBatch& batch) {
  SlotInputs in;
  in.slots = batch.real_slots();
  in.angles.resize(in.slots.size());
  in.surfaces.resize(in.slots.size());
  for (std::size_t i = 0; i < in.slots.size(); ++i) {
    in.angles[i] = batch.angle_rad[in.slots[i]];
    in.surfaces[i] = batch.surface_id[in.slots[i]];
  }
  return in;
}

}  // namespace

double loss_and_gradient(const ReflectanceNet& net, const PaddedBatch& batch, std::span<const double> true_dbm,
                         std::span<double> grad) {
  if (true_dbm.size() != static_cast<std::size_t>(batch.n_rx)) {
    throw ValidationError("loss_and_gradient: measurements do not match batch rows");
  }
  if (grad.size() != net.parameter_count()) throw ValidationError("loss_and_gradient: gradient size mismatch");
  const SlotInputs in = gather_inputs(batch);
  ReflectanceNet::Cache cache;
  net.forward(in.angles, in.surfaces, cache);
  std::vector<double> amp(batch.slot_count(), 1.0), ph(batch.slot_count(), 0.0);
  for (std::size_t i = 0; i < in.slots.size(); ++i) {
    amp[in.slots[i]] = cache.amplitude[i];
    ph[in.slots[i]] = cache.phase[i];
  }
  Renderer renderer(batch);
  const RenderResult& r = renderer.forward(amp, ph);
  const double value = loss(r.power_dbm, true_dbm);
  const std::vector<double> up = loss_gradient(r.power_dbm, true_dbm);
  std::vector<double> d_amp(batch.slot_count()), d_ph(batch.slot_count());
  renderer.backward(up, d_amp, d_ph);
  std::vector<double> da(in.slots.size()), dp(in.slots.size());
  for (std::size_t i = 0; i < in.slots.size(); ++i) {
    da[i] = d_amp[in.slots[i]];
    dp[i] = d_ph[in.slots[i]];
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  net.backward(cache, da, dp, grad);
  return value;
}

double evaluate_loss(const ReflectanceNet& net, const PaddedBatch& batch, std::span<const double> true_dbm) {
  const RenderResult r = render_with_net(batch, net);
  return loss(r.power_dbm, true_dbm);
}

namespace {

std::vector<double> pick(std::span<const double> values, std::span<const int> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(values[static_cast<std::size_t>(r)]);
  return out;
}

bool has_finite_target(std::span<const double> values) {
  return std::any_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// Mini-batch rows for iteration t: epochs are seeded permutations of the
/// training rows, so the schedule depends only on (seed, t) and resumes exactly.
std::vector<int> minibatch_rows(const std::vector<int>& train, int batch_rx, std::uint64_t seed, std::int64_t t) {
  const auto n = static_cast<std::int64_t>(train.size());
  const std::int64_t per_epoch = (n + batch_rx - 1) / batch_rx;
  const std::int64_t epoch = t / per_epoch;
  const std::int64_t offset = (t % per_epoch) * batch_rx;
  std::vector<int> perm = train;
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1)));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng() % i)]);
  const std::int64_t end = std::min(n, offset + batch_rx);
  std::vector<int> rows(perm.begin() + offset, perm.begin() + end);
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; non-finite
/// gradients are left for adam_step to report.
void clip_gradient(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm) || !std::isfinite(norm)) return;
  const double scale = max_norm / norm;
  for (double& g : grad) g *= scale;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const ReflectanceNet* initial,
                  const OptimizerState* optimizer, const ProgressFn& progress) {
  validate(config);
  const int surfaces = [&] {
    int m = 0;
    for (std::size_t s : data.batch.real_slots()) m = std::max(m, data.batch.surface_id[s] + 1);
    return m;
  }();
  ReflectanceNet net = initial ? *initial : ReflectanceNet::init(std::max(surfaces, 1), config.seed);
  if (net.surface_count() < surfaces) {
    throw ValidationError("train: network covers " + std::to_string(net.surface_count()) +
                          " surfaces but the path set references " + std::to_string(surfaces));
  }
  OptimizerState state = optimizer ? *optimizer : OptimizerState{};

  TrainResult result;
  result.split = make_split(data.batch.n_rx, config);
  const Split& split = result.split;
  const PaddedBatch train_batch = data.batch.select_rx(split.train);
  const std::vector<double> train_true = pick(data.true_dbm, split.train);
  if (!has_finite_target(train_true)) throw ValidationError("train: no usable training measurements");
  const PaddedBatch val_batch = data.batch.select_rx(split.validation);
  const std::vector<double> val_true = pick(data.true_dbm, split.validation);
  const bool has_val = has_finite_target(val_true);
  const bool full_batch = config.batch_rx == 0 || config.batch_rx >= static_cast<int>(split.train.size());

  std::vector<double> grad(net.parameter_count());
  result.best_iteration = net.iteration();
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.net = net;

  auto record = [&](std::int64_t t, double train_loss) {
    LossPoint p{t, lr_schedule(t, config), train_loss, std::numeric_limits<double>::quiet_NaN()};
    if (has_val) p.val_loss = evaluate_loss(net, val_batch, val_true);
    const double select = has_val ? p.val_loss : p.train_loss;
    if (std::isfinite(select) && select < result.best_val_loss) {
      result.best_val_loss = select;
      result.best_iteration = t;
      result.net = net;
      result.net.set_iteration(t);
    }
    result.curve.push_back(p);
    if (progress) progress(p);
  };

  auto diverge = [&](std::int64_t t, const std::string& why) {
    result.diverged = true;
    result.divergence_message = "iteration " + std::to_string(t) + ": " + why;
    result.final_net = result.net;
    result.optimizer = state;
  };

  const std::int64_t start = net.iteration();
  for (std::int64_t t = start; t < config.max_iterations; ++t) {
    const bool log_now = t == start || t % config.checkpoint_interval == 0;
    double step_loss = 0.0;
    if (full_batch) {
      step_loss = loss_and_gradient(net, train_batch, train_true, grad);
    } else {
      const auto rows = minibatch_rows(split.train, config.batch_rx, config.seed, t);
      const PaddedBatch sub = data.batch.select_rx(rows);
      const std::vector<double> sub_true = pick(data.true_dbm, rows);
      if (has_finite_target(sub_true)) {
        step_loss = loss_and_gradient(net, sub, sub_true, grad);
      } else {
        std::fill(grad.begin(), grad.end(), 0.0);
      }
    }
    if (!std::isfinite(step_loss)) {
      diverge(t, "training loss is not finite");
      return result;
    }
    if (log_now) record(t, full_batch ? step_loss : evaluate_loss(net, train_batch, train_true));
    if (config.grad_clip_norm > 0.0) clip_gradient(grad, config.grad_clip_norm);
    try {
      adam_step(net.parameters(), grad, state, lr_schedule(t, config), config.weight_decay, net.layers());
    } catch (const NumericError& e) {
      diverge(t, e.what());
      return result;
    }
    net.set_iteration(t + 1);
  }
  const std::int64_t end = std::max(start, config.max_iterations);
  if (result.curve.empty() || result.curve.back().iteration != end) {
    const double final_loss = evaluate_loss(net, train_batch, train_true);
    if (!std::isfinite(final_loss)) {
      diverge(end, "training loss is not finite");
      return result;
    }
    record(end, final_loss);
  }
  result.final_net = net;
  result.optimizer = state;
  return result;
}

std::string dump_loss_curve_csv(const std::vector<LossPoint>& curve) {
  std::string out = "iteration,lr,train_loss,val_loss\n";
  char buf[128];
  for (const auto& p : curve) {
    if (std::isnan(p.val_loss)) {
      std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,nan\n", static_cast<long long>(p.iteration), p.lr,
                    p.train_loss);
    } else {
      std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(p.iteration), p.lr,
                    p.train_loss, p.val_loss);
    }
    out += buf;
  }
  return out;
}

}  // namespace nrf
