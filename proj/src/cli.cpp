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

#include "nrf/cli.hpp"

#include "nrf/error.hpp"
#include "nrf/eval.hpp"
#include "nrf/json_util.hpp"
#include "nrf/reflectance.hpp"
#include "nrf/renderer.hpp"
#include "nrf/scene.hpp"
#include "nrf/synth.hpp"
#include "nrf/tracer.hpp"
#include "nrf/trainer.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace nrf {

namespace fs = std::filesystem;
using json_util::Json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount())) != 1) {
      throw Error("sha256: update failed");
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256: final failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 15];
  }
  return hex;
}

namespace {

constexpr const char* kManifest = "manifest.json";

void log(const std::string& msg) { std::cerr << "nrfrt: " << msg << "\n"; }

/// Output directory of one subcommand: tracks inputs and outputs, writes the
/// manifest last, and removes partial outputs when the command fails.
class Run {
 public:
  Run(std::string subcommand, fs::path out) : subcommand_(std::move(subcommand)), out_(std::move(out)) {
    if (out_.empty()) throw ValidationError("--out is required");
    if (fs::exists(out_) && !fs::is_directory(out_)) {
      throw ValidationError("output '" + out_.string() + "' exists and is not a directory");
    }
    created_dir_ = fs::create_directories(out_);
    fs::remove(out_ / kManifest);
  }

  fs::path input(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw ValidationError("input file '" + p.string() + "' does not exist");
    inputs_.push_back({p.string(), sha256_file(p)});
    return p;
  }

  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    return out_ / name;
  }

  void finish(Json config, std::optional<std::uint64_t> seed) {
    Json doc;
    doc["format"] = "nrfrt-manifest";
    doc["version"] = 1;
    doc["tool_version"] = kToolVersion;
    doc["subcommand"] = subcommand_;
    doc["seed"] = seed ? Json(*seed) : Json(nullptr);
    doc["config"] = std::move(config);
    Json in = Json::array();
    for (const auto& [path, digest] : inputs_) in.push_back({{"path", path}, {"sha256", digest}});
    doc["inputs"] = std::move(in);
    Json out = Json::array();
    for (const auto& name : outputs_) out.push_back({{"path", name}, {"sha256", sha256_file(out_ / name)}});
    doc["outputs"] = std::move(out);
    write_file_atomic(out_ / kManifest, json_util::dump(doc));
    finished_ = true;
  }

  void abort() noexcept {
    if (finished_) return;
    std::error_code ec;
    for (const auto& name : outputs_) {
      fs::remove(out_ / name, ec);
      fs::remove(out_ / (name + ".tmp"), ec);
    }
    fs::remove(out_ / kManifest, ec);
    if (created_dir_ && fs::is_empty(out_, ec)) fs::remove(out_, ec);
  }

 private:
  std::string subcommand_;
  fs::path out_;
  bool created_dir_ = false;
  bool finished_ = false;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
};

struct Options {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::optional<int> max_reflections;
  std::optional<int> max_paths;
  std::optional<double> train_fraction;
  int threads = 1;

  std::string spec;
  std::string scene;
  std::string pathset;
  std::string data;
  std::string truth;
  std::string checkpoint;
  std::string resume;
  int samples = 2000;
  int bins = 1000;
  double noise_dbm = kDefaultNoiseDbm;
  std::vector<double> fractions = {0.1, 0.25, 0.5, 1.0};
};

TraceCaps resolve_caps(TraceCaps caps, const Options& o) {
  if (o.max_reflections) caps.max_reflections = *o.max_reflections;
  if (o.max_paths) caps.max_paths_per_pair = *o.max_paths;
  if (caps.max_reflections < 0) throw ValidationError("--max-reflections must be non-negative");
  if (caps.max_paths_per_pair <= 0) throw ValidationError("--max-paths must be positive");
  return caps;
}

Json caps_json(const TraceCaps& c) {
  return {{"max_reflections", c.max_reflections}, {"max_paths_per_pair", c.max_paths_per_pair}};
}

TrainConfig resolve_train_config(Run& run, const Options& o) {
  TrainConfig c;
  if (!o.config.empty()) c = load_train_config(run.input(o.config));
  if (o.seed) c.seed = *o.seed;
  if (o.train_fraction) c.train_fraction = *o.train_fraction;
  validate(c);
  return c;
}

Json config_json(const TrainConfig& c) { return json_util::parse(dump_train_config(c), "<config>"); }

void cmd_synth(Run& run, const Options& o) {
  SceneGenSpec spec;
  if (!o.spec.empty()) spec = load_gen_spec(run.input(o.spec));
  if (o.seed) spec.seed = *o.seed;
  spec.caps = resolve_caps(spec.caps, o);
  const Scene scene = gen_scene(spec);
  log("synth: " + std::to_string(scene.surfaces.size()) + " surfaces, " + std::to_string(scene.tx_nodes.size()) +
      " tx, " + std::to_string(scene.rx_nodes.size()) + " rx");
  const PathSet paths = trace_all(scene, spec.caps, o.threads);
  const GroundTruth truth = ground_truth_for(scene, spec.materials);
  const auto meas = gen_measurements(scene, paths, truth, spec.noise_db, spec.seed);
  save_scene(scene, run.output("scene.json"));
  save_pathset(paths, run.output("pathset.csv"));
  save_ground_truth(truth, run.output("truth.json"));
  save_measurements(meas, run.output("measurements.csv"));
  write_file_atomic(run.output("synth_spec.json"), dump_gen_spec(spec));
  run.finish(json_util::parse(dump_gen_spec(spec), "<spec>"), spec.seed);
}

void cmd_trace(Run& run, const Options& o) {
  const Scene scene = load_scene(run.input(o.scene));
  const TraceCaps caps = resolve_caps(TraceCaps{}, o);
  const PathSet paths = trace_all(scene, caps, o.threads);
  log("trace: " + std::to_string(paths.path_count()) + " paths over " + std::to_string(paths.pairs.size()) +
      " pairs");
  save_pathset(paths, run.output("pathset.csv"));
  run.finish(caps_json(caps), std::nullopt);
}

struct Inputs {
  Scene scene;
  PathSet paths;
};

Inputs load_scene_and_paths(Run& run, const Options& o) {
  Inputs in;
  in.scene = load_scene(run.input(o.scene));
  in.paths = load_pathset(run.input(o.pathset), in.scene);
  return in;
}

void cmd_train(Run& run, const Options& o) {
  const Inputs in = load_scene_and_paths(run, o);
  const Dataset data = make_dataset(in.scene, in.paths, load_measurements(run.input(o.data)));
  const TrainConfig config = resolve_train_config(run, o);
  std::optional<ReflectanceNet> start;
  OptimizerState opt;
  if (!o.resume.empty()) {
    start = load_checkpoint(run.input(o.resume), &opt);
    log("train: resuming at iteration " + std::to_string(start->iteration()));
  }
  const auto progress = [](const LossPoint& p) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "train: iteration %lld lr %.3g train_loss %.6g val_loss %.6g",
                  static_cast<long long>(p.iteration), p.lr, p.train_loss, p.val_loss);
    log(buf);
  };
  const TrainResult r = train(data, config, start ? &*start : nullptr, start ? &opt : nullptr, progress);
  write_file_atomic(run.output("loss_curve.csv"), dump_loss_curve_csv(r.curve));
  if (r.diverged) {
    save_checkpoint(r.net, run.output("last_good.nrfw"));
    throw NumericError("training diverged (" + r.divergence_message + "); last good model kept in last_good.nrfw");
  }
  save_checkpoint(r.net, run.output("model.nrfw"));
  save_checkpoint(r.final_net, run.output("final.nrfw"), &r.optimizer);
  log("train: best iteration " + std::to_string(r.best_iteration));
  run.finish(config_json(config), config.seed);
}

void cmd_eval(Run& run, const Options& o) {
  const Inputs in = load_scene_and_paths(run, o);
  const Dataset data = make_dataset(in.scene, in.paths, load_measurements(run.input(o.data)));
  const GroundTruth truth = load_ground_truth(run.input(o.truth));
  const ReflectanceNet net = load_checkpoint(run.input(o.checkpoint));
  const TrainConfig config = resolve_train_config(run, o);
  const EvalOptions opts{o.samples, o.bins, config.seed, o.noise_dbm};
  const EvalReport rep = evaluate(in.scene, data, truth, net, make_split(data.batch.n_rx, config), opts);
  write_file_atomic(run.output("fig5a_bins.csv"), fig5a_bins_csv(rep.coefficients, rep.noise_dbm));
  write_file_atomic(run.output("fig5b_materials.csv"), fig5b_materials_csv(rep.coefficients, rep.noise_dbm));
  write_file_atomic(run.output("fig7a_sinr_cdf.csv"), fig7a_sinr_cdf_csv(rep.links));
  write_file_atomic(run.output("fig7b_interference_cdf.csv"), fig7b_interference_cdf_csv(rep.links));
  write_file_atomic(run.output("power_errors.csv"), power_errors_csv(rep.power, rep.noise_dbm));
  write_file_atomic(run.output("summary.json"), summary_json(rep));
  char buf[200];
  std::snprintf(buf, sizeof buf, "eval: coefficient mean %.4g dB p99 %.4g dB; power mean %.4g dB; sinr median %.4g dB",
                rep.coefficients.overall.mean, rep.coefficients.overall.p99, rep.power.stats.mean,
                rep.links.sinr.median);
  log(buf);
  Json cfg = config_json(config);
  cfg["samples_per_surface"] = o.samples;
  cfg["bins"] = o.bins;
  cfg["noise_dbm"] = o.noise_dbm;
  run.finish(std::move(cfg), config.seed);
}

void cmd_sweep(Run& run, const Options& o) {
  const Inputs in = load_scene_and_paths(run, o);
  const Dataset data = make_dataset(in.scene, in.paths, load_measurements(run.input(o.data)));
  const GroundTruth truth = load_ground_truth(run.input(o.truth));
  const TrainConfig config = resolve_train_config(run, o);
  const EvalOptions opts{o.samples, o.bins, config.seed, o.noise_dbm};
  const auto rows = density_sweep(in.scene, data, truth, config, o.fractions, opts);
  write_file_atomic(run.output("fig6a_density.csv"), fig6a_density_csv(rows, o.noise_dbm));
  write_file_atomic(run.output("fig6b_density.csv"), fig6b_density_csv(rows, o.noise_dbm));
  Json cfg = config_json(config);
  cfg["fractions"] = o.fractions;
  cfg["samples_per_surface"] = o.samples;
  cfg["bins"] = o.bins;
  cfg["noise_dbm"] = o.noise_dbm;
  run.finish(std::move(cfg), config.seed);
}

void cmd_predict(Run& run, const Options& o) {
  const Inputs in = load_scene_and_paths(run, o);
  const ReflectanceNet net = load_checkpoint(run.input(o.checkpoint));
  const PaddedBatch batch = pad(in.scene, in.paths);
  std::vector<double> true_dbm;
  if (!o.data.empty()) true_dbm = make_dataset(in.scene, in.paths, load_measurements(run.input(o.data))).true_dbm;
  const RenderResult r = render_with_net(batch, net);
  write_file_atomic(run.output("predictions.csv"), dump_predictions_csv(batch, r, true_dbm));
  run.finish(Json::object(), std::nullopt);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"nrfrt: differentiable RF ray tracing with a neural reflectance field.\n"
               "Pipeline: synth -> trace -> train -> eval / predict (sweep for data-density studies).\n"
               "Every subcommand writes its outputs plus manifest.json (written last) into --out."};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Options o;
  std::function<void(Run&, const Options&)> action;
  std::string name;

  auto common = [&](CLI::App* sub, bool caps, bool train) {
    sub->add_option("--out", o.out, "Output directory (created if missing)")->required();
    sub->add_option("--seed", o.seed, "Seed override (synth spec / training config)");
    sub->add_option("--threads", o.threads, "Worker threads for tracing")->check(CLI::PositiveNumber);
    if (caps) {
      sub->add_option("--max-reflections", o.max_reflections, "Maximum bounces per path (default 3)");
      sub->add_option("--max-paths", o.max_paths, "Maximum paths kept per tx/rx pair (default 7)");
    }
    if (train) {
      sub->add_option("--config", o.config, "Training config file (JSON, format nrfrt-train-config)");
      sub->add_option("--train-fraction", o.train_fraction, "Share of rx used for training (default 0.8)");
    }
  };
  auto scene_inputs = [&](CLI::App* sub) {
    sub->add_option("--scene", o.scene, "Scene file (JSON, format nrfrt-scene)")->required();
    sub->add_option("--pathset", o.pathset, "Path set CSV from `trace`")->required();
  };
  auto bind = [&](CLI::App* sub, std::function<void(Run&, const Options&)> fn) {
    sub->callback([&, sub, fn] {
      name = sub->get_name();
      action = fn;
    });
  };

  auto* synth = app.add_subcommand("synth", "Generate a box-city scene, paths, ground truth and measurements");
  synth->add_option("--spec", o.spec, "Scene generation spec (JSON, format nrfrt-synth); defaults if omitted");
  common(synth, true, false);
  bind(synth, cmd_synth);

  auto* trace = app.add_subcommand("trace", "Trace specular paths (image method) for every tx/rx pair");
  trace->add_option("--scene", o.scene, "Scene file")->required();
  common(trace, true, false);
  bind(trace, cmd_trace);

  auto* trn = app.add_subcommand("train", "Fit the reflectance network to receive-power measurements");
  scene_inputs(trn);
  trn->add_option("--data", o.data, "Measurements CSV (rx_id,P_rx_dBm)")->required();
  trn->add_option("--resume", o.resume, "Checkpoint with optimizer state (final.nrfw) to continue from");
  common(trn, false, true);
  bind(trn, cmd_train);

  auto* ev = app.add_subcommand("eval", "Coefficient, power, SINR and interference errors of a trained model");
  scene_inputs(ev);
  ev->add_option("--data", o.data, "Measurements CSV")->required();
  ev->add_option("--truth", o.truth, "Ground-truth sidecar from `synth`")->required();
  ev->add_option("--checkpoint", o.checkpoint, "Trained model (model.nrfw)")->required();
  ev->add_option("--samples", o.samples, "Random angles per surface for the coefficient sweep")
      ->check(CLI::PositiveNumber);
  ev->add_option("--bins", o.bins, "Incident-angle bins over [0, 90] degrees")->check(CLI::PositiveNumber);
  ev->add_option("--noise-dbm", o.noise_dbm, "Noise power for SINR (default -94 dBm)");
  common(ev, false, true);
  bind(ev, cmd_eval);

  auto* sw = app.add_subcommand("sweep", "Retrain at several training-data densities and report errors");
  scene_inputs(sw);
  sw->add_option("--data", o.data, "Measurements CSV")->required();
  sw->add_option("--truth", o.truth, "Ground-truth sidecar")->required();
  sw->add_option("--fractions", o.fractions, "Shares of the training rx to use")->delimiter(',');
  sw->add_option("--samples", o.samples, "Random angles per surface")->check(CLI::PositiveNumber);
  sw->add_option("--bins", o.bins, "Incident-angle bins")->check(CLI::PositiveNumber);
  sw->add_option("--noise-dbm", o.noise_dbm, "Noise power recorded in the report headers");
  common(sw, false, true);
  bind(sw, cmd_sweep);

  auto* pr = app.add_subcommand("predict", "Predict receive power and per-tx channels with a trained model");
  scene_inputs(pr);
  pr->add_option("--checkpoint", o.checkpoint, "Trained model")->required();
  pr->add_option("--data", o.data, "Optional measurements to include as P_rx_dBm_true");
  common(pr, false, false);
  bind(pr, cmd_predict);

  app.footer(
      "Files: scene JSON {format:\"nrfrt-scene\",version:1,carrier_wavelength_m,surfaces:[{id,material_id?,"
      "vertices}],tx_nodes:[{id,position,power_watts}],rx_nodes:[{id,position}]}; path set CSV with one row per "
      "path; measurements CSV rx_id,P_rx_dBm; checkpoints are binary (.nrfw). See README.md for all schemas.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::optional<Run> run;
  try {
    run.emplace(name, o.out);
    action(*run, o);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "nrfrt " << name << ": error: " << e.what() << "\n";
    if (run) run->abort();
    return 1;
  }
}

}  // namespace nrf
