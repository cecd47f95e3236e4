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

#include "nrf/error.hpp"
#include "nrf/reflectance.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

using namespace nrf;

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

/// Random (angle, surface) batch.
void random_batch(std::mt19937_64& rng, int surfaces, std::size_t n, std::vector<double>& a, std::vector<int>& s) {
  a.resize(n);
  s.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = test::uniform(rng, 0.0, kHalfPi);
    s[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(surfaces));
  }
}

}  // namespace

TEST_CASE("layer table: 8 hidden layers of width 256, skip before the sixth, 2 outputs") {
  const auto net = ReflectanceNet::zeros(5);
  const auto& l = net.layers();
  REQUIRE(l.size() == 9);
  CHECK(l[0].cols == 6);
  CHECK(l[ReflectanceNet::kSkipLayer].cols == 256 + 6);
  for (std::size_t i = 0; i < 8; ++i) CHECK(l[i].rows == 256);
  CHECK(l[8].rows == 2);
  CHECK(l[8].cols == 256);
  std::size_t expected = 0;
  for (const auto& s : l) expected += static_cast<std::size_t>(s.rows) * s.cols + s.rows;
  CHECK(net.parameter_count() == expected);
}

TEST_CASE("zero parameters give amplitude 0.5 and phase 0 for every input") {
  const auto net = ReflectanceNet::zeros(3);
  for (double a : {0.0, 0.3, kHalfPi}) {
    for (int s = 0; s < 3; ++s) {
      const Coefficient c = net.forward(a, s);
      CHECK(c.amplitude == 0.5);
      CHECK(c.phase == 0.0);
    }
  }
}

TEST_CASE("init is deterministic in the seed and biases start at zero") {
  const auto a = ReflectanceNet::init(4, 17), b = ReflectanceNet::init(4, 17), c = ReflectanceNet::init(4, 18);
  CHECK(std::memcmp(a.parameters().data(), b.parameters().data(), a.parameter_count() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.parameters().data(), c.parameters().data(), a.parameter_count() * sizeof(double)) != 0);
  for (const auto& l : a.layers()) {
    for (int r = 0; r < l.rows; ++r) CHECK(a.parameters()[l.bias_offset + static_cast<std::size_t>(r)] == 0.0);
  }
}

TEST_CASE("initial amplitudes are not saturated (Monte Carlo over 10^4 inputs)") {
  const auto net = ReflectanceNet::init(12, 1);
  std::mt19937_64 rng(2);
  std::vector<double> a;
  std::vector<int> s;
  random_batch(rng, 12, 10000, a, s);
  const auto out = net.forward(a, s);
  int inside = 0;
  for (const auto& c : out) inside += c.amplitude > 0.3 && c.amplitude < 0.7;
  CHECK(inside >= 9500);
}

TEST_CASE("outputs respect passivity and the phase range") {
  std::mt19937_64 rng(4);
  auto net = ReflectanceNet::init(6, 4);
  // Large weights push the head into saturation.
  for (auto& p : net.parameters()) p *= 4.0;
  std::vector<double> a;
  std::vector<int> s;
  random_batch(rng, 6, 2000, a, s);
  for (const auto& c : net.forward(a, s)) {
    CHECK(c.amplitude >= 0.0);
    CHECK(c.amplitude <= 1.0);
    CHECK(std::abs(c.phase) <= std::numbers::pi);
    CHECK(std::abs(c.value()) <= 1.0);
  }
}

TEST_CASE("batch evaluation equals single evaluations bitwise") {
  std::mt19937_64 rng(6);
  const auto net = ReflectanceNet::init(7, 3);
  for (std::size_t n : {1u, 3u, 4u, 5u, 33u, 257u}) {
    std::vector<double> a;
    std::vector<int> s;
    random_batch(rng, 7, n, a, s);
    const auto batch = net.forward(a, s);
    for (std::size_t i = 0; i < n; ++i) {
      const Coefficient one = net.forward(a[i], s[i]);
      CHECK(std::memcmp(&one.amplitude, &batch[i].amplitude, sizeof(double)) == 0);
      CHECK(std::memcmp(&one.phase, &batch[i].phase, sizeof(double)) == 0);
    }
    // Repeated calls agree bitwise.
    const auto again = net.forward(a, s);
    for (std::size_t i = 0; i < n; ++i) CHECK(again[i].amplitude == batch[i].amplitude);
  }
}

TEST_CASE("forward matches the long-double oracle") {
  std::mt19937_64 rng(8);
  const auto net = ReflectanceNet::init(5, 8);
  std::vector<double> a;
  std::vector<int> s;
  random_batch(rng, 5, 50, a, s);
  const auto out = net.forward(a, s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto o = oracle::mlp(net, net.parameters(), a[i], s[i]);
    CHECK(std::abs(out[i].amplitude - static_cast<double>(o.amplitude)) <= 1e-13);
    CHECK(std::abs(out[i].phase - static_cast<double>(o.phase)) <= 1e-12);
  }
}

TEST_CASE("output is Lipschitz-continuous in the angle") {
  std::mt19937_64 rng(10);
  const auto net = ReflectanceNet::init(3, 10);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double a = test::uniform(rng, 0.0, kHalfPi - h);
    const int s = static_cast<int>(rng() % 3);
    const double d = std::abs(net.forward(a + h, s).amplitude - net.forward(a, s).amplitude);
    worst = std::max(worst, d / h);
  }
  CHECK(worst < 50.0);
}

TEST_CASE("out-of-range inputs are rejected") {
  const auto net = ReflectanceNet::init(2, 1);
  CHECK_THROWS_AS(net.forward(-0.01, 0), ValidationError);
  CHECK_THROWS_AS(net.forward(kHalfPi + 1e-9, 0), ValidationError);
  CHECK_THROWS_AS(net.forward(0.1, 2), ValidationError);
  CHECK_THROWS_AS(net.forward(0.1, -1), ValidationError);
  CHECK_THROWS_AS(ReflectanceNet::init(0, 1), ValidationError);
}

TEST_CASE("backward: zero upstream gives zero gradient; shape mismatch throws") {
  std::mt19937_64 rng(12);
  const auto net = ReflectanceNet::init(4, 12);
  std::vector<double> a;
  std::vector<int> s;
  random_batch(rng, 4, 10, a, s);
  ReflectanceNet::Cache cache;
  net.forward(a, s, cache);
  std::vector<double> grad(net.parameter_count(), 0.0), zero(10, 0.0);
  net.backward(cache, zero, zero, grad);
  for (double g : grad) CHECK(g == 0.0);
  std::vector<double> wrong(9, 1.0);
  CHECK_THROWS_AS(net.backward(cache, wrong, zero, grad), ValidationError);
  std::vector<double> small(3);
  CHECK_THROWS_AS(net.backward(cache, zero, zero, small), ValidationError);
}

TEST_CASE("amplitude gradient does not reach the phase head row") {
  std::mt19937_64 rng(13);
  const auto net = ReflectanceNet::init(4, 13);
  std::vector<double> a;
  std::vector<int> s;
  random_batch(rng, 4, 20, a, s);
  ReflectanceNet::Cache cache;
  net.forward(a, s, cache);
  std::vector<double> grad(net.parameter_count(), 0.0), ones(20, 1.0), zero(20, 0.0);
  net.backward(cache, ones, zero, grad);
  const auto& head = net.layers().back();
  for (int c = 0; c < head.cols; ++c) CHECK(grad[head.weight_offset + static_cast<std::size_t>(c) * 2 + 1] == 0.0);
  CHECK(grad[head.bias_offset + 1] == 0.0);
  CHECK(grad[head.bias_offset] != 0.0);
}

TEST_CASE("backward matches central finite differences of the long-double oracle") {
  std::mt19937_64 rng(14);
  const double h = 1e-6;
  double worst = 0.0;
  int compared = 0;
  for (int trial = 0; trial < 6; ++trial) {
    auto net = ReflectanceNet::init(2 + trial, 100 + static_cast<std::uint64_t>(trial));
    // Non-zero biases so that bias gradients and kinks are exercised.
    for (const auto& l : net.layers()) {
      for (int r = 0; r < l.rows; ++r) net.parameters()[l.bias_offset + static_cast<std::size_t>(r)] = test::uniform(rng, -0.1, 0.1);
    }
    std::vector<double> a;
    std::vector<int> s;
    random_batch(rng, net.surface_count(), 4, a, s);
    std::vector<double> wa(4), wp(4);
    for (int i = 0; i < 4; ++i) {
      wa[static_cast<std::size_t>(i)] = test::uniform(rng, -1, 1);
      wp[static_cast<std::size_t>(i)] = test::uniform(rng, -1, 1);
    }
    ReflectanceNet::Cache cache;
    net.forward(a, s, cache);
    std::vector<double> grad(net.parameter_count(), 0.0);
    net.backward(cache, wa, wp, grad);

    auto objective = [&](std::span<const double> params, std::vector<bool>& pattern) {
      oracle::LD sum = 0;
      pattern.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const auto o = oracle::mlp(net, params, a[i], s[i]);
        sum += wa[i] * o.amplitude + wp[i] * o.phase;
        pattern.insert(pattern.end(), o.active.begin(), o.active.end());
      }
      return sum;
    };
    std::vector<double> params(net.parameters().begin(), net.parameters().end());
    for (const auto& l : net.layers()) {
      for (int pick = 0; pick < 3; ++pick) {
        const bool bias = pick == 2;
        const std::size_t idx = bias ? l.bias_offset + rng() % static_cast<std::uint64_t>(l.rows)
                                     : l.weight_offset + rng() % (static_cast<std::uint64_t>(l.rows) * l.cols);
        const double orig = params[idx];
        std::vector<bool> p_plus, p_minus;
        params[idx] = orig + h;
        const oracle::LD fp = objective(params, p_plus);
        params[idx] = orig - h;
        const oracle::LD fm = objective(params, p_minus);
        params[idx] = orig;
        if (p_plus != p_minus) continue;  // straddles a ReLU kink
        const double numeric = static_cast<double>((fp - fm) / (static_cast<oracle::LD>(orig + h) - static_cast<oracle::LD>(orig - h)));
        const double denom = std::max({std::abs(numeric), std::abs(grad[idx]), 1e-6});
        worst = std::max(worst, std::abs(numeric - grad[idx]) / denom);
        ++compared;
      }
    }
  }
  CHECK(compared > 100);
  CHECK(worst <= 1e-6);
  MESSAGE("max relative error " << worst << " over " << compared << " parameters");
}

TEST_CASE("checkpoint round trip preserves parameters, metadata and optimizer state") {
  const auto dir = test::scratch_dir("checkpoint");
  auto net = ReflectanceNet::init(5, 42);
  net.set_iteration(1234);
  OptimizerState opt;
  opt.step = 77;
  opt.first_moment.assign(net.parameter_count(), 0.25);
  opt.second_moment.assign(net.parameter_count(), 0.5);
  save_checkpoint(net, dir / "a.nrfw", &opt);
  OptimizerState back_opt;
  const auto back = load_checkpoint(dir / "a.nrfw", &back_opt);
  CHECK(back.surface_count() == 5);
  CHECK(back.seed() == 42);
  CHECK(back.iteration() == 1234);
  CHECK(std::memcmp(back.parameters().data(), net.parameters().data(), net.parameter_count() * sizeof(double)) == 0);
  CHECK(back_opt.step == 77);
  CHECK(back_opt.first_moment == opt.first_moment);
  CHECK(back_opt.second_moment == opt.second_moment);

  save_checkpoint(net, dir / "b.nrfw");
  OptimizerState none;
  load_checkpoint(dir / "b.nrfw", &none);
  CHECK(none.empty());

  // Corruption is detected.
  std::string bytes = read_file(dir / "a.nrfw");
  write_file_atomic(dir / "bad_magic.nrfw", "XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad_magic.nrfw"), ParseError);
  write_file_atomic(dir / "short.nrfw", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.nrfw"), ParseError);
}
