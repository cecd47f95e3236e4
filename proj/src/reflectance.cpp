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

#include "nrf/reflectance.hpp"

#include "nrf/error.hpp"
#include "nrf/scene.hpp"


#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

namespace nrf {

namespace detail {

namespace {

/// Reference path: one fused multiply-add per term in k order. The SIMD
/// kernel below performs exactly the same operations per output element.
void matmul_scalar(const double* w, int rows, int k, const double* in, std::size_t j0, std::size_t j1,
                   int i0, double* out) {
  for (std::size_t j = j0; j < j1; ++j) {
    const double* x = in + j * static_cast<std::size_t>(k);
    for (int i = i0; i < rows; ++i) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc = std::fma(w[static_cast<std::size_t>(kk) * rows + i], x[kk], acc);
      out[j * rows + i] = acc;
    }
  }
}

}  // namespace

void matmul(const double* w, int rows, int k, const double* in, std::size_t n, double* out) {
#if defined(__AVX512F__)
  // 32 rows x 4 columns of accumulators live in 16 zmm registers.
  constexpr int kRowBlock = 32;
  constexpr std::size_t kColBlock = 4;
  const int row_end = rows - rows % kRowBlock;
  const std::size_t col_end = n - n % kColBlock;
  for (std::size_t j = 0; j < col_end; j += kColBlock) {
    const double* x0 = in + j * static_cast<std::size_t>(k);
    const double* x1 = x0 + k;
    const double* x2 = x1 + k;
    const double* x3 = x2 + k;
    for (int i = 0; i < row_end; i += kRowBlock) {
      __m512d acc[kColBlock][4];
      for (auto& c : acc) for (auto& v : c) v = _mm512_setzero_pd();
      const double* wp = w + i;
      for (int kk = 0; kk < k; ++kk, wp += rows) {
        const __m512d w0 = _mm512_loadu_pd(wp), w1 = _mm512_loadu_pd(wp + 8);
        const __m512d w2 = _mm512_loadu_pd(wp + 16), w3 = _mm512_loadu_pd(wp + 24);
        const double xs[kColBlock] = {x0[kk], x1[kk], x2[kk], x3[kk]};
        for (std::size_t c = 0; c < kColBlock; ++c) {
          const __m512d xv = _mm512_set1_pd(xs[c]);
          acc[c][0] = _mm512_fmadd_pd(w0, xv, acc[c][0]);
          acc[c][1] = _mm512_fmadd_pd(w1, xv, acc[c][1]);
          acc[c][2] = _mm512_fmadd_pd(w2, xv, acc[c][2]);
          acc[c][3] = _mm512_fmadd_pd(w3, xv, acc[c][3]);
        }
      }
      for (std::size_t c = 0; c < kColBlock; ++c) {
        double* o = out + (j + c) * rows + i;
        for (int v = 0; v < 4; ++v) _mm512_storeu_pd(o + 8 * v, acc[c][v]);
      }
    }
    matmul_scalar(w, rows, k, in, j, j + kColBlock, row_end, out);
  }
  for (std::size_t j = col_end; j < n; ++j) {
    const double* x = in + j * static_cast<std::size_t>(k);
    for (int i = 0; i < row_end; i += kRowBlock) {
      __m512d acc[4] = {_mm512_setzero_pd(), _mm512_setzero_pd(), _mm512_setzero_pd(), _mm512_setzero_pd()};
      const double* wp = w + i;
      for (int kk = 0; kk < k; ++kk, wp += rows) {
        const __m512d xv = _mm512_set1_pd(x[kk]);
        for (int v = 0; v < 4; ++v) acc[v] = _mm512_fmadd_pd(_mm512_loadu_pd(wp + 8 * v), xv, acc[v]);
      }
      for (int v = 0; v < 4; ++v) _mm512_storeu_pd(out + j * rows + i + 8 * v, acc[v]);
    }
    matmul_scalar(w, rows, k, in, j, j + 1, row_end, out);
  }
#else
  matmul_scalar(w, rows, k, in, 0, n, 0, out);
#endif
}

}  // namespace detail

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ReflectanceNet::ReflectanceNet(int surfaces) : surfaces_(surfaces) {
  if (surfaces < 1) throw ValidationError("reflectance net needs at least one surface");
  std::size_t offset = 0;
  auto add = [&](int rows, int cols) {
    LayerShape l{rows, cols, offset, offset + static_cast<std::size_t>(rows) * cols};
    offset = l.bias_offset + static_cast<std::size_t>(rows);
    layers_.push_back(l);
  };
  const int in = input_dim();
  for (int l = 0; l < kHiddenLayers; ++l) {
    const int cols = l == 0 ? in : (l == kSkipLayer ? kWidth + in : kWidth);
    add(kWidth, cols);
  }
  add(kOutputs, kWidth);
  params_.assign(offset, 0.0);
}

ReflectanceNet ReflectanceNet::zeros(int surfaces) { return ReflectanceNet(surfaces); }

ReflectanceNet ReflectanceNet::init(int surfaces, std::uint64_t seed) {
  ReflectanceNet net(surfaces);
  net.seed_ = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    const auto& shape = net.layers_[l];
    const bool head = l + 1 == net.layers_.size();
    // He-uniform for ReLU layers; the head uses the smaller 1/sqrt(fan_in)
    // bound so the initial amplitude stays near 0.5.
    const double bound = head ? std::sqrt(1.0 / shape.cols) : std::sqrt(6.0 / shape.cols);
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(shape.rows) * shape.cols;
    for (std::size_t i = 0; i < n; ++i) net.params_[shape.weight_offset + i] = dist(rng);
  }
  return net;
}

void ReflectanceNet::check_input(double angle_rad, int surface_id) const {
  if (!(angle_rad >= 0.0 && angle_rad <= kHalfPi)) {
    throw ValidationError("reflectance input angle " + std::to_string(angle_rad) +
                          " outside [0, pi/2]");
  }
  if (surface_id < 0 || surface_id >= surfaces_) {
    throw ValidationError("reflectance input surface " + std::to_string(surface_id) +
                          " outside 0.." + std::to_string(surfaces_ - 1));
  }
}

std::vector<double> ReflectanceNet::encode(double angle_rad, int surface_id) const {
  check_input(angle_rad, surface_id);
  std::vector<double> x(static_cast<std::size_t>(input_dim()), 0.0);
  x[0] = angle_rad / kHalfPi;
  x[1 + static_cast<std::size_t>(surface_id)] = 1.0;
  return x;
}

void ReflectanceNet::forward(std::span<const double> angles, std::span<const int> surfaces,
                             Cache& cache) const {
  if (angles.size() != surfaces.size()) throw ValidationError("forward: angle/surface size mismatch");
  const std::size_t n = angles.size();
  const int in = input_dim();
  cache.batch = n;
  cache.inputs.resize(layers_.size());

  auto& x = cache.inputs[0];
  x.assign(static_cast<std::size_t>(in) * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    check_input(angles[j], surfaces[j]);
    x[j * in] = angles[j] / kHalfPi;
    x[j * in + 1 + static_cast<std::size_t>(surfaces[j])] = 1.0;
  }

  std::vector<double> z;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& shape = layers_[l];
    const double* w = params_.data() + shape.weight_offset;
    const double* b = params_.data() + shape.bias_offset;
    z.resize(static_cast<std::size_t>(shape.rows) * n);
    detail::matmul(w, shape.rows, shape.cols, cache.inputs[l].data(), n, z.data());
    for (std::size_t j = 0; j < n; ++j) {
      for (int r = 0; r < shape.rows; ++r) z[j * shape.rows + r] += b[r];
    }
    if (l + 1 == layers_.size()) {
      cache.head = z;
      break;
    }
    for (auto& v : z) v = v > 0.0 ? v : 0.0;

    auto& next = cache.inputs[l + 1];
    if (static_cast<int>(l + 1) == kSkipLayer) {
      const std::size_t cols = static_cast<std::size_t>(in + kWidth);
      next.resize(cols * n);
      for (std::size_t j = 0; j < n; ++j) {
        std::copy_n(x.data() + j * in, in, next.data() + j * cols);
        std::copy_n(z.data() + j * kWidth, kWidth, next.data() + j * cols + in);
      }
    } else {
      next = z;
    }
  }

  cache.amplitude.resize(n);
  cache.phase.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    cache.amplitude[j] = sigmoid(cache.head[2 * j]);
    cache.phase[j] = std::numbers::pi * std::tanh(cache.head[2 * j + 1]);
  }
}

std::vector<Coefficient> ReflectanceNet::forward(std::span<const double> angles,
                                                 std::span<const int> surfaces) const {
  Cache cache;
  forward(angles, surfaces, cache);
  std::vector<Coefficient> out(cache.batch);
  for (std::size_t j = 0; j < cache.batch; ++j) out[j] = {cache.amplitude[j], cache.phase[j]};
  return out;
}

Coefficient ReflectanceNet::forward(double angle_rad, int surface_id) const {
  const double a[1] = {angle_rad};
  const int s[1] = {surface_id};
  return forward(a, s).front();
}

void ReflectanceNet::backward(const Cache& cache, std::span<const double> d_amplitude,
                              std::span<const double> d_phase, std::span<double> grad) const {
  const std::size_t n = cache.batch;
  if (d_amplitude.size() != n || d_phase.size() != n) {
    throw ValidationError("backward: upstream gradient size " + std::to_string(d_amplitude.size()) +
                          "/" + std::to_string(d_phase.size()) + " does not match batch " +
                          std::to_string(n));
  }
  if (grad.size() != params_.size()) throw ValidationError("backward: gradient buffer size mismatch");
  if (cache.inputs.size() != layers_.size()) throw ValidationError("backward: cache not filled");
  if (n == 0) return;

  // Every product goes through detail::matmul so each gradient entry is
  // accumulated in a fixed order, independent of buffer alignment.
  auto transpose = [](const double* src, std::size_t rows, std::size_t cols, std::vector<double>& dst) {
    dst.resize(rows * cols);
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t r = 0; r < rows; ++r) dst[r * cols + c] = src[c * rows + r];
  };

  // Gradient w.r.t. head pre-activations, column-major (rows x n).
  std::vector<double> dz(static_cast<std::size_t>(kOutputs) * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = cache.amplitude[j];
    const double t = std::tanh(cache.head[2 * j + 1]);
    dz[2 * j] = d_amplitude[j] * a * (1.0 - a);
    dz[2 * j + 1] = d_phase[j] * std::numbers::pi * (1.0 - t * t);
  }

  const int in = input_dim();
  std::vector<double> xt, wt, dw, dx;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& shape = layers_[l];
    const auto rows = static_cast<std::size_t>(shape.rows);
    const auto cols = static_cast<std::size_t>(shape.cols);
    const std::vector<double>& x = cache.inputs[l];

    // dW = dz * x^T: dz is (rows x n), x^T is (n x cols).
    transpose(x.data(), cols, n, xt);
    dw.resize(rows * cols);
    detail::matmul(dz.data(), shape.rows, static_cast<int>(n), xt.data(), cols, dw.data());
    double* gw = grad.data() + shape.weight_offset;
    for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
    double* gb = grad.data() + shape.bias_offset;
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += dz[j * rows + r];
      gb[r] += acc;
    }
    if (l == 0) break;

    // dx = W^T * dz.
    transpose(params_.data() + shape.weight_offset, rows, cols, wt);
    dx.resize(cols * n);
    detail::matmul(wt.data(), shape.cols, shape.rows, dz.data(), n, dx.data());
    // The layer's input is the previous activation (after the input block for the skip layer).
    const std::size_t skip = static_cast<int>(l) == kSkipLayer ? static_cast<std::size_t>(in) : 0;
    const std::size_t prev = cols - skip;
    dz.resize(prev * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t r = 0; r < prev; ++r) {
        const std::size_t src = j * cols + skip + r;
        dz[j * prev + r] = x[src] > 0.0 ? dx[src] : 0.0;
      }
    }
  }
}

namespace {

constexpr char kMagic[4] = {'N', 'R', 'F', 'W'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  template <typename T>
  T get(const char* field) {
    if (pos_ + sizeof(T) > data_.size()) throw ParseError(source_ + ": truncated at " + field);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ReflectanceNet& net, const std::filesystem::path& path,
                     const OptimizerState* optimizer) {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, net.surface_count());
  put<std::uint64_t>(out, net.seed());
  put<std::int64_t>(out, net.iteration());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.cols));
  }
  const auto params = net.parameters();
  put<std::uint64_t>(out, params.size());
  // Weights are stored row-major in the file.
  for (const auto& l : net.layers()) {
    for (int r = 0; r < l.rows; ++r) {
      for (int c = 0; c < l.cols; ++c) {
        put<double>(out, params[l.weight_offset + static_cast<std::size_t>(c) * l.rows + r]);
      }
    }
    for (int r = 0; r < l.rows; ++r) put<double>(out, params[l.bias_offset + r]);
  }
  const bool has_opt = optimizer != nullptr && !optimizer->empty();
  put<std::uint8_t>(out, has_opt ? 1 : 0);
  if (has_opt) {
    if (optimizer->first_moment.size() != params.size() || optimizer->second_moment.size() != params.size()) {
      throw ValidationError("optimizer state does not match parameter count");
    }
    put<std::int64_t>(out, optimizer->step);
    for (double v : optimizer->first_moment) put<double>(out, v);
    for (double v : optimizer->second_moment) put<double>(out, v);
  }
  write_file_atomic(path, out);
}

ReflectanceNet load_checkpoint(const std::filesystem::path& path, OptimizerState* optimizer) {
  const std::string data = read_file(path);
  const std::string source = path.string();
  if (data.size() < sizeof kMagic || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError(source + ": not a reflectance checkpoint");
  }
  const std::string body = data.substr(sizeof kMagic);
  Reader rd(body, source);
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto surfaces = rd.get<std::int32_t>("surface count");
  if (surfaces < 1) throw ParseError(source + ": invalid surface count");
  ReflectanceNet net = ReflectanceNet::zeros(surfaces);
  const auto seed = rd.get<std::uint64_t>("seed");
  const auto iteration = rd.get<std::int64_t>("iteration");
  const auto n_layers = rd.get<std::uint32_t>("layer count");
  if (n_layers != net.layers().size()) throw ParseError(source + ": layer count mismatch");
  for (const auto& l : net.layers()) {
    const auto rows = rd.get<std::uint32_t>("layer rows");
    const auto cols = rd.get<std::uint32_t>("layer cols");
    if (static_cast<int>(rows) != l.rows || static_cast<int>(cols) != l.cols) {
      throw ParseError(source + ": layer shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not match " + std::to_string(surfaces) + " surfaces");
    }
  }
  const auto count = rd.get<std::uint64_t>("parameter count");
  if (count != net.parameter_count()) throw ParseError(source + ": parameter count mismatch");
  auto params = net.parameters();
  for (const auto& l : net.layers()) {
    for (int r = 0; r < l.rows; ++r) {
      for (int c = 0; c < l.cols; ++c) {
        params[l.weight_offset + static_cast<std::size_t>(c) * l.rows + r] = rd.get<double>("weights");
      }
    }
    for (int r = 0; r < l.rows; ++r) params[l.bias_offset + r] = rd.get<double>("biases");
  }
  const auto has_opt = rd.get<std::uint8_t>("optimizer flag");
  OptimizerState opt;
  if (has_opt) {
    opt.step = rd.get<std::int64_t>("optimizer step");
    opt.first_moment.resize(count);
    opt.second_moment.resize(count);
    for (auto& v : opt.first_moment) v = rd.get<double>("first moment");
    for (auto& v : opt.second_moment) v = rd.get<double>("second moment");
  }
  if (!rd.done()) throw ParseError(source + ": trailing bytes");
  if (optimizer != nullptr) *optimizer = std::move(opt);

  net.set_iteration(iteration);
  net.set_seed(seed);
  return net;
}

}  // namespace nrf
