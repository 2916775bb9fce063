/* Copyright 2026 The subbyte-har Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "shar/layers.hpp"

#include <cmath>
#include <string>

#include "shar/error.hpp"

namespace shar {

int active_channels(int channels, double width) {
  if (!(width > 0.0) || width > 1.0) fail(ErrorKind::config, "width fraction must be in (0, 1]");
  const int n = static_cast<int>(std::ceil(channels * width - 1e-9));
  return std::max(1, std::min(channels, n));
}

Conv1DLayer::Conv1DLayer(int c_in_, int c_out_, int k_)
    : c_in(c_in_), c_out(c_out_), k(k_),
      weight(static_cast<std::size_t>(c_out_) * c_in_ * k_, 0.0, true),
      bias(static_cast<std::size_t>(c_out_), 0.0) {
  if (k % 2 == 0) fail(ErrorKind::config, "conv kernel size must be odd");
}

BatchNormBank::BatchNormBank(int channels_, const std::vector<double>& widths) : channels(channels_) {
  for (double w : widths) {
    const int c = active_channels(channels, w);
    Entry e;
    e.width = w;
    e.gamma = Param(c, 1.0);
    e.beta = Param(c, 0.0);
    e.running_mean.assign(c, 0.0);
    e.running_var.assign(c, 1.0);
    entries.push_back(std::move(e));
  }
}

std::size_t BatchNormBank::index_of(double width) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (std::abs(entries[i].width - width) < 1e-12) return i;
  }
  fail(ErrorKind::config, "BatchNorm bank has no parameters for width " + std::to_string(width));
}

FCLayer::FCLayer(int in, int out)
    : in_features(in), out_features(out),
      weight(static_cast<std::size_t>(in) * out, 0.0, true),
      bias(static_cast<std::size_t>(out), 0.0) {}

Tensor conv1d_kernel(const Tensor& x, std::span<const double> w, std::span<const double> bias, int c_in, int k,
                     int co_active) {
  if (x.rank() != 3) fail(ErrorKind::dimension, "conv1d expects a [N, C, L] input");
  const int n = x.dim(0), ci = x.dim(1), len = x.dim(2);
  if (ci > c_in || len < 1) fail(ErrorKind::dimension, "conv1d input has " + std::to_string(ci) + " channels, layer takes " + std::to_string(c_in));
  if (w.size() < static_cast<std::size_t>(co_active) * c_in * k) fail(ErrorKind::dimension, "conv1d weight tensor too small");
  const int pad = k / 2;
  Tensor y({n, co_active, len});
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < co_active; ++o) {
      double* out = y.row(b, o);
      const double b0 = bias.empty() ? 0.0 : bias[o];
      for (int t = 0; t < len; ++t) out[t] = b0;
      for (int i = 0; i < ci; ++i) {
        const double* in = x.row(b, i);
        const double* wrow = &w[(static_cast<std::size_t>(o) * c_in + i) * k];
        for (int j = 0; j < k; ++j) {
          const double wv = wrow[j];
          const int shift = j - pad;
          const int t0 = std::max(0, -shift);
          const int t1 = std::min(len, len - shift);
          for (int t = t0; t < t1; ++t) out[t] += wv * in[t + shift];
        }
      }
    }
  }
  return y;
}

void conv1d_kernel_backward(const Tensor& x, std::span<const double> w, int c_in, int k, const Tensor& grad_out,
                            Tensor* grad_x, std::span<double> grad_w, std::span<double> grad_b) {
  const int n = x.dim(0), ci = x.dim(1), len = x.dim(2);
  const int co = grad_out.dim(1);
  if (grad_out.dim(0) != n || grad_out.dim(2) != len) fail(ErrorKind::dimension, "conv1d gradient shape mismatch");
  const int pad = k / 2;

#pragma omp parallel for schedule(static)
  for (int o = 0; o < co; ++o) {
    double gb = 0.0;
    for (int b = 0; b < n; ++b) {
      const double* g = grad_out.row(b, o);
      for (int t = 0; t < len; ++t) gb += g[t];
      for (int i = 0; i < ci; ++i) {
        const double* in = x.row(b, i);
        double* gw = &grad_w[(static_cast<std::size_t>(o) * c_in + i) * k];
        for (int j = 0; j < k; ++j) {
          const int shift = j - pad;
          const int t0 = std::max(0, -shift);
          const int t1 = std::min(len, len - shift);
          double s = 0.0;
          for (int t = t0; t < t1; ++t) s += g[t] * in[t + shift];
          gw[j] += s;
        }
      }
    }
    if (!grad_b.empty()) grad_b[o] += gb;
  }

  if (!grad_x) return;
  *grad_x = Tensor({n, ci, len});
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < ci; ++i) {
      double* gx = grad_x->row(b, i);
      for (int o = 0; o < co; ++o) {
        const double* g = grad_out.row(b, o);
        const double* wrow = &w[(static_cast<std::size_t>(o) * c_in + i) * k];
        for (int j = 0; j < k; ++j) {
          const double wv = wrow[j];
          const int shift = j - pad;
          const int t0 = std::max(0, -shift);
          const int t1 = std::min(len, len - shift);
          // out[t] used in[t + shift]  =>  gx[p] += g[p - shift] * w
          for (int t = t0; t < t1; ++t) gx[t + shift] += g[t] * wv;
        }
      }
    }
  }
}

Tensor conv1d_forward(const Tensor& x, const Conv1DLayer& layer, double width, ConvCache* cache) {
  const int co = active_channels(layer.c_out, width);
  std::vector<double> wq(layer.weight.size());
  layer.w_quant.forward(layer.weight.value, wq);
  Tensor y = conv1d_kernel(x, wq, layer.bias.value, layer.c_in, layer.k, co);
  if (cache) {
    cache->valid = true;
    cache->x = x;
    cache->w_q = std::move(wq);
    cache->co_active = co;
  }
  return y;
}

ConvGrads conv1d_backward(const Tensor& grad_out, const ConvCache& cache, Conv1DLayer& layer) {
  if (!cache.valid) fail(ErrorKind::state, "conv1d backward called without a forward cache");
  if (grad_out.dim(1) != cache.co_active) fail(ErrorKind::dimension, "conv1d gradient channel mismatch");
  std::vector<double> grad_wq(layer.weight.size(), 0.0);
  ConvGrads g;
  conv1d_kernel_backward(cache.x, cache.w_q, layer.c_in, layer.k, grad_out, &g.grad_x, grad_wq, layer.bias.grad);
  layer.w_quant.backward(layer.weight.value, grad_wq, layer.weight.grad);
  return g;
}

namespace {

void bn_check(const Tensor& x, const BatchNormBank::Entry& e) {
  if (x.rank() != 3 || x.dim(1) != static_cast<int>(e.gamma.size())) {
    fail(ErrorKind::dimension, "BatchNorm input channels do not match the bank at width " + std::to_string(e.width));
  }
}

Tensor bn_eval(const Tensor& x, const BatchNormBank& bank, const BatchNormBank::Entry& e, BnCache* cache) {
  const int n = x.dim(0), c = x.dim(1), len = x.dim(2);
  Tensor y({n, c, len});
  std::vector<double> inv(c);
  for (int ch = 0; ch < c; ++ch) inv[ch] = 1.0 / std::sqrt(e.running_var[ch] + bank.eps);
  Tensor xhat;
  if (cache) xhat = Tensor({n, c, len});
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int t = 0; t < len; ++t) {
        const double h = (x.at(b, ch, t) - e.running_mean[ch]) * inv[ch];
        if (cache) xhat.at(b, ch, t) = h;
        y.at(b, ch, t) = e.gamma.value[ch] * h + e.beta.value[ch];
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

}  // namespace

Tensor batchnorm_forward(const Tensor& x, const BatchNormBank& bank, double width) {
  const auto& e = bank.entries[bank.index_of(width)];
  bn_check(x, e);
  return bn_eval(x, bank, e, nullptr);
}

Tensor batchnorm_forward(const Tensor& x, BatchNormBank& bank, double width, Mode mode, BnCache* cache,
                         bool update_stats) {
  const std::size_t idx = bank.index_of(width);
  auto& e = bank.entries[idx];
  bn_check(x, e);
  if (cache) {
    cache->valid = true;
    cache->mode = mode;
    cache->entry = idx;
  }
  if (mode == Mode::eval) return bn_eval(x, bank, e, cache);

  const int n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const double m = static_cast<double>(n) * len;
  std::vector<double> mean(c), var(c), inv(c);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int b = 0; b < n; ++b)
      for (int t = 0; t < len; ++t) s += x.at(b, ch, t);
    const double mu = s / m;
    double v = 0.0;
    for (int b = 0; b < n; ++b)
      for (int t = 0; t < len; ++t) {
        const double d = x.at(b, ch, t) - mu;
        v += d * d;
      }
    mean[ch] = mu;
    var[ch] = v / m;
    inv[ch] = 1.0 / std::sqrt(var[ch] + bank.eps);
  }
  Tensor y({n, c, len});
  Tensor xhat({n, c, len});
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int t = 0; t < len; ++t) {
        const double h = (x.at(b, ch, t) - mean[ch]) * inv[ch];
        xhat.at(b, ch, t) = h;
        y.at(b, ch, t) = e.gamma.value[ch] * h + e.beta.value[ch];
      }
    }
  }
  if (update_stats) {
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    for (int ch = 0; ch < c; ++ch) {
      e.running_mean[ch] = (1.0 - bank.momentum) * e.running_mean[ch] + bank.momentum * mean[ch];
      e.running_var[ch] = (1.0 - bank.momentum) * e.running_var[ch] + bank.momentum * var[ch] * unbias;
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
  }
  return y;
}

Tensor batchnorm_backward(const Tensor& grad_out, const BnCache& cache, BatchNormBank& bank) {
  if (!cache.valid) fail(ErrorKind::state, "BatchNorm backward called without a forward cache");
  auto& e = bank.entries[cache.entry];
  const int n = grad_out.dim(0), c = grad_out.dim(1), len = grad_out.dim(2);
  const double m = static_cast<double>(n) * len;
  Tensor gx({n, c, len});
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double sum_g = 0.0, sum_gh = 0.0;
    for (int b = 0; b < n; ++b)
      for (int t = 0; t < len; ++t) {
        sum_g += grad_out.at(b, ch, t);
        sum_gh += grad_out.at(b, ch, t) * cache.xhat.at(b, ch, t);
      }
    e.gamma.grad[ch] += sum_gh;
    e.beta.grad[ch] += sum_g;
    const double gamma = e.gamma.value[ch];
    const double inv = cache.inv_std[ch];
    for (int b = 0; b < n; ++b)
      for (int t = 0; t < len; ++t) {
        const double g = grad_out.at(b, ch, t);
        if (cache.mode == Mode::eval) {
          gx.at(b, ch, t) = g * gamma * inv;
        } else {
          gx.at(b, ch, t) = gamma * inv / m * (m * g - sum_g - cache.xhat.at(b, ch, t) * sum_gh);
        }
      }
  }
  return gx;
}

Tensor maxpool_forward(const Tensor& x, const MaxPool1DLayer& layer, PoolCache* cache) {
  if (!layer.present) {
    if (cache) {
      cache->valid = true;
      cache->in_length = x.dim(2);
      cache->argmax.clear();
    }
    return x;
  }
  if (layer.s != 2 && layer.s != 4) fail(ErrorKind::config, "pool size must be 2 or 4");
  const int n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const int out_len = len / layer.s;
  if (out_len < 1) fail(ErrorKind::dimension, "pooling input shorter than the pool size");
  Tensor y({n, c, out_len});
  std::vector<int> arg;
  if (cache) arg.resize(y.size());
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int t = 0; t < out_len; ++t) {
        int best = t * layer.s;
        for (int j = 1; j < layer.s; ++j) {
          if (x.at(b, ch, t * layer.s + j) > x.at(b, ch, best)) best = t * layer.s + j;
        }
        y.at(b, ch, t) = x.at(b, ch, best);
        if (cache) arg[(static_cast<std::size_t>(b) * c + ch) * out_len + t] = (b * c + ch) * len + best;
      }
    }
  }
  if (cache) {
    cache->valid = true;
    cache->in_length = len;
    cache->argmax = std::move(arg);
  }
  return y;
}

Tensor maxpool_backward(const Tensor& grad_out, const PoolCache& cache) {
  if (!cache.valid) fail(ErrorKind::state, "maxpool backward called without a forward cache");
  if (cache.argmax.empty()) return grad_out;
  Tensor gx({grad_out.dim(0), grad_out.dim(1), cache.in_length});
  for (std::size_t i = 0; i < grad_out.size(); ++i) gx[cache.argmax[i]] += grad_out[i];
  return gx;
}

Tensor fc_forward(const Tensor& x, const FCLayer& layer, FcCache* cache) {
  const int n = x.dim(0);
  const int f = static_cast<int>(x.size() / std::max(1, n));
  if (f > layer.in_features) fail(ErrorKind::dimension, "FC input has " + std::to_string(f) + " features, layer takes " + std::to_string(layer.in_features));
  std::vector<double> wq(layer.weight.size());
  layer.w_quant.forward(layer.weight.value, wq);
  const int out = layer.out_features;
  Tensor y({n, out});
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < out; ++o) {
      const double* xr = x.data() + static_cast<std::size_t>(b) * f;
      const double* wr = wq.data() + static_cast<std::size_t>(o) * layer.in_features;
      double s = layer.bias.value[o];
      for (int i = 0; i < f; ++i) s += wr[i] * xr[i];
      y[static_cast<std::size_t>(b) * out + o] = s;
    }
  }
  if (cache) {
    cache->valid = true;
    cache->x = Tensor({n, f});
    std::copy(x.data(), x.data() + x.size(), cache->x.data());
    cache->w_q = std::move(wq);
  }
  return y;
}

Tensor fc_backward(const Tensor& grad_out, const FcCache& cache, FCLayer& layer) {
  if (!cache.valid) fail(ErrorKind::state, "FC backward called without a forward cache");
  const int n = cache.x.dim(0), f = cache.x.dim(1), out = layer.out_features;
  const int in = layer.in_features;
  std::vector<double> grad_wq(layer.weight.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    double gb = 0.0;
    double* gw = grad_wq.data() + static_cast<std::size_t>(o) * in;
    for (int b = 0; b < n; ++b) {
      const double g = grad_out[static_cast<std::size_t>(b) * out + o];
      gb += g;
      const double* xr = cache.x.data() + static_cast<std::size_t>(b) * f;
      for (int i = 0; i < f; ++i) gw[i] += g * xr[i];
    }
    layer.bias.grad[o] += gb;
  }
  Tensor gx({n, f});
#pragma omp parallel for schedule(static)
  for (int b = 0; b < n; ++b) {
    double* gr = gx.data() + static_cast<std::size_t>(b) * f;
    for (int o = 0; o < out; ++o) {
      const double g = grad_out[static_cast<std::size_t>(b) * out + o];
      const double* wr = cache.w_q.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < f; ++i) gr[i] += g * wr[i];
    }
  }
  layer.w_quant.backward(layer.weight.value, grad_wq, layer.weight.grad);
  return gx;
}

FoldedBn fold_bn(std::span<const double> gamma, std::span<const double> beta, std::span<const double> mean,
                 std::span<const double> var, double eps) {
  const std::size_t c = gamma.size();
  if (beta.size() != c || mean.size() != c || var.size() != c) fail(ErrorKind::dimension, "BatchNorm parameter sizes differ");
  FoldedBn f;
  f.scale.resize(c);
  f.bias.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double d = var[i] + eps;
    if (!(d > 0.0)) fail(ErrorKind::numeric, "BatchNorm variance + eps is not positive at channel " + std::to_string(i));
    const double inv = 1.0 / std::sqrt(d);
    f.scale[i] = gamma[i] * inv;
    f.bias[i] = beta[i] - gamma[i] * mean[i] * inv;
  }
  return f;
}

}  // namespace shar
