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

#pragma once

// Float / fake-quantized layers of the 1D CNN templates. Activations are [batch, channels, length].
// Every layer can run at a width fraction: only the first ceil(c * width) channels are active.

#include <span>
#include <vector>

#include "shar/quant_site.hpp"
#include "shar/tensor.hpp"

namespace shar {

enum class Mode { train, eval };

inline const std::vector<double> kSupportedWidths = {0.25, 0.5, 1.0};

int active_channels(int channels, double width);

struct Conv1DLayer {
  int c_in = 1;
  int c_out = 1;
  int k = 1;
  Param weight;  // [c_out][c_in][k]
  Param bias;    // [c_out]
  QuantSite w_quant;
  QuantSite a_quant;  // applied to this layer's output after BatchNorm (by the network)

  Conv1DLayer() = default;
  Conv1DLayer(int c_in, int c_out, int k);
};

struct BatchNormBank {
  struct Entry {
    double width = 1.0;
    Param gamma;
    Param beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
  };

  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  std::vector<Entry> entries;  // one per supported width, sized to its active channels

  BatchNormBank() = default;
  BatchNormBank(int channels, const std::vector<double>& widths);
  std::size_t index_of(double width) const;
};

struct MaxPool1DLayer {
  bool present = true;
  int s = 2;
};

struct FCLayer {
  int in_features = 1;
  int out_features = 1;
  Param weight;  // [out][in]
  Param bias;    // [out]
  QuantSite w_quant;

  FCLayer() = default;
  FCLayer(int in_features, int out_features);
};

// ---- raw float kernels (OpenMP over independent outputs) -------------------------------

// Same-padded cross-correlation. x: [N, ci_active, L]; weights use the full [c_out][c_in][k]
// layout; only the first co_active filters and the first ci_active input channels are read.
Tensor conv1d_kernel(const Tensor& x, std::span<const double> w, std::span<const double> bias, int c_in, int k,
                     int co_active);
// Accumulates into grad_w / grad_b (full layouts); writes grad_x if non-null.
void conv1d_kernel_backward(const Tensor& x, std::span<const double> w, int c_in, int k, const Tensor& grad_out,
                            Tensor* grad_x, std::span<double> grad_w, std::span<double> grad_b);

// ---- layer operations -------------------------------------------------------------------

struct ConvCache {
  bool valid = false;
  Tensor x;
  std::vector<double> w_q;
  int co_active = 0;
};

// Fake-quantizes the weights with layer.w_quant, then convolves.
Tensor conv1d_forward(const Tensor& x, const Conv1DLayer& layer, double width, ConvCache* cache = nullptr);

struct ConvGrads {
  Tensor grad_x;
};
// Accumulates weight, bias and weight-quantizer gradients into the layer.
ConvGrads conv1d_backward(const Tensor& grad_out, const ConvCache& cache, Conv1DLayer& layer);

struct BnCache {
  bool valid = false;
  Mode mode = Mode::eval;
  std::size_t entry = 0;
  Tensor xhat;
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
};

// Train mode normalizes by batch statistics and, unless update_stats is false, moves the
// running statistics of the selected width only.
Tensor batchnorm_forward(const Tensor& x, BatchNormBank& bank, double width, Mode mode, BnCache* cache = nullptr,
                         bool update_stats = true);
Tensor batchnorm_forward(const Tensor& x, const BatchNormBank& bank, double width);  // eval
Tensor batchnorm_backward(const Tensor& grad_out, const BnCache& cache, BatchNormBank& bank);

struct PoolCache {
  bool valid = false;
  int in_length = 0;
  std::vector<int> argmax;  // flat input index per output element
};

Tensor maxpool_forward(const Tensor& x, const MaxPool1DLayer& layer, PoolCache* cache = nullptr);
Tensor maxpool_backward(const Tensor& grad_out, const PoolCache& cache);

struct FcCache {
  bool valid = false;
  Tensor x;  // [N, F_active]
  std::vector<double> w_q;
};

// x: [N, C, L] or [N, F]; flattened channel-major. Uses the first F_active input columns.
Tensor fc_forward(const Tensor& x, const FCLayer& layer, FcCache* cache = nullptr);
Tensor fc_backward(const Tensor& grad_out, const FcCache& cache, FCLayer& layer);

struct FoldedBn {
  std::vector<double> scale;
  std::vector<double> bias;
};

// y = scale * z + bias reproduces BatchNorm(z) in eval mode.
FoldedBn fold_bn(std::span<const double> gamma, std::span<const double> beta, std::span<const double> mean,
                 std::span<const double> var, double eps);

}  // namespace shar
