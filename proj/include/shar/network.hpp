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

#include <cstdint>
#include <string>
#include <vector>

#include "shar/layers.hpp"
#include "shar/model_space.hpp"

namespace shar {

// Static 8-bit affine quantization of the network input: real = scale * (code - zero_point).
struct InputCalibration {
  double scale = 0.0;  // 0 => input is not quantized
  int zero_point = 0;

  bool enabled() const { return scale > 0.0; }
  // Range is widened to contain zero so that zero padding is exactly representable.
  static InputCalibration from_range(double lo, double hi);
  std::uint8_t code(double x) const;
  double fake_quant(double x) const;
};

// Initial activation clip: 8.0, except 2.0 for 1- and 2-bit activations whose coarse grid would
// otherwise map almost every normalized activation onto a single level.
double initial_act_alpha(int bits);

struct ConvBlock {
  Conv1DLayer conv;
  BatchNormBank bn;
  MaxPool1DLayer pool;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double holdout_score = 0.0;
  double lr = 0.0;
};

struct NetCache {
  Tensor input;  // after input quantization
  std::vector<ConvCache> conv;
  std::vector<BnCache> bn;
  std::vector<Tensor> pre_act;  // BatchNorm output, input of the activation quantizer
  std::vector<PoolCache> pool;
  FcCache fc;
  std::vector<int> block_lengths;
  double width = 1.0;
};

// Float parameters, quantizer states and per-width BatchNorm banks of one network.
class Network {
 public:
  ArchConfig arch;
  InputCalibration input;
  std::vector<ConvBlock> blocks;
  FCLayer fc;
  std::vector<EpochRecord> history;

  // Kaiming-uniform (fan-in) weights, zero biases, gamma=1/beta=0, initial_act_alpha,
  // weight alpha = max|w|; BatchNorm banks for every supported width.
  static Network instantiate(const ArchConfig& cfg, std::uint64_t seed);

  // x: [N, in_channels, length] real-valued windows. Returns [N, n_classes] scores.
  // Train mode uses batch statistics and updates running statistics of `width`.
  Tensor forward(const Tensor& x, double width, Mode mode, NetCache* cache = nullptr);
  Tensor predict(const Tensor& x, double width = 1.0) const;
  // Accumulates parameter gradients from d(loss)/d(scores).
  void backward(const NetCache& cache, const Tensor& grad_scores);

  std::vector<Param*> params();
  std::vector<QuantSite*> sites();
  std::vector<const QuantSite*> sites() const;
  void zero_grad();
  // Sets arch bits from the (single-branch) sites.
  void sync_arch_bits();
};

std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace shar
