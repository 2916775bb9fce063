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

// Integer-only deployment: BN folding into per-channel requantization, bit-packed weights,
// sub-byte unpack/MAC/repack kernels, XNOR-popcount for binary layers, and the cost model.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shar/model_space.hpp"
#include "shar/network.hpp"
#include "shar/quantize.hpp"

namespace shar {

enum class LayerKind : std::uint8_t { conv = 0, fc = 1 };

struct CompiledLayer {
  LayerKind kind = LayerKind::conv;
  int c_in = 0;   // conv: input channels; fc: input features
  int c_out = 0;  // conv: filters; fc: classes
  int k = 1;
  int in_len = 1;   // conv input length (== conv output length, same padding)
  int out_len = 1;  // after pooling
  bool pool_present = false;
  int pool_size = 1;
  int w_bits = 8;
  int in_bits = 8;   // bit-width of the activations feeding this layer (8 for the network input)
  int out_bits = 8;  // activation bit-width produced (0 for the final FC: raw scores)
  PackedBuffer weights;  // signed grid, full [c_out][c_in][k] (conv) or [c_out][c_in] (fc) layout

  // Derived caches (rebuilt on load, not serialized).
  std::vector<std::int32_t> w_values;
  int words = 0;                      // 64-bit words per channel bitset
  std::vector<std::uint64_t> w_bitsets;  // [c_out][k][words], bit i set <=> w[o][i][j] == +1
  void build_caches();
};

// Requantization of one layer at one width. For output channel c:
//   t = acc * 2^acc_shift + bias[c]           (64-bit)
//   v = t * multiplier[c]
//   q = round_half_away(v / 2^shift[c]) clamped to the activation grid   (bits >= 2)
//   q = +1 iff v >= 2^shift[c], else -1                                   (bits == 1)
// For the final FC layer: score = acc * 2^acc_shift + bias[c], in units of final_scale.
struct BankLayer {
  int active_in = 0;
  int active_out = 0;
  int acc_shift = 0;
  std::vector<std::int32_t> multiplier;
  std::vector<std::int32_t> bias;
  std::vector<std::int8_t> shift;
};

struct WidthBank {
  double width = 1.0;
  double final_scale = 1.0;  // real score = final_scale * integer score
  std::vector<BankLayer> layers;
};

struct CompiledModel {
  ArchConfig arch;
  InputCalibration input;
  std::vector<CompiledLayer> layers;
  std::vector<WidthBank> banks;  // ascending width
  double threshold = 1.0;        // score-margin threshold (adaptive models)

  std::size_t bank_index(double width) const;
  const WidthBank& bank(double width) const { return banks[bank_index(width)]; }
  int n_classes() const { return arch.n_classes; }
  std::size_t input_size() const { return static_cast<std::size_t>(arch.in_channels) * arch.length; }
};

// Lowers a fixed-precision network at the given widths (each must have a BatchNorm bank).
CompiledModel compile(const Network& net, const std::vector<double>& widths = {1.0});

// 8-bit input codes of a batch of real windows, [N][C][L].
std::vector<std::uint8_t> quantize_input(const CompiledModel& cm, const Tensor& x);

struct ForwardTrace {
  std::vector<std::vector<std::int32_t>> acc;    // per layer, pre-requant accumulators [co][L] or [classes]
  std::vector<std::vector<std::int32_t>> codes;  // per conv layer, post-pool activation codes [co][L']
};

// Integer scores [N][classes]. Samples run in parallel; `trace` (single sample only) records
// every layer's accumulators and activation codes.
std::vector<std::int32_t> integer_forward(const CompiledModel& cm, std::span<const std::uint8_t> input, int n,
                                          double width = 1.0, ForwardTrace* trace = nullptr);

// 2*popcount(XNOR(a, b)) - n over the first n bits; bit 1 <=> +1.
std::int32_t binary_dot(const PackedBuffer& a, const PackedBuffer& b, std::size_t n);
std::int32_t binary_dot_words(const std::uint64_t* a, const std::uint64_t* b, std::size_t n);

// ---- requantization arithmetic (shared with the scalar reference) -----------------------------

struct Multiplier {
  std::int32_t m = 0;
  int shift = 0;
};
// m * 2^-shift approximates `real` with |m| in [2^30, 2^31); fails when not representable.
Multiplier quantize_multiplier(double real);
std::int64_t rounding_shift(std::int64_t v, int shift);  // round_half_away(v / 2^shift)

// ---- cost model ---------------------------------------------------------------------------------

// Cycle-units per MAC keyed by the MAC path bit-width max(b_w, b_in); 1 only when both are 1-bit.
struct ThetaTable {
  std::map<int, double> per_bits = {{8, 0.25}, {4, 0.375}, {2, 0.375}, {1, 1.0 / 32.0}};
  double policy_units_per_class = 1.0;

  double theta(int w_bits, int in_bits) const;
  static ThetaTable load(const std::string& path);   // key=value: theta_8, theta_4, theta_2, theta_1, policy_units_per_class
  static ThetaTable parse(const std::string& text);
};

struct LayerCost {
  std::string name;
  std::size_t weight_count = 0;
  int weight_bits = 0;
  std::size_t weight_bytes = 0;
  std::size_t requant_bytes = 0;
  double macs = 0.0;
  double theta = 0.0;
  double cycle_units = 0.0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::size_t memory_bytes = 0;  // packed weights + 8 bytes per output channel per bank
  double macs = 0.0;
  double cycle_units = 0.0;
  std::string to_csv() const;
};

// Cost of executing `arch` at `width`; memory counts requant banks for every width in `banks`.
CostReport estimate_cost(const ArchConfig& arch, double width, const ThetaTable& theta = {},
                         const std::vector<double>& banks = {1.0});
CostReport cost_report(const CompiledModel& cm, double width = 1.0, const ThetaTable& theta = {});

// ---- model file ---------------------------------------------------------------------------------

std::vector<std::uint8_t> serialize(const CompiledModel& cm);
CompiledModel deserialize(std::span<const std::uint8_t> bytes);
void save_compiled(const CompiledModel& cm, const std::string& path);
CompiledModel load_compiled(const std::string& path);
std::string compiled_to_json(const CompiledModel& cm);

}  // namespace shar
