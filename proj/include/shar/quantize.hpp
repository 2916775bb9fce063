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

// Fake quantization (training) and integer codecs (deployment).
//
// Integer grids:
//   activations, bits >= 2 : codes 0 .. 2^b-1,          value = code * alpha / (2^b-1)
//   activations, bits == 1 : codes {-1,+1},             value = code * alpha / 2
//   weights,     bits >= 2 : codes -2^(b-1) .. 2^(b-1)-1, value = code * alpha_w / 2^(b-1)
//   weights,     bits == 1 : codes {-1,+1},             value = code * alpha_w
// A bit-width of 0 means "float": activations are only clipped to [0, alpha], weights pass through.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace shar {

bool is_supported_bits(int bits);  // {1,2,4,8}

// Round half away from zero. Used everywhere a value is rounded onto a grid.
double round_half_away(double x);

struct ActQuantizer {
  int bits = 8;
  double alpha = 8.0;

  void validate() const;
  double scale() const;  // real value of one code step
  int min_code() const { return bits == 1 ? -1 : 0; }
  int max_code() const { return bits == 1 ? 1 : (1 << bits) - 1; }
};

struct WeightQuantizer {
  int bits = 8;
  double alpha = 1.0;

  void validate() const;
  double scale() const;
  int min_code() const { return bits == 1 ? -1 : -(1 << (bits - 1)); }
  int max_code() const { return bits == 1 ? 1 : (1 << (bits - 1)) - 1; }
};

// Local derivatives of a quantizer output with respect to its input and its clip parameter.
struct QuantGrad {
  double dx = 0.0;
  double dalpha = 0.0;
};

// PACT clipping stage: clip(x, 0, alpha); d/dalpha is 1 exactly where x >= alpha.
double pact_clip(double x, double alpha);
QuantGrad pact_clip_grad(double x, double alpha);

int act_code(double x, const ActQuantizer& q);
double fake_quant_act(double x, const ActQuantizer& q);
// Straight-through on rounding; alpha receives gradient only from the clipped region
// (bits >= 2) or from the binary level magnitude (bits == 1).
QuantGrad fake_quant_act_grad(double x, const ActQuantizer& q);

int weight_code(double w, const WeightQuantizer& q);
double fake_quant_weight(double w, const WeightQuantizer& q);
QuantGrad fake_quant_weight_grad(double w, const WeightQuantizer& q);

std::vector<double> fake_quant_act(std::span<const double> x, const ActQuantizer& q);
std::vector<double> fake_quant_weight(std::span<const double> w, const WeightQuantizer& q);

// Bit-packed storage of unsigned codes. Element i occupies bits [(i*bits) mod 8, ...) of
// byte floor(i*bits/8); padding bits of the last byte are zero.
struct PackedBuffer {
  int bits = 8;
  std::size_t count = 0;
  std::vector<std::uint8_t> bytes;

  static std::size_t byte_length(std::size_t count, int bits) { return (count * bits + 7) / 8; }
  friend bool operator==(const PackedBuffer&, const PackedBuffer&) = default;
};

PackedBuffer pack(std::span<const std::uint32_t> values, int bits);
std::vector<std::uint32_t> unpack(const PackedBuffer& buf);
// Random access into a packed buffer without unpacking it.
std::uint32_t packed_at(const PackedBuffer& buf, std::size_t i);

// Which integer grid a packed buffer stores.
enum class Grid { unsigned_act, signed_weight };

// Maps grid values onto unsigned storage codes: signed values are offset by 2^(b-1);
// 1-bit values {-1,+1} map to bits {0,1} on either grid.
std::uint32_t encode_value(std::int32_t v, int bits, Grid grid);
std::int32_t decode_value(std::uint32_t code, int bits, Grid grid);

PackedBuffer pack_values(std::span<const std::int32_t> values, int bits, Grid grid);
std::vector<std::int32_t> unpack_values(const PackedBuffer& buf, Grid grid);

}  // namespace shar
