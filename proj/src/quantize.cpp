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

#include "shar/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shar/error.hpp"

namespace shar {

bool is_supported_bits(int bits) { return bits == 1 || bits == 2 || bits == 4 || bits == 8; }

double round_half_away(double x) { return std::round(x); }

void ActQuantizer::validate() const {
  if (!is_supported_bits(bits)) fail(ErrorKind::config, "unsupported activation bit-width " + std::to_string(bits));
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail(ErrorKind::numeric, "activation clip alpha must be positive");
}

double ActQuantizer::scale() const {
  if (bits == 1) return alpha / 2.0;
  return alpha / static_cast<double>((1 << bits) - 1);
}

void WeightQuantizer::validate() const {
  if (!is_supported_bits(bits)) fail(ErrorKind::config, "unsupported weight bit-width " + std::to_string(bits));
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail(ErrorKind::numeric, "weight clip alpha must be positive");
}

double WeightQuantizer::scale() const {
  if (bits == 1) return alpha;
  return alpha / static_cast<double>(1 << (bits - 1));
}

double pact_clip(double x, double alpha) { return std::clamp(x, 0.0, alpha); }

QuantGrad pact_clip_grad(double x, double alpha) {
  if (x >= alpha) return {0.0, 1.0};
  if (x > 0.0) return {1.0, 0.0};
  return {0.0, 0.0};
}

int act_code(double x, const ActQuantizer& q) {
  const double c = pact_clip(x, q.alpha);
  if (q.bits == 1) return c - q.alpha / 2.0 >= 0.0 ? 1 : -1;
  const int n = (1 << q.bits) - 1;
  return static_cast<int>(std::clamp(round_half_away(c * n / q.alpha), 0.0, static_cast<double>(n)));
}

double fake_quant_act(double x, const ActQuantizer& q) {
  if (q.bits == 0) return pact_clip(x, q.alpha);
  return act_code(x, q) * q.scale();
}

QuantGrad fake_quant_act_grad(double x, const ActQuantizer& q) {
  if (q.bits == 1) {
    const double dx = (x > 0.0 && x < q.alpha) ? 1.0 : 0.0;
    return {dx, act_code(x, q) / 2.0};
  }
  return pact_clip_grad(x, q.alpha);
}

int weight_code(double w, const WeightQuantizer& q) {
  if (q.bits == 1) return w >= 0.0 ? 1 : -1;
  const double u = round_half_away(w / q.scale());
  return static_cast<int>(std::clamp(u, static_cast<double>(q.min_code()), static_cast<double>(q.max_code())));
}

double fake_quant_weight(double w, const WeightQuantizer& q) {
  if (q.bits == 0) return w;
  return weight_code(w, q) * q.scale();
}

QuantGrad fake_quant_weight_grad(double w, const WeightQuantizer& q) {
  if (q.bits == 0) return {1.0, 0.0};
  if (q.bits == 1) {
    const double dx = std::abs(w) <= q.alpha ? 1.0 : 0.0;
    return {dx, w >= 0.0 ? 1.0 : -1.0};
  }
  const double levels = static_cast<double>(1 << (q.bits - 1));
  const double u = w / q.scale();
  if (u < q.min_code()) return {0.0, q.min_code() / levels};
  if (u > q.max_code()) return {0.0, q.max_code() / levels};
  return {1.0, 0.0};
}

std::vector<double> fake_quant_act(std::span<const double> x, const ActQuantizer& q) {
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [&](double v) { return fake_quant_act(v, q); });
  return y;
}

std::vector<double> fake_quant_weight(std::span<const double> w, const WeightQuantizer& q) {
  std::vector<double> y(w.size());
  std::transform(w.begin(), w.end(), y.begin(), [&](double v) { return fake_quant_weight(v, q); });
  return y;
}

PackedBuffer pack(std::span<const std::uint32_t> values, int bits) {
  if (!is_supported_bits(bits)) fail(ErrorKind::range, "unsupported packing bit-width " + std::to_string(bits));
  PackedBuffer buf;
  buf.bits = bits;
  buf.count = values.size();
  buf.bytes.assign(PackedBuffer::byte_length(values.size(), bits), 0);
  const std::uint32_t limit = 1u << bits;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= limit) {
      fail(ErrorKind::range, "value " + std::to_string(values[i]) + " at index " + std::to_string(i) +
                                 " does not fit in " + std::to_string(bits) + " bits");
    }
    const std::size_t bit = i * bits;
    buf.bytes[bit / 8] |= static_cast<std::uint8_t>(values[i] << (bit % 8));
  }
  return buf;
}

std::uint32_t packed_at(const PackedBuffer& buf, std::size_t i) {
  const std::size_t bit = i * buf.bits;
  return (buf.bytes[bit / 8] >> (bit % 8)) & ((1u << buf.bits) - 1u);
}

std::vector<std::uint32_t> unpack(const PackedBuffer& buf) {
  if (!is_supported_bits(buf.bits)) fail(ErrorKind::format, "packed buffer has unsupported bit-width");
  if (buf.bytes.size() != PackedBuffer::byte_length(buf.count, buf.bits)) {
    fail(ErrorKind::format, "packed buffer holds " + std::to_string(buf.bytes.size()) + " bytes, expected " +
                                std::to_string(PackedBuffer::byte_length(buf.count, buf.bits)) + " for " +
                                std::to_string(buf.count) + " x " + std::to_string(buf.bits) + "-bit values");
  }
  std::vector<std::uint32_t> out(buf.count);
  for (std::size_t i = 0; i < buf.count; ++i) out[i] = packed_at(buf, i);
  return out;
}

std::uint32_t encode_value(std::int32_t v, int bits, Grid grid) {
  if (bits == 1) {
    if (v != 1 && v != -1) fail(ErrorKind::range, "binary value must be -1 or +1, got " + std::to_string(v));
    return v > 0 ? 1u : 0u;
  }
  const std::int32_t offset = grid == Grid::signed_weight ? (1 << (bits - 1)) : 0;
  const std::int64_t code = static_cast<std::int64_t>(v) + offset;
  if (code < 0 || code >= (std::int64_t{1} << bits)) {
    fail(ErrorKind::range, "value " + std::to_string(v) + " outside the " + std::to_string(bits) + "-bit grid");
  }
  return static_cast<std::uint32_t>(code);
}

std::int32_t decode_value(std::uint32_t code, int bits, Grid grid) {
  if (bits == 1) return code ? 1 : -1;
  const std::int32_t offset = grid == Grid::signed_weight ? (1 << (bits - 1)) : 0;
  return static_cast<std::int32_t>(code) - offset;
}

PackedBuffer pack_values(std::span<const std::int32_t> values, int bits, Grid grid) {
  std::vector<std::uint32_t> codes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    try {
      codes[i] = encode_value(values[i], bits, grid);
    } catch (const Error& e) {
      fail(ErrorKind::range, std::string(e.what()) + " at index " + std::to_string(i));
    }
  }
  return pack(codes, bits);
}

std::vector<std::int32_t> unpack_values(const PackedBuffer& buf, Grid grid) {
  const auto codes = unpack(buf);
  std::vector<std::int32_t> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = decode_value(codes[i], buf.bits, grid);
  return out;
}

}  // namespace shar
