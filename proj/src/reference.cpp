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

#include "shar/reference.hpp"

#include "shar/error.hpp"

namespace shar {

namespace {

// Field i of a packed buffer, one bit at a time.
std::uint32_t field(const std::vector<std::uint8_t>& bytes, int bits, std::size_t i) {
  std::uint32_t v = 0;
  for (int b = 0; b < bits; ++b) {
    const std::size_t g = i * bits + b;
    if ((bytes[g / 8] >> (g % 8)) & 1u) v |= 1u << b;
  }
  return v;
}

std::int64_t weight_at(const CompiledLayer& l, std::size_t i) {
  const std::uint32_t f = field(l.weights.bytes, l.w_bits, i);
  if (l.w_bits == 1) return f ? 1 : -1;
  return static_cast<std::int64_t>(f) - (std::int64_t{1} << (l.w_bits - 1));
}

std::int64_t requant(std::int64_t acc, const BankLayer& bl, int c, int bits) {
  const __int128 t = static_cast<__int128>(acc) * (static_cast<__int128>(1) << bl.acc_shift) + bl.bias[c];
  const __int128 v = t * bl.multiplier[c];
  const __int128 one = static_cast<__int128>(1) << bl.shift[c];
  if (bits == 1) return v >= one ? 1 : -1;
  __int128 q;
  if (bl.shift[c] == 0) {
    q = v;
  } else {
    const __int128 half = one / 2;
    q = v >= 0 ? (v + half) / one : -((-v + half) / one);
  }
  const __int128 hi = (1 << bits) - 1;
  if (q < 0) q = 0;
  if (q > hi) q = hi;
  return static_cast<std::int64_t>(q);
}

}  // namespace

ReferenceResult reference_forward(const CompiledModel& cm, std::span<const std::uint8_t> sample, double width) {
  if (sample.size() != cm.input_size()) fail(ErrorKind::dimension, "reference input size mismatch");
  const WidthBank& bank = cm.bank(width);
  ReferenceResult r;
  int len = cm.arch.length;
  std::vector<std::int64_t> x(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) x[i] = static_cast<std::int64_t>(sample[i]) - cm.input.zero_point;

  for (std::size_t li = 0; li < cm.layers.size(); ++li) {
    const CompiledLayer& l = cm.layers[li];
    const BankLayer& bl = bank.layers[li];
    if (l.kind == LayerKind::fc) {
      std::vector<std::int64_t> acc(bl.active_out, 0);
      for (int o = 0; o < bl.active_out; ++o) {
        for (int f = 0; f < bl.active_in; ++f) acc[o] += weight_at(l, static_cast<std::size_t>(o) * l.c_in + f) * x[f];
        r.scores.push_back(acc[o] * (std::int64_t{1} << bl.acc_shift) + bl.bias[o]);
      }
      r.acc.push_back(acc);
      break;
    }
    const int pad = l.k / 2;
    std::vector<std::int64_t> acc(static_cast<std::size_t>(bl.active_out) * len, 0);
    for (int o = 0; o < bl.active_out; ++o) {
      for (int t = 0; t < len; ++t) {
        std::int64_t s = 0;
        for (int i = 0; i < bl.active_in; ++i) {
          for (int j = 0; j < l.k; ++j) {
            const int p = t + j - pad;
            if (p < 0 || p >= len) continue;
            s += weight_at(l, (static_cast<std::size_t>(o) * l.c_in + i) * l.k + j) * x[static_cast<std::size_t>(i) * len + p];
          }
        }
        acc[static_cast<std::size_t>(o) * len + t] = s;
      }
    }
    r.acc.push_back(acc);
    const int s = l.pool_present ? l.pool_size : 1;
    const int out_len = len / s;
    std::vector<std::int64_t> y(static_cast<std::size_t>(bl.active_out) * out_len);
    for (int o = 0; o < bl.active_out; ++o) {
      for (int t = 0; t < out_len; ++t) {
        std::int64_t best = requant(acc[static_cast<std::size_t>(o) * len + t * s], bl, o, l.out_bits);
        for (int q = 1; q < s; ++q) {
          const std::int64_t c = requant(acc[static_cast<std::size_t>(o) * len + t * s + q], bl, o, l.out_bits);
          if (c > best) best = c;
        }
        y[static_cast<std::size_t>(o) * out_len + t] = best;
      }
    }
    x = std::move(y);
    len = out_len;
  }
  return r;
}

}  // namespace shar
