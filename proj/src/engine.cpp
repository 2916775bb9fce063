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

#include "shar/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shar/error.hpp"

namespace shar {

void CompiledLayer::build_caches() {
  const std::size_t count = static_cast<std::size_t>(c_out) * c_in * k;
  if (weights.count != count || weights.bits != w_bits) fail(ErrorKind::format, "weight buffer does not match its layer shape");
  w_values = unpack_values(weights, Grid::signed_weight);
  w_bitsets.clear();
  words = (c_in + 63) / 64;
  if (w_bits != 1) return;
  w_bitsets.assign(static_cast<std::size_t>(c_out) * k * words, 0);
  for (int o = 0; o < c_out; ++o) {
    for (int i = 0; i < c_in; ++i) {
      for (int j = 0; j < k; ++j) {
        if (w_values[(static_cast<std::size_t>(o) * c_in + i) * k + j] > 0) {
          w_bitsets[(static_cast<std::size_t>(o) * k + j) * words + i / 64] |= std::uint64_t{1} << (i % 64);
        }
      }
    }
  }
}

std::size_t CompiledModel::bank_index(double width) const {
  for (std::size_t i = 0; i < banks.size(); ++i) {
    if (banks[i].width == width) return i;
  }
  fail(ErrorKind::config, "compiled model has no bank for width " + std::to_string(width));
}

// ---- requantization arithmetic --------------------------------------------------------------------

Multiplier quantize_multiplier(double real) {
  if (!std::isfinite(real) || real == 0.0) fail(ErrorKind::numeric, "scale not representable: zero or non-finite multiplier");
  int e = 0;
  const double mant = std::frexp(std::abs(real), &e);
  std::int64_t m = std::llround(mant * 2147483648.0);
  if (m == (std::int64_t{1} << 31)) {
    m >>= 1;
    ++e;
  }
  const int shift = 31 - e;
  if (shift < 0 || shift > 62) fail(ErrorKind::numeric, "scale not representable: multiplier out of fixed-point range");
  return {static_cast<std::int32_t>(real < 0 ? -m : m), shift};
}

std::int64_t rounding_shift(std::int64_t v, int shift) {
  if (shift == 0) return v;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  return v >= 0 ? (v + half) >> shift : -((-v + half) >> shift);
}

namespace {

constexpr int kMaxScoreShift = 8;

int max_abs_weight_code(int bits) { return bits == 1 ? 1 : 1 << (bits - 1); }
int max_abs_act_code(int bits) { return bits == 1 ? 1 : (1 << bits) - 1; }

double act_scale(const QuantSite& site) { return ActQuantizer{site.fixed_bits(), site.alpha.value.front()}.scale(); }
double weight_scale(const QuantSite& site) { return WeightQuantizer{site.fixed_bits(), site.alpha.value.front()}.scale(); }

PackedBuffer pack_weights(std::span<const double> w, const QuantSite& site) {
  const WeightQuantizer q{site.fixed_bits(), site.alpha.value.front()};
  std::vector<std::int32_t> codes(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) codes[i] = weight_code(w[i], q);
  return pack_values(codes, q.bits, Grid::signed_weight);
}

// Chooses the largest accumulator pre-shift for which every channel's bias and multiplier fit.
BankLayer requant_layer(const std::string& name, std::span<const double> m_real, std::span<const double> b_real,
                        double acc_bound) {
  BankLayer bl;
  for (int f = 24; f >= 0; --f) {
    const double two_f = std::ldexp(1.0, f);
    if (acc_bound * two_f >= 1073741824.0) continue;
    bool ok = true;
    std::vector<std::int32_t> mult(m_real.size()), bias(m_real.size());
    std::vector<std::int8_t> shift(m_real.size());
    for (std::size_t c = 0; c < m_real.size() && ok; ++c) {
      if (m_real[c] == 0.0 || !std::isfinite(m_real[c])) {
        fail(ErrorKind::numeric, "scale not representable: " + name + " channel " + std::to_string(c) + " has a zero scale");
      }
      const double b = std::round(b_real[c] / m_real[c] * two_f);
      if (!(std::abs(b) < 1073741824.0)) {
        ok = false;
        break;
      }
      const double mr = m_real[c] / two_f;
      int e = 0;
      std::frexp(std::abs(mr), &e);
      if (31 - e < 0 || 31 - e > 62) {
        ok = false;
        break;
      }
      const Multiplier q = quantize_multiplier(mr);
      mult[c] = q.m;
      shift[c] = static_cast<std::int8_t>(q.shift);
      bias[c] = static_cast<std::int32_t>(b);
    }
    if (!ok) continue;
    bl.acc_shift = f;
    bl.multiplier = std::move(mult);
    bl.bias = std::move(bias);
    bl.shift = std::move(shift);
    return bl;
  }
  fail(ErrorKind::numeric, "scale not representable: " + name + " requantization does not fit 32-bit fixed point");
}

}  // namespace

CompiledModel compile(const Network& net, const std::vector<double>& widths) {
  const ArchConfig& arch = net.arch;
  arch.validate();
  if (widths.empty()) fail(ErrorKind::config, "at least one width is required");
  for (const QuantSite* s : net.sites()) {
    if (s->is_mixed()) fail(ErrorKind::state, "cannot compile a mixed-precision site; extract fixed bit-widths first");
    if (s->fixed_bits() == 0) fail(ErrorKind::state, "cannot compile a float (unquantized) tensor");
  }
  if (!net.input.enabled() || arch.input_bits != 8) fail(ErrorKind::state, "network input is not calibrated to 8 bits");

  CompiledModel cm;
  cm.arch = arch;
  cm.input = net.input;
  const auto lens = arch.block_lengths();
  int c_in = arch.in_channels;
  int len = arch.length;
  int in_bits = 8;
  for (int l = 0; l < arch.conv_count(); ++l) {
    const auto& b = net.blocks[l];
    CompiledLayer cl;
    cl.kind = LayerKind::conv;
    cl.c_in = c_in;
    cl.c_out = b.conv.c_out;
    cl.k = b.conv.k;
    cl.in_len = len;
    cl.out_len = lens[l];
    cl.pool_present = b.pool.present;
    cl.pool_size = b.pool.present ? b.pool.s : 1;
    cl.w_bits = b.conv.w_quant.fixed_bits();
    cl.in_bits = in_bits;
    cl.out_bits = b.conv.a_quant.fixed_bits();
    cl.weights = pack_weights(b.conv.weight.value, b.conv.w_quant);
    cl.build_caches();
    cm.layers.push_back(std::move(cl));
    c_in = b.conv.c_out;
    len = lens[l];
    in_bits = b.conv.a_quant.fixed_bits();
  }
  CompiledLayer fc;
  fc.kind = LayerKind::fc;
  fc.c_in = net.fc.in_features;
  fc.c_out = net.fc.out_features;
  fc.in_len = fc.out_len = 1;
  fc.w_bits = net.fc.w_quant.fixed_bits();
  fc.in_bits = in_bits;
  fc.out_bits = 0;
  fc.weights = pack_weights(net.fc.weight.value, net.fc.w_quant);
  fc.build_caches();
  cm.layers.push_back(std::move(fc));

  std::vector<double> sorted = widths;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (double w : sorted) {
    WidthBank bank;
    bank.width = w;
    double s_in = net.input.scale;
    int ci = arch.in_channels;
    for (int l = 0; l < arch.conv_count(); ++l) {
      const auto& b = net.blocks[l];
      const auto& cl = cm.layers[l];
      const int co = active_channels(b.conv.c_out, w);
      const auto& e = b.bn.entries[b.bn.index_of(w)];
      const FoldedBn fb = fold_bn(e.gamma.value, e.beta.value, e.running_mean, e.running_var, b.bn.eps);
      const double s_w = weight_scale(b.conv.w_quant);
      const double s_out = act_scale(b.conv.a_quant);
      std::vector<double> m(co), bias(co);
      for (int c = 0; c < co; ++c) {
        m[c] = fb.scale[c] * s_w * s_in / s_out;
        bias[c] = (fb.scale[c] * b.conv.bias.value[c] + fb.bias[c]) / s_out;
      }
      const double in_max = l == 0 ? 255.0 : max_abs_act_code(cl.in_bits);
      const double bound = static_cast<double>(ci) * cl.k * max_abs_weight_code(cl.w_bits) * in_max;
      BankLayer bl = requant_layer("conv" + std::to_string(l + 1), m, bias, bound);
      bl.active_in = ci;
      bl.active_out = co;
      bank.layers.push_back(std::move(bl));
      s_in = s_out;
      ci = co;
    }
    const int f_active = ci * (arch.conv_count() ? arch.block_lengths().back() : arch.length);
    const double s_w = weight_scale(net.fc.w_quant);
    // Scores carry extra fractional bits so the rounded bias rarely decides a close argmax.
    const double in_max = arch.conv_count() ? max_abs_act_code(arch.act_bits.back()) : 255.0;
    const double bound = static_cast<double>(f_active) * max_abs_weight_code(arch.weight_bits.back()) * in_max;
    double max_bias = 0.0;
    for (double v : net.fc.bias.value) max_bias = std::max(max_bias, std::abs(v) / (s_w * s_in));
    int f = kMaxScoreShift;
    while (f > 0 && std::ldexp(bound + max_bias + 1.0, f) >= 2147483647.0) --f;
    bank.final_scale = std::ldexp(s_w * s_in, -f);
    BankLayer bl;
    bl.active_in = f_active;
    bl.active_out = net.fc.out_features;
    bl.acc_shift = f;
    for (int c = 0; c < net.fc.out_features; ++c) {
      const double b = std::round(net.fc.bias.value[c] / bank.final_scale);
      if (!(std::abs(b) + std::ldexp(bound, f) < 2147483647.0)) {
        fail(ErrorKind::numeric, "scale not representable: fc bias overflows 32 bits");
      }
      bl.bias.push_back(static_cast<std::int32_t>(b));
    }
    bank.layers.push_back(std::move(bl));
    cm.banks.push_back(std::move(bank));
  }
  return cm;
}

std::vector<std::uint8_t> quantize_input(const CompiledModel& cm, const Tensor& x) {
  if (x.rank() != 3 || x.dim(1) != cm.arch.in_channels || x.dim(2) != cm.arch.length) {
    fail(ErrorKind::dimension, "input windows do not match the compiled model's input shape");
  }
  std::vector<std::uint8_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = cm.input.code(x[i]);
  return out;
}

// ---- kernels ------------------------------------------------------------------------------------

std::int32_t binary_dot_words(const std::uint64_t* a, const std::uint64_t* b, std::size_t n) {
  std::size_t pc = 0;
  const std::size_t full = n / 64;
  for (std::size_t w = 0; w < full; ++w) pc += std::popcount(~(a[w] ^ b[w]));
  if (const std::size_t rem = n % 64) {
    const std::uint64_t mask = (std::uint64_t{1} << rem) - 1;
    pc += std::popcount(~(a[full] ^ b[full]) & mask);
  }
  return static_cast<std::int32_t>(2 * pc) - static_cast<std::int32_t>(n);
}

std::int32_t binary_dot(const PackedBuffer& a, const PackedBuffer& b, std::size_t n) {
  if (a.bits != 1 || b.bits != 1) fail(ErrorKind::dimension, "binary_dot needs 1-bit buffers");
  if (a.count != b.count || n > a.count) fail(ErrorKind::dimension, "binary_dot operand lengths differ");
  const std::size_t words = (n + 63) / 64;
  std::vector<std::uint64_t> wa(words, 0), wb(words, 0);
  for (std::size_t i = 0; i < (n + 7) / 8; ++i) {
    wa[i / 8] |= static_cast<std::uint64_t>(a.bytes[i]) << (8 * (i % 8));
    wb[i / 8] |= static_cast<std::uint64_t>(b.bytes[i]) << (8 * (i % 8));
  }
  return binary_dot_words(wa.data(), wb.data(), n);
}

namespace {

struct Activation {
  int channels = 0;
  int length = 0;
  PackedBuffer codes;  // [channels][length] on the unsigned activation grid
};

std::int32_t requant(std::int32_t acc, const BankLayer& bl, int c, int bits) {
  const std::int64_t t = (static_cast<std::int64_t>(acc) << bl.acc_shift) + bl.bias[c];
  const std::int64_t v = t * bl.multiplier[c];
  const int sh = bl.shift[c];
  if (bits == 1) return v >= (std::int64_t{1} << sh) ? 1 : -1;
  const std::int64_t q = rounding_shift(v, sh);
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(q, 0, (1 << bits) - 1));
}

// Decoded input values of a layer, [channels][length].
std::vector<std::int32_t> decode_input(const Activation& a, int first_layer_zero_point, bool first) {
  if (first) {
    std::vector<std::int32_t> v(a.codes.count);
    const auto raw = unpack(a.codes);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::int32_t>(raw[i]) - first_layer_zero_point;
    return v;
  }
  return unpack_values(a.codes, Grid::unsigned_act);
}

// Per-position channel bitsets of a 1-bit activation, [length][words].
std::vector<std::uint64_t> position_bitsets(const Activation& a, int words) {
  std::vector<std::uint64_t> bits(static_cast<std::size_t>(a.length) * words, 0);
  for (int c = 0; c < a.channels; ++c) {
    for (int t = 0; t < a.length; ++t) {
      if (packed_at(a.codes, static_cast<std::size_t>(c) * a.length + t)) {
        bits[static_cast<std::size_t>(t) * words + c / 64] |= std::uint64_t{1} << (c % 64);
      }
    }
  }
  return bits;
}

std::vector<std::int32_t> conv_acc(const CompiledLayer& cl, const BankLayer& bl, const Activation& in, bool first,
                                   int zero_point) {
  const int ci = bl.active_in, co = bl.active_out, len = cl.in_len, k = cl.k, pad = k / 2;
  std::vector<std::int32_t> acc(static_cast<std::size_t>(co) * len, 0);
  if (cl.w_bits == 1 && cl.in_bits == 1 && !first) {
    const auto x = position_bitsets(in, cl.words);
    for (int o = 0; o < co; ++o) {
      for (int t = 0; t < len; ++t) {
        std::int32_t s = 0;
        for (int j = 0; j < k; ++j) {
          const int p = t + j - pad;
          if (p < 0 || p >= len) continue;
          s += binary_dot_words(&x[static_cast<std::size_t>(p) * cl.words],
                                &cl.w_bitsets[(static_cast<std::size_t>(o) * k + j) * cl.words], ci);
        }
        acc[static_cast<std::size_t>(o) * len + t] = s;
      }
    }
    return acc;
  }
  const auto x = decode_input(in, zero_point, first);
  for (int o = 0; o < co; ++o) {
    std::int32_t* out = &acc[static_cast<std::size_t>(o) * len];
    for (int i = 0; i < ci; ++i) {
      const std::int32_t* xi = &x[static_cast<std::size_t>(i) * len];
      const std::int32_t* w = &cl.w_values[(static_cast<std::size_t>(o) * cl.c_in + i) * k];
      for (int j = 0; j < k; ++j) {
        const int shift = j - pad;
        const int t0 = std::max(0, -shift), t1 = std::min(len, len - shift);
        const std::int32_t wv = w[j];
        for (int t = t0; t < t1; ++t) out[t] += wv * xi[t + shift];
      }
    }
  }
  return acc;
}

std::vector<std::int32_t> fc_acc(const CompiledLayer& cl, const BankLayer& bl, const Activation& in, bool first,
                                 int zero_point) {
  const int f = bl.active_in, co = bl.active_out;
  std::vector<std::int32_t> acc(co, 0);
  if (cl.w_bits == 1 && cl.in_bits == 1 && !first) {
    std::vector<std::uint64_t> x(cl.words, 0);
    for (int i = 0; i < f; ++i) {
      if (packed_at(in.codes, i)) x[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    for (int o = 0; o < co; ++o) acc[o] = binary_dot_words(x.data(), &cl.w_bitsets[static_cast<std::size_t>(o) * cl.words], f);
    return acc;
  }
  const auto x = decode_input(in, zero_point, first);
  for (int o = 0; o < co; ++o) {
    const std::int32_t* w = &cl.w_values[static_cast<std::size_t>(o) * cl.c_in];
    std::int32_t s = 0;
    for (int i = 0; i < f; ++i) s += w[i] * x[i];
    acc[o] = s;
  }
  return acc;
}

void forward_one(const CompiledModel& cm, const WidthBank& bank, std::span<const std::uint8_t> sample,
                 std::span<std::int32_t> scores, ForwardTrace* trace) {
  Activation a;
  a.channels = cm.arch.in_channels;
  a.length = cm.arch.length;
  a.codes.bits = 8;
  a.codes.count = sample.size();
  a.codes.bytes.assign(sample.begin(), sample.end());
  bool first = true;
  for (std::size_t l = 0; l < cm.layers.size(); ++l) {
    const CompiledLayer& cl = cm.layers[l];
    const BankLayer& bl = bank.layers[l];
    if (cl.kind == LayerKind::fc) {
      const auto acc = fc_acc(cl, bl, a, first, cm.input.zero_point);
      if (trace) trace->acc.push_back(acc);
      for (int o = 0; o < bl.active_out; ++o) scores[o] = (acc[o] << bl.acc_shift) + bl.bias[o];
      return;
    }
    const auto acc = conv_acc(cl, bl, a, first, cm.input.zero_point);
    if (trace) trace->acc.push_back(acc);
    const int len = cl.in_len, out_len = cl.out_len, s = cl.pool_size;
    std::vector<std::int32_t> codes(static_cast<std::size_t>(bl.active_out) * out_len);
    for (int o = 0; o < bl.active_out; ++o) {
      for (int t = 0; t < out_len; ++t) {
        std::int32_t m = requant(acc[static_cast<std::size_t>(o) * len + t * s], bl, o, cl.out_bits);
        for (int r = 1; r < s; ++r) m = std::max(m, requant(acc[static_cast<std::size_t>(o) * len + t * s + r], bl, o, cl.out_bits));
        codes[static_cast<std::size_t>(o) * out_len + t] = m;
      }
    }
    if (trace) trace->codes.push_back(codes);
    a.channels = bl.active_out;
    a.length = out_len;
    a.codes = pack_values(codes, cl.out_bits, Grid::unsigned_act);
    first = false;
  }
}

}  // namespace

std::vector<std::int32_t> integer_forward(const CompiledModel& cm, std::span<const std::uint8_t> input, int n,
                                          double width, ForwardTrace* trace) {
  const std::size_t per = cm.input_size();
  if (n < 0 || input.size() != per * static_cast<std::size_t>(n)) {
    fail(ErrorKind::dimension, "integer input has " + std::to_string(input.size()) + " codes, expected " +
                                   std::to_string(per * std::max(n, 0)));
  }
  if (trace && n != 1) fail(ErrorKind::state, "forward trace needs a single sample");
  const WidthBank& bank = cm.bank(width);
  const int k = cm.n_classes();
  std::vector<std::int32_t> scores(static_cast<std::size_t>(n) * k, 0);
#pragma omp parallel for schedule(dynamic, 4) if (n > 1)
  for (int i = 0; i < n; ++i) {
    forward_one(cm, bank, input.subspan(per * i, per), std::span<std::int32_t>(scores).subspan(static_cast<std::size_t>(i) * k, k),
                trace);
  }
  return scores;
}

// ---- cost model ---------------------------------------------------------------------------------

double ThetaTable::theta(int w_bits, int in_bits) const {
  const int path = std::max(w_bits, in_bits);
  const auto it = per_bits.find(path);
  if (it == per_bits.end()) fail(ErrorKind::config, "no throughput entry for " + std::to_string(path) + "-bit MACs");
  return it->second;
}

ThetaTable ThetaTable::parse(const std::string& text) {
  ThetaTable t;
  for (const auto& [key, value] : parse_key_values(text)) {
    double v = 0.0;
    try {
      v = std::stod(value);
    } catch (const std::exception&) {
      fail(ErrorKind::config, "theta table: cannot parse value of " + key);
    }
    if (!(v >= 0.0)) fail(ErrorKind::config, "theta table: " + key + " must be non-negative");
    if (key == "theta_8") t.per_bits[8] = v;
    else if (key == "theta_4") t.per_bits[4] = v;
    else if (key == "theta_2") t.per_bits[2] = v;
    else if (key == "theta_1") t.per_bits[1] = v;
    else if (key == "policy_units_per_class") t.policy_units_per_class = v;
    else fail(ErrorKind::config, "theta table: unknown key " + key);
  }
  return t;
}

ThetaTable ThetaTable::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open theta table " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

CostReport estimate_cost(const ArchConfig& arch, double width, const ThetaTable& theta, const std::vector<double>& banks) {
  arch.validate();
  CostReport r;
  int c_in = arch.in_channels, ci = arch.in_channels, len = arch.length, in_bits = 8;
  const auto lens = arch.block_lengths();
  auto bank_channels = [&](int c) {
    std::size_t s = 0;
    for (double w : banks) s += active_channels(c, w);
    return s;
  };
  for (int l = 0; l < arch.conv_count(); ++l) {
    LayerCost lc;
    lc.name = "conv" + std::to_string(l + 1);
    const int co = active_channels(arch.c_out[l], width);
    lc.weight_count = static_cast<std::size_t>(arch.c_out[l]) * c_in * arch.k;
    lc.weight_bits = arch.weight_bits[l];
    lc.weight_bytes = PackedBuffer::byte_length(lc.weight_count, lc.weight_bits);
    lc.requant_bytes = 8 * bank_channels(arch.c_out[l]);
    lc.macs = static_cast<double>(co) * ci * arch.k * len;
    lc.theta = theta.theta(lc.weight_bits, in_bits);
    lc.cycle_units = lc.macs * lc.theta;
    r.layers.push_back(lc);
    c_in = arch.c_out[l];
    ci = co;
    len = lens[l];
    in_bits = arch.act_bits[l];
  }
  LayerCost fc;
  fc.name = "fc";
  fc.weight_count = static_cast<std::size_t>(arch.fc_in_features()) * arch.n_classes;
  fc.weight_bits = arch.weight_bits.back();
  fc.weight_bytes = PackedBuffer::byte_length(fc.weight_count, fc.weight_bits);
  fc.requant_bytes = 8 * static_cast<std::size_t>(arch.n_classes) * banks.size();
  fc.macs = static_cast<double>(ci) * len * arch.n_classes;
  fc.theta = theta.theta(fc.weight_bits, in_bits);
  fc.cycle_units = fc.macs * fc.theta;
  r.layers.push_back(fc);
  for (const auto& lc : r.layers) {
    r.memory_bytes += lc.weight_bytes + lc.requant_bytes;
    r.macs += lc.macs;
    r.cycle_units += lc.cycle_units;
  }
  return r;
}

CostReport cost_report(const CompiledModel& cm, double width, const ThetaTable& theta) {
  std::vector<double> widths;
  for (const auto& b : cm.banks) widths.push_back(b.width);
  cm.bank_index(width);
  return estimate_cost(cm.arch, width, theta, widths);
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "layer,weight_count,weight_bits,weight_bytes,requant_bytes,macs,theta,cycle_units\n";
  for (const auto& l : layers) {
    os << l.name << ',' << l.weight_count << ',' << l.weight_bits << ',' << l.weight_bytes << ',' << l.requant_bytes
       << ',' << l.macs << ',' << l.theta << ',' << l.cycle_units << '\n';
  }
  os << "total,,,," << memory_bytes << ',' << macs << ",," << cycle_units << '\n';
  return os.str();
}

// ---- model file ---------------------------------------------------------------------------------
//
// Little-endian. "SBH1", u32 version, u64 arch digest, str arch text, f64 input scale,
// i32 zero point, f64 threshold, u32 layer count, layers, u32 bank count, banks.
// str = u32 length + bytes. Layer: u8 kind, i32 c_in c_out k in_len out_len, u8 pool_present,
// i32 pool_size, u8 w_bits in_bits out_bits, u64 count, u32 byte length + packed bytes.
// Bank: f64 width, f64 final_scale, per layer: i32 active_in active_out acc_shift, u32 n,
// n x i32 multiplier, n x i32 bias, n x i8 shift.

namespace {

constexpr std::uint32_t kFileVersion = 1;

class Writer {
 public:
  std::vector<std::uint8_t> out;
  void u(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u(static_cast<std::uint32_t>(v), 4); }
  void f64(double v) { u(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u(s.size(), 4);
    out.insert(out.end(), s.begin(), s.end());
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint64_t u(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(u(4))); }
  double f64() { return std::bit_cast<double>(u(8)); }
  std::string str() {
    const auto n = u(4);
    need(n);
    std::string s(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> b(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return b;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail(ErrorKind::format, "compiled model file is truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const CompiledModel& cm) {
  Writer w;
  w.out = {'S', 'B', 'H', '1'};
  w.u(kFileVersion, 4);
  const std::string text = to_config_text(cm.arch);
  w.u(fnv1a64(text), 8);
  w.str(text);
  w.f64(cm.input.scale);
  w.i32(cm.input.zero_point);
  w.f64(cm.threshold);
  w.u(cm.layers.size(), 4);
  for (const auto& l : cm.layers) {
    w.u(static_cast<std::uint8_t>(l.kind), 1);
    for (int v : {l.c_in, l.c_out, l.k, l.in_len, l.out_len}) w.i32(v);
    w.u(l.pool_present ? 1 : 0, 1);
    w.i32(l.pool_size);
    w.u(l.w_bits, 1);
    w.u(l.in_bits, 1);
    w.u(l.out_bits, 1);
    w.u(l.weights.count, 8);
    w.u(l.weights.bytes.size(), 4);
    w.out.insert(w.out.end(), l.weights.bytes.begin(), l.weights.bytes.end());
  }
  w.u(cm.banks.size(), 4);
  for (const auto& b : cm.banks) {
    w.f64(b.width);
    w.f64(b.final_scale);
    for (const auto& bl : b.layers) {
      w.i32(bl.active_in);
      w.i32(bl.active_out);
      w.i32(bl.acc_shift);
      w.u(bl.bias.size(), 4);
      const std::size_t nm = bl.multiplier.size();
      w.u(nm, 4);
      for (auto v : bl.multiplier) w.i32(v);
      for (auto v : bl.bias) w.i32(v);
      for (auto v : bl.shift) w.u(static_cast<std::uint8_t>(v), 1);
    }
  }
  return w.out;
}

CompiledModel deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "SBH1") fail(ErrorKind::format, "not a compiled model (bad magic)");
  if (r.u(4) != kFileVersion) fail(ErrorKind::format, "unsupported compiled model version");
  const std::uint64_t digest = r.u(8);
  const std::string text = r.str();
  if (fnv1a64(text) != digest) fail(ErrorKind::format, "compiled model architecture digest mismatch");
  CompiledModel cm;
  cm.arch = parse_arch_config(text);
  cm.input.scale = r.f64();
  cm.input.zero_point = r.i32();
  cm.threshold = r.f64();
  const auto n_layers = r.u(4);
  if (n_layers != static_cast<std::uint64_t>(cm.arch.conv_count()) + 1) fail(ErrorKind::format, "layer count disagrees with the architecture");
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    CompiledLayer l;
    l.kind = static_cast<LayerKind>(r.u(1));
    l.c_in = r.i32();
    l.c_out = r.i32();
    l.k = r.i32();
    l.in_len = r.i32();
    l.out_len = r.i32();
    l.pool_present = r.u(1) != 0;
    l.pool_size = r.i32();
    l.w_bits = static_cast<int>(r.u(1));
    l.in_bits = static_cast<int>(r.u(1));
    l.out_bits = static_cast<int>(r.u(1));
    l.weights.bits = l.w_bits;
    l.weights.count = r.u(8);
    const auto nb = r.u(4);
    if (nb != PackedBuffer::byte_length(l.weights.count, l.w_bits)) fail(ErrorKind::format, "weight buffer length mismatch");
    l.weights.bytes = r.bytes(nb);
    if (l.c_in < 1 || l.c_out < 1 || l.k < 1 || l.pool_size < 1 || l.in_len < 1) fail(ErrorKind::format, "invalid layer shape");
    l.build_caches();
    cm.layers.push_back(std::move(l));
  }
  const auto n_banks = r.u(4);
  for (std::uint64_t b = 0; b < n_banks; ++b) {
    WidthBank bank;
    bank.width = r.f64();
    bank.final_scale = r.f64();
    for (std::uint64_t i = 0; i < n_layers; ++i) {
      BankLayer bl;
      bl.active_in = r.i32();
      bl.active_out = r.i32();
      bl.acc_shift = r.i32();
      const auto n = r.u(4);
      const auto nm = r.u(4);
      if (n != static_cast<std::uint64_t>(bl.active_out) || (nm != 0 && nm != n)) fail(ErrorKind::format, "bank array length mismatch");
      for (std::uint64_t c = 0; c < nm; ++c) bl.multiplier.push_back(r.i32());
      for (std::uint64_t c = 0; c < n; ++c) bl.bias.push_back(r.i32());
      for (std::uint64_t c = 0; c < nm; ++c) bl.shift.push_back(static_cast<std::int8_t>(r.u(1)));
      bank.layers.push_back(std::move(bl));
    }
    cm.banks.push_back(std::move(bank));
  }
  if (!r.done()) fail(ErrorKind::format, "trailing bytes after compiled model");
  return cm;
}

void save_compiled(const CompiledModel& cm, const std::string& path) {
  const auto bytes = serialize(cm);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::io, "failed writing " + path);
}

CompiledModel load_compiled(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string compiled_to_json(const CompiledModel& cm) {
  using nlohmann::json;
  auto hex = [](const std::vector<std::uint8_t>& b) {
    static const char* d = "0123456789abcdef";
    std::string s;
    for (auto v : b) {
      s += d[v >> 4];
      s += d[v & 15];
    }
    return s;
  };
  json j;
  j["format"] = "SBH1";
  j["version"] = kFileVersion;
  j["arch"] = to_config_text(cm.arch);
  j["arch_digest"] = hex64(fnv1a64(to_config_text(cm.arch)));
  j["input"] = {{"scale", cm.input.scale}, {"zero_point", cm.input.zero_point}};
  j["threshold"] = cm.threshold;
  for (const auto& l : cm.layers) {
    j["layers"].push_back({{"kind", l.kind == LayerKind::conv ? "conv" : "fc"},
                           {"c_in", l.c_in},
                           {"c_out", l.c_out},
                           {"k", l.k},
                           {"in_len", l.in_len},
                           {"out_len", l.out_len},
                           {"pool", l.pool_present ? l.pool_size : 0},
                           {"w_bits", l.w_bits},
                           {"in_bits", l.in_bits},
                           {"out_bits", l.out_bits},
                           {"weight_count", l.weights.count},
                           {"weights_hex", hex(l.weights.bytes)}});
  }
  for (const auto& b : cm.banks) {
    json jb{{"width", b.width}, {"final_scale", b.final_scale}};
    for (const auto& bl : b.layers) {
      jb["layers"].push_back({{"active_in", bl.active_in},
                              {"active_out", bl.active_out},
                              {"acc_shift", bl.acc_shift},
                              {"multiplier", bl.multiplier},
                              {"bias", bl.bias},
                              {"shift", bl.shift}});
    }
    j["banks"].push_back(jb);
  }
  return j.dump(1);
}

}  // namespace shar
