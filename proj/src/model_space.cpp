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

#include "shar/model_space.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "shar/error.hpp"
#include "shar/quantize.hpp"

namespace shar {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) fail(ErrorKind::format, "expected an integer, got '" + s + "'");
  return v;
}

std::string pool_list(const std::vector<PoolSpec>& pools) {
  std::vector<int> v;
  for (const auto& p : pools) v.push_back(p.present ? p.size : 0);
  return join_ints(v);
}

}  // namespace

void ArchConfig::validate() const {
  const int n = conv_count();
  if (n < 1) fail(ErrorKind::config, "architecture needs at least one conv layer");
  if (tmpl == Template::A && n != 3) fail(ErrorKind::config, "template A has exactly 3 conv layers");
  if (tmpl == Template::B && n != 2) fail(ErrorKind::config, "template B has exactly 2 conv layers");
  if (k < 1 || k % 2 == 0) fail(ErrorKind::config, "kernel size must be odd and positive");
  if (static_cast<int>(pool.size()) != n) fail(ErrorKind::config, "one pooling entry per conv layer required");
  if (static_cast<int>(weight_bits.size()) != n + 1) fail(ErrorKind::config, "weight_bits needs conv count + 1 entries");
  if (static_cast<int>(act_bits.size()) != n) fail(ErrorKind::config, "act_bits needs one entry per conv layer");
  for (int c : c_out) {
    if (c < 1) fail(ErrorKind::config, "c_out must be positive");
  }
  for (const auto& p : pool) {
    if (p.present && p.size != 2 && p.size != 4) fail(ErrorKind::config, "pool size must be 2 or 4");
    if (tmpl == Template::A && !(p.present && p.size == 2)) fail(ErrorKind::config, "template A pools are fixed at s=2");
  }
  auto check_bits = [](int b) {
    if (b != 0 && !is_supported_bits(b)) fail(ErrorKind::config, "unsupported bit-width " + std::to_string(b));
  };
  for (int b : weight_bits) check_bits(b);
  for (int b : act_bits) check_bits(b);
  if (input_bits != 0 && input_bits != 8) fail(ErrorKind::config, "input is always quantized at 8 bits");
  if (n_classes < 1) fail(ErrorKind::config, "n_classes must be positive");
  if (in_channels < 1 || length < 1) fail(ErrorKind::config, "input shape must be positive");
  const auto lens = block_lengths();
  if (lens.back() < 1) {
    fail(ErrorKind::config, "window length " + std::to_string(length) + " is shorter than the cumulative pooling shrink");
  }
}

std::vector<int> ArchConfig::block_lengths() const {
  std::vector<int> out;
  int len = length;
  for (const auto& p : pool) {
    if (p.present) len /= p.size;
    out.push_back(len);
  }
  return out;
}

int ArchConfig::fc_in_features() const { return c_out.back() * block_lengths().back(); }

bool ArchConfig::all_binary() const {
  return std::all_of(weight_bits.begin(), weight_bits.end(), [](int b) { return b == 1; }) &&
         std::all_of(act_bits.begin(), act_bits.end(), [](int b) { return b == 1; });
}

void ArchConfig::set_uniform_bits(int bits) {
  weight_bits.assign(c_out.size() + 1, bits);
  act_bits.assign(c_out.size(), bits);
}

std::string join_ints(const std::vector<int>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(sep);
    s += std::to_string(v[i]);
  }
  return s;
}

std::string to_config_text(const ArchConfig& cfg) {
  std::ostringstream os;
  os << "template=" << (cfg.tmpl == Template::A ? "A" : "B") << "\n";
  os << "c_out=" << join_ints(cfg.c_out) << "\n";
  os << "k=" << cfg.k << "\n";
  os << "pool=" << pool_list(cfg.pool) << "\n";
  os << "weight_bits=" << join_ints(cfg.weight_bits) << "\n";
  os << "act_bits=" << join_ints(cfg.act_bits) << "\n";
  os << "input_bits=" << cfg.input_bits << "\n";
  os << "n_classes=" << cfg.n_classes << "\n";
  os << "in_channels=" << cfg.in_channels << "\n";
  os << "length=" << cfg.length << "\n";
  return os.str();
}

ArchConfig parse_arch_config(const std::string& text) {
  const auto kv = parse_key_values(text);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::format, std::string("architecture config is missing '") + key + "'");
    return it->second;
  };
  ArchConfig cfg;
  const auto& t = get("template");
  if (t == "A") {
    cfg.tmpl = Template::A;
  } else if (t == "B") {
    cfg.tmpl = Template::B;
  } else {
    fail(ErrorKind::format, "unknown template '" + t + "'");
  }
  cfg.c_out = parse_int_list(get("c_out"));
  cfg.k = to_int(get("k"));
  for (int s : parse_int_list(get("pool"))) cfg.pool.push_back(PoolSpec{s != 0, s == 0 ? 2 : s});
  cfg.weight_bits = parse_int_list(get("weight_bits"));
  cfg.act_bits = parse_int_list(get("act_bits"));
  if (kv.count("input_bits")) cfg.input_bits = to_int(kv.at("input_bits"));
  cfg.n_classes = to_int(get("n_classes"));
  cfg.in_channels = to_int(get("in_channels"));
  cfg.length = to_int(get("length"));
  cfg.validate();
  return cfg;
}

std::string arch_summary(const ArchConfig& cfg) {
  return std::string(cfg.tmpl == Template::A ? "A" : "B") + "|c=" + join_ints(cfg.c_out) + "|k=" + std::to_string(cfg.k) +
         "|p=" + pool_list(cfg.pool) + "|w=" + join_ints(cfg.weight_bits) + "|a=" + join_ints(cfg.act_bits);
}

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string arch_digest(const ArchConfig& cfg) { return hex64(fnv1a64(to_config_text(cfg))); }

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::format, "line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(to_int(part));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      fail(ErrorKind::format, "expected a number, got '" + part + "'");
    }
  }
  return out;
}

GridSpec GridSpec::template_a(int n_classes, int in_channels, int length, int bits) {
  GridSpec g;
  g.tmpl = Template::A;
  g.n_conv = 3;
  g.c_out_choices = {2, 4, 8, 16, 32, 64, 128};
  g.k_choices = {7, 15};
  g.pool_choices = {PoolSpec{true, 2}};
  g.bits = bits;
  g.n_classes = n_classes;
  g.in_channels = in_channels;
  g.length = length;
  return g;
}

GridSpec GridSpec::template_b(int n_classes, int in_channels, int length, int bits) {
  GridSpec g;
  g.tmpl = Template::B;
  g.n_conv = 2;
  g.c_out_choices = {2, 4, 8, 16, 32};
  g.k_choices = {7, 15};
  g.pool_choices = {PoolSpec{false, 2}, PoolSpec{true, 2}, PoolSpec{true, 4}};
  g.bits = bits;
  g.n_classes = n_classes;
  g.in_channels = in_channels;
  g.length = length;
  return g;
}

std::vector<ArchConfig> enumerate_grid(const GridSpec& spec) {
  if (spec.c_out_choices.empty() || spec.k_choices.empty() || spec.pool_choices.empty()) {
    fail(ErrorKind::config, "grid has an empty choice set");
  }
  if (spec.n_conv < 1) fail(ErrorKind::config, "grid needs at least one conv layer");
  const int max_c = spec.tmpl == Template::A ? 128 : 32;
  for (int c : spec.c_out_choices) {
    if (!is_power_of_two(c) || c < 2 || c > max_c) {
      fail(ErrorKind::config, "c_out choice " + std::to_string(c) + " outside the template's power-of-two range");
    }
  }
  for (int k : spec.k_choices) {
    if (k != 7 && k != 15) fail(ErrorKind::config, "kernel size choices are 7 and 15");
  }

  const std::size_t nc = spec.c_out_choices.size();
  const std::size_t np = spec.pool_choices.size();
  std::size_t total = spec.k_choices.size();
  for (int i = 0; i < spec.n_conv; ++i) total *= nc * np;

  std::vector<ArchConfig> out;
  out.reserve(total);
  // Mixed-radix counter; digits ordered [c_out..., k, pool...] with the first digit most significant.
  std::vector<std::size_t> radix;
  for (int i = 0; i < spec.n_conv; ++i) radix.push_back(nc);
  radix.push_back(spec.k_choices.size());
  for (int i = 0; i < spec.n_conv; ++i) radix.push_back(np);
  std::vector<std::size_t> digit(radix.size(), 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    ArchConfig cfg;
    cfg.tmpl = spec.tmpl;
    for (int i = 0; i < spec.n_conv; ++i) cfg.c_out.push_back(spec.c_out_choices[digit[i]]);
    cfg.k = spec.k_choices[digit[spec.n_conv]];
    for (int i = 0; i < spec.n_conv; ++i) cfg.pool.push_back(spec.pool_choices[digit[spec.n_conv + 1 + i]]);
    cfg.set_uniform_bits(spec.bits);
    cfg.n_classes = spec.n_classes;
    cfg.in_channels = spec.in_channels;
    cfg.length = spec.length;
    out.push_back(std::move(cfg));
    for (std::size_t d = digit.size(); d-- > 0;) {
      if (++digit[d] < radix[d]) break;
      digit[d] = 0;
    }
  }
  return out;
}

}  // namespace shar
