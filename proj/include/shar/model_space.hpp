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
#include <map>
#include <string>
#include <vector>

namespace shar {

enum class Template { A, B };

struct PoolSpec {
  bool present = true;
  int size = 2;  // pool size == stride

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

// One point of the architecture space. Bit-width 0 marks a float (unquantized) tensor.
struct ArchConfig {
  Template tmpl = Template::A;
  std::vector<int> c_out;         // per conv layer
  int k = 7;                      // global kernel size
  std::vector<PoolSpec> pool;     // per conv layer
  std::vector<int> weight_bits;   // per conv layer, then the FC layer
  std::vector<int> act_bits;      // per conv layer output
  int input_bits = 8;
  int n_classes = 2;
  int in_channels = 3;
  int length = 64;

  int conv_count() const { return static_cast<int>(c_out.size()); }
  void validate() const;
  // Feature length after conv block i (same padding, then optional pooling).
  std::vector<int> block_lengths() const;
  int fc_in_features() const;
  bool all_binary() const;
  void set_uniform_bits(int bits);

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// Canonical key=value text (one pair per line) and its parser.
std::string to_config_text(const ArchConfig& cfg);
ArchConfig parse_arch_config(const std::string& text);
// Compact single-line form used in result tables: "B|c=4,16|k=7|p=2,0|w=8,8,8|a=8,8".
std::string arch_summary(const ArchConfig& cfg);

// 64-bit FNV-1a over bytes, rendered as 16 hex digits.
std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);
std::string arch_digest(const ArchConfig& cfg);

// Generic key=value file helpers ('#' starts a comment).
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::vector<int> parse_int_list(const std::string& s);
std::vector<double> parse_double_list(const std::string& s);
std::string join_ints(const std::vector<int>& v, char sep = ',');

struct GridSpec {
  Template tmpl = Template::A;
  int n_conv = 3;
  std::vector<int> c_out_choices;
  std::vector<int> k_choices;
  std::vector<PoolSpec> pool_choices;  // offered independently at every conv position
  int bits = 8;
  int n_classes = 2;
  int in_channels = 3;
  int length = 64;

  static GridSpec template_a(int n_classes, int in_channels, int length, int bits);
  static GridSpec template_b(int n_classes, int in_channels, int length, int bits);
};

// Cartesian product in lexicographic order: c_out of conv 1 varies slowest, then later convs,
// then K, then pooling per position.
std::vector<ArchConfig> enumerate_grid(const GridSpec& spec);

}  // namespace shar
