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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shar/tensor.hpp"

namespace shar {

struct WindowedDataset {
  int channels = 3;
  int length = 64;
  int n_classes = 2;
  std::vector<double> windows;  // [n][channels][length]
  std::vector<int> labels;
  std::vector<std::string> class_names;
  double rate_hz = 0.0;
  double window_seconds = 0.0;

  std::size_t size() const { return labels.size(); }
  std::size_t window_size() const { return static_cast<std::size_t>(channels) * length; }
  std::span<const double> window(std::size_t i) const {
    return std::span<const double>(windows).subspan(i * window_size(), window_size());
  }
  void validate() const;
  WindowedDataset subset(std::span<const std::size_t> indices) const;
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor all() const;
  std::vector<std::size_t> class_counts() const;
  // Digest of shape, labels and values.
  std::string digest() const;
};

// CSV: optional header comment "# subbyte-har-csv v1 channels=C length=L classes=K", then one
// row per window with C*L values (channel-major) followed by the integer label.
struct CsvSchema {
  int channels = 0;   // 0 => take from the header comment
  int length = 0;
  int n_classes = 0;  // 0 => header, else 1 + max label
};

WindowedDataset load_csv(const std::string& path, const CsvSchema& schema = {});
void save_csv(const WindowedDataset& ds, const std::string& path);

struct SynthOptions {
  int n_per_class = 100;
  int n_classes = 6;
  int channels = 3;
  int length = 64;
  double easy_fraction = 1.0;
  std::uint64_t seed = 0;
};

// Class c is a sinusoid with a class-specific number of cycles per window. Easy samples carry
// low noise; hard samples mix in a neighbouring class's frequency and carry high noise.
WindowedDataset synth_har(const SynthOptions& opt);
// Per-sample flag of whether synth_har drew it as an easy sample (same seed, same order).
std::vector<bool> synth_easy_mask(const SynthOptions& opt);

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<long> counts;  // rows = true class
  long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * n_classes + pred]; }
  long total() const;
  std::string to_csv() const;
};

struct Metrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> f1;
  ConfusionMatrix confusion;
};

Metrics compute_metrics(std::span<const int> pred, std::span<const int> labels, int n_classes);

// w_c = total / (n_classes * count_c).
std::vector<double> class_weights(std::span<const int> labels, int n_classes);

// Class-stratified split: returns (first, second) with round(fraction * count_c) samples of each
// class in `second`, chosen by a seeded shuffle.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                                                int n_classes, double fraction,
                                                                                std::uint64_t seed);

struct ParetoPoint {
  double score = 0.0;  // higher is better
  double cost = 0.0;   // lower is better
  std::string id;      // ties between identical points keep the smallest id
};

// Non-dominated subset ordered by increasing score.
std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points);
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

}  // namespace shar
