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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shar/data.hpp"
#include "shar/network.hpp"

namespace shar {

struct TrainProtocol {
  double initial_lr = 1e-3;
  int batch_size = 32;
  double lr_decay_factor = 0.1;
  int lr_patience = 3;          // epochs without training-loss improvement before decaying
  int early_stop_patience = 5;  // epochs past the best holdout score before stopping
  double weight_decay = 0.0;
  int max_epochs = 100;
  double holdout_fraction = 0.25;
  std::vector<double> class_weights;  // empty => inverse training-set frequencies
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;        // one progress line per epoch when set

  void validate() const;
  // Stable text of every field that affects the result (used for result digests).
  std::string digest_text() const;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d(loss)/d(scores)
};

// Mean over the batch of w[label] * -log softmax(scores)[label].
LossResult weighted_cross_entropy(const Tensor& scores, std::span<const int> labels, std::span<const double> weights);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

// One bias-corrected Adam update over all params; decoupled weight decay on params marked
// for decay. Clip parameters of quantizer sites are kept positive by the caller.
void adam_step(std::span<Param* const> params, AdamState& state, double lr, double weight_decay);

// Extra differentiable term evaluated once per optimizer step after the task backward pass.
// It must add its own gradients and return its value.
using ExtraLoss = std::function<double(Network&)>;

struct TrainOptions {
  std::vector<double> widths = {1.0};
  ExtraLoss extra;
  bool early_stop = true;
  bool return_last = false;  // return the final state instead of the best-holdout snapshot
};

// Generic loop: per batch, forward+backward at every width (gradients summed), optional extra
// loss, one Adam step. LR decays after lr_patience stale epochs of training loss; stops after
// early_stop_patience epochs past the best holdout balanced accuracy (averaged over widths) and
// returns that best snapshot carrying the full history.
Network train(Network model, const WindowedDataset& data, const TrainProtocol& protocol, const TrainOptions& options);
Network train_fixed(Network model, const WindowedDataset& data, const TrainProtocol& protocol);
Network train_slimmable(Network model, const WindowedDataset& data, const TrainProtocol& protocol,
                        const std::vector<double>& widths = kSupportedWidths);

// Sets the 8-bit input calibration from the training min/max unless already set.
void calibrate_input(Network& model, const WindowedDataset& data);

std::vector<int> predict_labels(const Network& model, const Tensor& x, double width = 1.0);
Metrics evaluate(const Network& model, const WindowedDataset& data, double width = 1.0);

// Positive floor applied to learned clip parameters after every step.
inline constexpr double kMinAlpha = 1e-3;

}  // namespace shar
