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

// Differentiable mixed-precision search: every weight and activation site mixes its {1,2,4,8}-bit
// images with softmax weights, the loss adds lambda times the expected bit count, and the final
// bit-widths are the argmax branches.

#include <span>
#include <string>
#include <vector>

#include "shar/data.hpp"
#include "shar/network.hpp"
#include "shar/train.hpp"

namespace shar {

struct NasConfig {
  double lambda = 0.0;
  std::vector<double> lambda_sweep = default_sweep();
  std::vector<int> branches = {1, 2, 4, 8};
  int search_epochs = 30;        // fixed search budget; bits are read from the final state
  double logit_lr_scale = 10.0;  // branch logits learn faster than weights

  void validate() const;
  static std::vector<double> default_sweep();  // 10 linear values over [1e-4, 1e-3]
};

// Softmax-mixed fake-quantized weights of a (weight) site.
std::vector<double> mixed_weight(const QuantSite& site, std::span<const double> w);

// sum_b p_b * bits_b * element_count, and its gradient with respect to the logits.
double expected_bits(const QuantSite& site);
std::vector<double> expected_bits_grad(const QuantSite& site);

double cost_bits(std::span<const QuantSite* const> sites);
double nas_loss(double task_loss, std::span<const QuantSite* const> sites, double lambda);
// Adds lambda * d(cost)/d(logits) to every site's logit gradient and returns lambda * cost.
double add_cost_gradient(std::span<QuantSite* const> sites, double lambda);

// Replaces every weight/activation site with a searchable one (input stays 8-bit).
Network make_mixed(const Network& base, const std::vector<int>& branches);
// Argmax branch per site, ties toward fewer bits.
ArchConfig extract_fixed(const Network& searched);
// Collapses every site onto the branch chosen in `arch`, keeping that branch's clip value.
Network fix_sites(const Network& searched, const ArchConfig& arch);

// Sum over sites of element_count * bits for a fixed assignment.
double model_bits(const ArchConfig& arch);

struct NasResult {
  double lambda = 0.0;
  ArchConfig arch;
  Network model;
  double model_bits = 0.0;
  double holdout_score = 0.0;
};

// For every lambda of the sweep: search from `base`, extract, fine-tune with train_fixed.
std::vector<NasResult> nas_search(const Network& base, const WindowedDataset& data, const TrainProtocol& protocol,
                                  const NasConfig& nas);
// Search + extraction only, for one lambda.
Network nas_search_one(const Network& base, const WindowedDataset& data, const TrainProtocol& protocol,
                       const NasConfig& nas, double lambda);

// CSV: lambda,weight_bits,act_bits,model_bits,holdout_bacc
std::string sweep_report_csv(const std::vector<NasResult>& results);

}  // namespace shar
