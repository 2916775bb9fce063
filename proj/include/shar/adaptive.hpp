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

// Big/little execution over one variable-width compiled model: the small width runs first and
// its prediction is committed when the softmax score margin exceeds the threshold.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shar/data.hpp"
#include "shar/engine.hpp"

namespace shar {

// max(p) - second max(p); the maximum itself for a single class.
double score_margin(std::span<const double> probs);
// c_small + c_policy + (1 - p_e) * c_big.
double expected_cost(double c_small, double c_policy, double c_big, double p_e);

struct AdaptiveModel {
  CompiledModel model;  // banks {w_small, 1.0}; model.threshold holds T_h
  ThetaTable theta;

  double small_width() const { return model.banks.front().width; }
  double threshold() const { return model.threshold; }
  double cost_small() const;
  double cost_big() const;
  double cost_policy() const;
};

// Recompiles nothing: takes a model compiled at (at least) w_small and 1.0 and keeps those banks.
// Refuses fully binarized backbones.
AdaptiveModel make_adaptive(const CompiledModel& backbone, double w_small, double threshold, const ThetaTable& theta = {});

struct AdaptiveDecision {
  int label = 0;
  bool used_big = false;
  double cost_units = 0.0;
  double margin = 0.0;
};

AdaptiveDecision adaptive_classify(const AdaptiveModel& am, std::span<const std::uint8_t> sample);

struct SweepPoint {
  double threshold = 0.0;
  double score = 0.0;       // balanced accuracy, percent
  double accuracy = 0.0;    // percent
  double p_e = 0.0;         // fraction committed by the small path
  double avg_cost = 0.0;    // empirical mean cycle units
  double predicted_cost = 0.0;  // expected_cost with the measured p_e
};

// 0 followed by 100 log-spaced values over (1e-4, 1]; the last is exactly 1.
std::vector<double> default_thresholds();

// Per-sample small/big outputs computed once and reused for every threshold.
struct AdaptiveOutputs {
  std::vector<int> small_label, big_label, truth;
  std::vector<double> margin;
  int n_classes = 0;
};
AdaptiveOutputs run_both_paths(const AdaptiveModel& am, const WindowedDataset& data);

std::vector<SweepPoint> threshold_sweep(const AdaptiveModel& am, const WindowedDataset& data,
                                        const std::vector<double>& thresholds = default_thresholds());
std::vector<SweepPoint> threshold_sweep(const AdaptiveModel& am, const AdaptiveOutputs& outputs,
                                        const std::vector<double>& thresholds = default_thresholds());
std::string sweep_csv(const std::vector<SweepPoint>& points);

// Gain G_i = (P_i - P_{i-1}) / (C_i - C_{i-1}) over a front ordered by increasing score
// (percent); argmax among models within 5 points of the best; ties toward lower cost.
std::size_t select_backbone(std::span<const ParetoPoint> front);

// Area dominated by the (score, cost) points w.r.t. the reference (ref_score, ref_cost).
double hypervolume(std::span<const ParetoPoint> points, double ref_score, double ref_cost);

struct WidthChoice {
  double width = 0.25;
  std::vector<SweepPoint> sweep_025, sweep_050;
  double hv_025 = 0.0, hv_050 = 0.0;
};
// Sweeps both candidate small widths and keeps the one whose front dominates the larger area
// (ties toward 0.25). `backbone` needs banks for 0.25, 0.5 and 1.0.
WidthChoice choose_width(const CompiledModel& backbone, const WindowedDataset& data, const ThetaTable& theta = {});

// Picks the threshold with the lowest average cost among sweep points whose score is within
// `max_drop` points of `reference_score`; falls back to threshold 1.
SweepPoint pick_threshold(const std::vector<SweepPoint>& sweep, double reference_score, double max_drop);

}  // namespace shar
