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

#include "shar/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shar/error.hpp"
#include "shar/quant_site.hpp"

namespace shar {

double score_margin(std::span<const double> probs) {
  if (probs.empty()) fail(ErrorKind::dimension, "score margin of an empty vector");
  if (probs.size() == 1) return probs[0];
  double a = -1.0, b = -1.0;
  for (double p : probs) {
    if (p > a) {
      b = a;
      a = p;
    } else if (p > b) {
      b = p;
    }
  }
  return a - b;
}

double expected_cost(double c_small, double c_policy, double c_big, double p_e) {
  if (!(p_e >= 0.0 && p_e <= 1.0)) fail(ErrorKind::range, "early-commit probability must lie in [0, 1]");
  return c_small + c_policy + (1.0 - p_e) * c_big;
}

double AdaptiveModel::cost_small() const { return estimate_cost(model.arch, small_width(), theta).cycle_units; }
double AdaptiveModel::cost_big() const { return estimate_cost(model.arch, 1.0, theta).cycle_units; }
double AdaptiveModel::cost_policy() const { return theta.policy_units_per_class * model.n_classes(); }

AdaptiveModel make_adaptive(const CompiledModel& backbone, double w_small, double threshold, const ThetaTable& theta) {
  if (backbone.arch.all_binary()) {
    fail(ErrorKind::selection, "adaptive inference refused: fully binarized backbones give uncalibrated score margins");
  }
  if (w_small != 0.25 && w_small != 0.5) fail(ErrorKind::config, "small width must be 0.25 or 0.5");
  if (!(threshold >= 0.0)) fail(ErrorKind::config, "threshold must be non-negative");
  AdaptiveModel am;
  am.theta = theta;
  am.model = backbone;
  am.model.banks = {backbone.bank(w_small), backbone.bank(1.0)};
  am.model.threshold = threshold;
  return am;
}

namespace {

int argmax(std::span<const std::int32_t> s) {
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

double margin_of(std::span<const std::int32_t> s, double scale) {
  std::vector<double> real(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) real[i] = scale * s[i];
  const auto p = softmax(real);
  return score_margin(p);
}

}  // namespace

AdaptiveDecision adaptive_classify(const AdaptiveModel& am, std::span<const std::uint8_t> sample) {
  const auto& small = am.model.banks.front();
  const auto s = integer_forward(am.model, sample, 1, small.width);
  AdaptiveDecision d;
  d.margin = margin_of(s, small.final_scale);
  d.cost_units = am.cost_small() + am.cost_policy();
  if (d.margin > am.threshold()) {
    d.label = argmax(s);
    return d;
  }
  const auto b = integer_forward(am.model, sample, 1, 1.0);
  d.label = argmax(b);
  d.used_big = true;
  d.cost_units += am.cost_big();
  return d;
}

std::vector<double> default_thresholds() {
  std::vector<double> t = {0.0};
  for (int i = 1; i <= 100; ++i) t.push_back(std::pow(10.0, -4.0 + 4.0 * i / 100.0));
  t.back() = 1.0;
  return t;
}

AdaptiveOutputs run_both_paths(const AdaptiveModel& am, const WindowedDataset& data) {
  if (data.size() == 0) fail(ErrorKind::data, "threshold sweep needs a non-empty dataset");
  const auto x = quantize_input(am.model, data.all());
  const int n = static_cast<int>(data.size()), k = am.model.n_classes();
  const auto& small = am.model.banks.front();
  const auto s = integer_forward(am.model, x, n, small.width);
  const auto b = integer_forward(am.model, x, n, 1.0);
  AdaptiveOutputs o;
  o.n_classes = k;
  o.truth = data.labels;
  for (int i = 0; i < n; ++i) {
    const std::span<const std::int32_t> si(s.data() + static_cast<std::size_t>(i) * k, k);
    const std::span<const std::int32_t> bi(b.data() + static_cast<std::size_t>(i) * k, k);
    o.small_label.push_back(argmax(si));
    o.big_label.push_back(argmax(bi));
    o.margin.push_back(margin_of(si, small.final_scale));
  }
  return o;
}

std::vector<SweepPoint> threshold_sweep(const AdaptiveModel& am, const AdaptiveOutputs& o,
                                        const std::vector<double>& thresholds) {
  const double cs = am.cost_small(), cp = am.cost_policy(), cb = am.cost_big();
  const std::size_t n = o.truth.size();
  if (n == 0) fail(ErrorKind::data, "threshold sweep needs a non-empty dataset");
  std::vector<SweepPoint> out(thresholds.size());
#pragma omp parallel for schedule(static)
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    const double th = thresholds[ti];
    std::vector<int> pred(n);
    std::size_t early = 0;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool commit = o.margin[i] > th;
      pred[i] = commit ? o.small_label[i] : o.big_label[i];
      early += commit;
      cost += cs + cp + (commit ? 0.0 : cb);
    }
    const Metrics m = compute_metrics(pred, o.truth, o.n_classes);
    SweepPoint& p = out[ti];
    p.threshold = th;
    p.score = 100.0 * m.balanced_accuracy;
    p.accuracy = 100.0 * m.accuracy;
    p.p_e = static_cast<double>(early) / n;
    p.avg_cost = cost / n;
    p.predicted_cost = expected_cost(cs, cp, cb, p.p_e);
  }
  return out;
}

std::vector<SweepPoint> threshold_sweep(const AdaptiveModel& am, const WindowedDataset& data,
                                        const std::vector<double>& thresholds) {
  return threshold_sweep(am, run_both_paths(am, data), thresholds);
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os.precision(10);
  os << "threshold,score,accuracy,p_e,avg_cost,predicted_cost\n";
  for (const auto& p : points) {
    os << p.threshold << ',' << p.score << ',' << p.accuracy << ',' << p.p_e << ',' << p.avg_cost << ','
       << p.predicted_cost << '\n';
  }
  return os.str();
}

std::size_t select_backbone(std::span<const ParetoPoint> front) {
  if (front.size() < 2) fail(ErrorKind::selection, "backbone selection needs at least two Pareto models");
  double best_score = front[0].score;
  for (const auto& p : front) best_score = std::max(best_score, p.score);
  std::size_t chosen = front.size();
  double chosen_gain = 0.0;
  for (std::size_t i = 1; i < front.size(); ++i) {
    if (!(best_score - front[i].score < 5.0)) continue;
    const double dc = front[i].cost - front[i - 1].cost;
    if (dc == 0.0) continue;
    const double g = (front[i].score - front[i - 1].score) / dc;
    if (chosen == front.size() || g > chosen_gain || (g == chosen_gain && front[i].cost < front[chosen].cost)) {
      chosen = i;
      chosen_gain = g;
    }
  }
  if (chosen == front.size()) fail(ErrorKind::selection, "no Pareto model qualifies as adaptive backbone");
  return chosen;
}

double hypervolume(std::span<const ParetoPoint> points, double ref_score, double ref_cost) {
  auto front = pareto_front(std::vector<ParetoPoint>(points.begin(), points.end()));
  double hv = 0.0, prev = ref_score;
  for (const auto& p : front) {
    if (p.score <= prev || p.cost >= ref_cost) continue;
    hv += (ref_cost - p.cost) * (p.score - prev);
    prev = p.score;
  }
  return hv;
}

WidthChoice choose_width(const CompiledModel& backbone, const WindowedDataset& data, const ThetaTable& theta) {
  WidthChoice wc;
  wc.sweep_025 = threshold_sweep(make_adaptive(backbone, 0.25, 1.0, theta), data);
  wc.sweep_050 = threshold_sweep(make_adaptive(backbone, 0.5, 1.0, theta), data);
  double ref_score = 1e300, ref_cost = 0.0;
  auto to_points = [&](const std::vector<SweepPoint>& s) {
    std::vector<ParetoPoint> pts;
    for (const auto& p : s) {
      pts.push_back({p.score, p.avg_cost, std::to_string(p.threshold)});
      ref_score = std::min(ref_score, p.score);
      ref_cost = std::max(ref_cost, p.avg_cost);
    }
    return pts;
  };
  const auto a = to_points(wc.sweep_025);
  const auto b = to_points(wc.sweep_050);
  ref_cost *= 1.01;
  wc.hv_025 = hypervolume(a, ref_score, ref_cost);
  wc.hv_050 = hypervolume(b, ref_score, ref_cost);
  wc.width = wc.hv_050 > wc.hv_025 ? 0.5 : 0.25;
  return wc;
}

SweepPoint pick_threshold(const std::vector<SweepPoint>& sweep, double reference_score, double max_drop) {
  if (sweep.empty()) fail(ErrorKind::data, "empty threshold sweep");
  const SweepPoint* best = nullptr;
  for (const auto& p : sweep) {
    if (p.score < reference_score - max_drop) continue;
    if (!best || p.avg_cost < best->avg_cost || (p.avg_cost == best->avg_cost && p.score > best->score)) best = &p;
  }
  if (!best) {
    best = &sweep.front();
    for (const auto& p : sweep) {
      if (p.threshold > best->threshold) best = &p;
    }
  }
  return *best;
}

}  // namespace shar
