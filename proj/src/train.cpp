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

#include "shar/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "shar/error.hpp"

namespace shar {

void TrainProtocol::validate() const {
  if (!(initial_lr > 0.0)) fail(ErrorKind::config, "learning rate must be positive");
  if (batch_size < 1) fail(ErrorKind::config, "batch size must be positive");
  if (lr_patience < 1 || early_stop_patience < 1) fail(ErrorKind::config, "patience values must be positive");
  if (max_epochs < 0) fail(ErrorKind::config, "max_epochs must be non-negative");
  if (weight_decay < 0.0) fail(ErrorKind::config, "weight decay must be non-negative");
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) fail(ErrorKind::config, "holdout fraction must be in (0, 1)");
  for (double w : class_weights) {
    if (!(w > 0.0)) fail(ErrorKind::config, "class weights must be strictly positive");
  }
}

std::string TrainProtocol::digest_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "lr=" << initial_lr << ";bs=" << batch_size << ";decay=" << lr_decay_factor << ";lrp=" << lr_patience
     << ";esp=" << early_stop_patience << ";wd=" << weight_decay << ";epochs=" << max_epochs
     << ";holdout=" << holdout_fraction << ";seed=" << seed << ";cw=";
  for (double w : class_weights) os << w << ',';
  return os.str();
}

LossResult weighted_cross_entropy(const Tensor& scores, std::span<const int> labels, std::span<const double> weights) {
  if (scores.rank() != 2 || static_cast<std::size_t>(scores.dim(0)) != labels.size()) {
    fail(ErrorKind::dimension, "scores must be [batch, classes] with one label per row");
  }
  const int n = scores.dim(0), k = scores.dim(1);
  if (weights.size() != static_cast<std::size_t>(k)) fail(ErrorKind::dimension, "one class weight per class required");
  LossResult r;
  r.grad = Tensor({n, k});
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k) fail(ErrorKind::range, "label out of range in loss");
    const double* s = scores.data() + static_cast<std::size_t>(i) * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (!std::isfinite(s[c])) fail(ErrorKind::numeric, "non-finite class score");
      mx = std::max(mx, s[c]);
    }
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(s[c] - mx);
    const double log_z = mx + std::log(z);
    total += weights[y] * (log_z - s[y]);
    double* g = r.grad.data() + static_cast<std::size_t>(i) * k;
    for (int c = 0; c < k; ++c) {
      const double p = std::exp(s[c] - log_z);
      g[c] = weights[y] * (p - (c == y ? 1.0 : 0.0)) / n;
    }
  }
  r.loss = n ? total / n : 0.0;
  return r;
}

void adam_step(std::span<Param* const> params, AdamState& st, double lr, double weight_decay) {
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), {});
    st.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i]->size(), 0.0);
      st.v[i].assign(params[i]->size(), 0.0);
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    const double plr = lr * p.lr_scale;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g;
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g * g;
      if (p.decay && weight_decay > 0.0) p.value[j] -= plr * weight_decay * p.value[j];
      p.value[j] -= plr * (m[j] / c1) / (std::sqrt(v[j] / c2) + st.eps);
    }
  }
}

void calibrate_input(Network& model, const WindowedDataset& data) {
  if (model.input.enabled() || model.arch.input_bits == 0 || data.windows.empty()) return;
  const auto [lo, hi] = std::minmax_element(data.windows.begin(), data.windows.end());
  model.input = InputCalibration::from_range(*lo, *hi);
}

std::vector<int> predict_labels(const Network& model, const Tensor& x, double width) {
  const int n = x.dim(0);
  std::vector<int> out(n);
  constexpr int kChunk = 512;
  for (int start = 0; start < n; start += kChunk) {
    const int cnt = std::min(kChunk, n - start);
    std::vector<std::size_t> idx(cnt);
    Tensor part({cnt, x.dim(1), x.dim(2)});
    std::copy(x.data() + static_cast<std::size_t>(start) * x.dim(1) * x.dim(2),
              x.data() + static_cast<std::size_t>(start + cnt) * x.dim(1) * x.dim(2), part.data());
    const Tensor s = model.predict(part, width);
    const int k = s.dim(1);
    for (int i = 0; i < cnt; ++i) {
      const double* row = s.data() + static_cast<std::size_t>(i) * k;
      out[start + i] = static_cast<int>(std::max_element(row, row + k) - row);
    }
  }
  return out;
}

Metrics evaluate(const Network& model, const WindowedDataset& data, double width) {
  const auto pred = predict_labels(model, data.all(), width);
  return compute_metrics(pred, data.labels, data.n_classes);
}

namespace {

void clamp_alphas(Network& net) {
  for (QuantSite* s : net.sites()) {
    for (double& a : s->alpha.value) a = std::max(a, kMinAlpha);
  }
}

void check_finite(Network& net) {
  for (Param* p : net.params()) {
    for (double v : p->value) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "training diverged: non-finite parameter");
    }
  }
}

}  // namespace

Network train(Network model, const WindowedDataset& data, const TrainProtocol& protocol, const TrainOptions& options) {
  protocol.validate();
  data.validate();
  if (data.size() == 0) fail(ErrorKind::data, "training dataset is empty");
  if (data.channels != model.arch.in_channels || data.length != model.arch.length) {
    fail(ErrorKind::dimension, "dataset window shape does not match the architecture input");
  }
  if (data.n_classes != model.arch.n_classes) fail(ErrorKind::dimension, "dataset class count does not match the architecture");
  for (double w : options.widths) {
    for (const auto& b : model.blocks) b.bn.index_of(w);
  }
  if (options.widths.empty()) fail(ErrorKind::config, "at least one training width required");
  calibrate_input(model, data);
  if (protocol.max_epochs == 0) return model;

  auto [train_idx, hold_idx] = stratified_split(data.labels, data.n_classes, protocol.holdout_fraction, protocol.seed);
  if (train_idx.empty()) fail(ErrorKind::data, "no training samples left after the holdout split");
  if (hold_idx.empty()) hold_idx = train_idx;
  const WindowedDataset holdout = data.subset(hold_idx);
  std::vector<int> train_labels;
  for (auto i : train_idx) train_labels.push_back(data.labels[i]);
  const std::vector<double> weights =
      protocol.class_weights.empty() ? class_weights(train_labels, data.n_classes) : protocol.class_weights;
  if (weights.size() != static_cast<std::size_t>(data.n_classes)) fail(ErrorKind::config, "one class weight per class required");

  std::mt19937_64 rng(protocol.seed ^ 0x9e3779b97f4a7c15ull);
  AdamState adam;
  double lr = protocol.initial_lr;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_loss = 0;
  double best_score = -1.0;
  int best_epoch = 0;
  Network best = model;
  model.history.clear();

  for (int epoch = 1; epoch <= protocol.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += protocol.batch_size) {
      const std::size_t cnt = std::min<std::size_t>(protocol.batch_size, train_idx.size() - start);
      if (cnt < 2 && train_idx.size() > 1) continue;  // batch statistics need two samples
      const std::span<const std::size_t> idx(train_idx.data() + start, cnt);
      const Tensor x = data.batch(idx);
      std::vector<int> y(cnt);
      for (std::size_t i = 0; i < cnt; ++i) y[i] = data.labels[idx[i]];
      model.zero_grad();
      double batch_loss = 0.0;
      for (double w : options.widths) {
        NetCache cache;
        const Tensor scores = model.forward(x, w, Mode::train, &cache);
        const LossResult lr_res = weighted_cross_entropy(scores, y, weights);
        model.backward(cache, lr_res.grad);
        batch_loss += lr_res.loss;
      }
      batch_loss /= static_cast<double>(options.widths.size());
      if (options.extra) batch_loss += options.extra(model);
      auto params = model.params();
      adam_step(params, adam, lr, protocol.weight_decay);
      clamp_alphas(model);
      loss_sum += batch_loss * cnt;
      seen += cnt;
    }
    check_finite(model);
    const double epoch_loss = seen ? loss_sum / seen : 0.0;
    double score = 0.0;
    for (double w : options.widths) score += evaluate(model, holdout, w).balanced_accuracy;
    score /= static_cast<double>(options.widths.size());
    model.history.push_back({epoch, epoch_loss, score, lr});
    if (protocol.log) {
      *protocol.log << "epoch=" << epoch << " loss=" << epoch_loss << " holdout_bacc=" << score << " lr=" << lr << '\n';
    }
    if (score > best_score) {
      best_score = score;
      best_epoch = epoch;
      best = model;
    }
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      stale_loss = 0;
    } else if (++stale_loss >= protocol.lr_patience) {
      lr *= protocol.lr_decay_factor;
      stale_loss = 0;
    }
    if (options.early_stop && epoch - best_epoch >= protocol.early_stop_patience) break;
  }
  if (options.return_last) return model;
  best.history = model.history;
  return best;
}

Network train_fixed(Network model, const WindowedDataset& data, const TrainProtocol& protocol) {
  for (const QuantSite* s : model.sites()) {
    if (s->is_mixed()) fail(ErrorKind::state, "train_fixed needs a single bit-width per tensor");
  }
  return train(std::move(model), data, protocol, TrainOptions{});
}

Network train_slimmable(Network model, const WindowedDataset& data, const TrainProtocol& protocol,
                        const std::vector<double>& widths) {
  TrainOptions opt;
  opt.widths = widths;
  return train(std::move(model), data, protocol, opt);
}

}  // namespace shar
