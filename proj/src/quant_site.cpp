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

#include "shar/quant_site.hpp"

#include <cmath>

#include "shar/error.hpp"
#include "shar/quantize.hpp"

namespace shar {

namespace {

QuantGrad branch_grad(const QuantSite& s, double x, std::size_t b) {
  if (s.kind == SiteKind::weight) return fake_quant_weight_grad(x, WeightQuantizer{s.bits[b], s.alpha.value[b]});
  return fake_quant_act_grad(x, ActQuantizer{s.bits[b], s.alpha.value[b]});
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

QuantSite QuantSite::fixed(SiteKind kind, int bits, double alpha) { return mixed(kind, {bits}, alpha); }

QuantSite QuantSite::mixed(SiteKind kind, std::vector<int> bits, double alpha) {
  if (bits.empty()) fail(ErrorKind::config, "quantization site needs at least one branch");
  QuantSite s;
  s.kind = kind;
  s.bits = std::move(bits);
  s.alpha = Param(s.bits.size(), alpha);
  s.logits = Param(s.bits.size(), 0.0);
  return s;
}

int QuantSite::fixed_bits() const {
  if (is_mixed()) fail(ErrorKind::state, "mixed-precision site has no single bit-width");
  return bits.front();
}

std::vector<double> QuantSite::probabilities() const { return softmax(logits.value); }

double QuantSite::quantize_branch(double x, std::size_t b) const {
  if (kind == SiteKind::weight) return fake_quant_weight(x, WeightQuantizer{bits[b], alpha.value[b]});
  return fake_quant_act(x, ActQuantizer{bits[b], alpha.value[b]});
}

double QuantSite::quantize(double x) const {
  if (!is_mixed()) return quantize_branch(x, 0);
  const auto p = probabilities();
  double y = 0.0;
  for (std::size_t b = 0; b < bits.size(); ++b) y += p[b] * quantize_branch(x, b);
  return y;
}

void QuantSite::forward(std::span<const double> in, std::span<double> out) const {
  if (in.size() != out.size()) fail(ErrorKind::dimension, "quantization site input/output size mismatch");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
  if (!is_mixed()) {
#pragma omp parallel for schedule(static) if (n > 8192)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = quantize_branch(in[i], 0);
    return;
  }
  const auto p = probabilities();
#pragma omp parallel for schedule(static) if (n > 8192)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double y = 0.0;
    for (std::size_t b = 0; b < bits.size(); ++b) y += p[b] * quantize_branch(in[i], b);
    out[i] = y;
  }
}

void QuantSite::backward(std::span<const double> in, std::span<const double> grad_out, std::span<double> grad_in) {
  if (in.size() != grad_out.size() || in.size() != grad_in.size()) {
    fail(ErrorKind::dimension, "quantization site gradient size mismatch");
  }
  const std::size_t nb = bits.size();
  const auto p = probabilities();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());

#pragma omp parallel for schedule(static) if (n > 8192)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t b = 0; b < nb; ++b) d += p[b] * branch_grad(*this, in[i], b).dx;
    grad_in[i] += grad_out[i] * d;
  }

  for (std::size_t b = 0; b < nb; ++b) {
    alpha.grad[b] += p[b] * blocked_sum(in.size(), [&](std::size_t i) {
      return grad_out[i] == 0.0 ? 0.0 : grad_out[i] * branch_grad(*this, in[i], b).dalpha;
    });
  }
  if (nb < 2) return;

  // d out / d logit_j = p_j * (q_j(x) - out(x))
  for (std::size_t j = 0; j < nb; ++j) {
    logits.grad[j] += p[j] * blocked_sum(in.size(), [&](std::size_t i) {
      if (grad_out[i] == 0.0) return 0.0;
      double mix = 0.0;
      for (std::size_t b = 0; b < nb; ++b) mix += p[b] * quantize_branch(in[i], b);
      return grad_out[i] * (quantize_branch(in[i], j) - mix);
    });
  }
}

}  // namespace shar
