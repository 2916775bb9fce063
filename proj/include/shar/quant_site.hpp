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

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace shar {

// A trainable parameter vector with its gradient accumulator.
struct Param {
  std::vector<double> value;
  std::vector<double> grad;
  bool decay = false;    // decoupled weight decay applies
  double lr_scale = 1.0;  // multiplies the optimizer learning rate for this parameter

  Param() = default;
  explicit Param(std::size_t n, double fill = 0.0, bool decay_ = false)
      : value(n, fill), grad(n, 0.0), decay(decay_) {}
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

enum class SiteKind { weight, activation };

// Quantizer for one weight or activation tensor. A site holds one or more precision branches;
// the output is the softmax(logits)-weighted sum of every branch's fake-quantized image.
// One branch is the fixed-precision case, four branches ({1,2,4,8}) the searchable case.
// Branch bit-width 0 means float.
class QuantSite {
 public:
  SiteKind kind = SiteKind::activation;
  std::vector<int> bits;
  Param alpha;   // clip parameter per branch
  Param logits;  // branch logits
  std::size_t element_count = 0;  // elements of the underlying tensor (cost accounting)

  static QuantSite fixed(SiteKind kind, int bits, double alpha);
  static QuantSite mixed(SiteKind kind, std::vector<int> bits, double alpha);

  bool is_mixed() const { return bits.size() > 1; }
  int fixed_bits() const;
  std::vector<double> probabilities() const;

  double quantize_branch(double x, std::size_t branch) const;
  double quantize(double x) const;

  void forward(std::span<const double> in, std::span<double> out) const;
  // Adds d(loss)/d(in) into grad_in and accumulates alpha / logit gradients.
  void backward(std::span<const double> in, std::span<const double> grad_out, std::span<double> grad_in);
};

std::vector<double> softmax(std::span<const double> logits);

// Sum of f(i) over [0, n) computed in fixed-size blocks so the result does not depend on
// the number of OpenMP threads.
template <class F>
double blocked_sum(std::size_t n, F&& f);

}  // namespace shar

#include "shar/detail/blocked_sum.hpp"
