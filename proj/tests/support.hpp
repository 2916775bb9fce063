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

// Shared helpers for the unit tests: seeded random fills and central finite differences.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "shar/tensor.hpp"

namespace shar::test {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.values()) x = u(rng);
  return t;
}

// d f / d v[i] by central differences, restoring v[i] afterwards.
inline double central_difference(std::vector<double>& v, std::size_t i, const std::function<double()>& f,
                                 double h = 1e-5) {
  const double keep = v[i];
  v[i] = keep + h;
  const double up = f();
  v[i] = keep - h;
  const double down = f();
  v[i] = keep;
  return (up - down) / (2.0 * h);
}

// |a - b| relative to the larger magnitude, with an absolute floor for values near zero.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Dot product of a tensor with fixed random weights: turns a tensor output into a scalar loss.
inline double weighted_sum(const Tensor& t, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

inline Tensor as_tensor(const std::vector<double>& w, const std::vector<int>& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = w[i];
  return t;
}

}  // namespace shar::test
