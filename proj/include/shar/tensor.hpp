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

#include <cstddef>
#include <algorithm>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "shar/error.hpp"

namespace shar {

// Dense row-major array of doubles. Activations use the [batch, channels, length] layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(std::initializer_list<int> shape, double fill = 0.0)
      : Tensor(std::vector<int>(shape), fill) {}

  const std::vector<int>& shape() const noexcept { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(int n, int c, int l) noexcept { return data_[offset(n, c, l)]; }
  double at(int n, int c, int l) const noexcept { return data_[offset(n, c, l)]; }

  double* row(int n, int c) noexcept { return data_.data() + offset(n, c, 0); }
  const double* row(int n, int c) const noexcept { return data_.data() + offset(n, c, 0); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  // Same data, new shape with an equal element count.
  Tensor reshaped(std::vector<int> shape) const {
    if (element_count(shape) != data_.size()) fail(ErrorKind::dimension, "reshape changes the element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  static std::size_t element_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) fail(ErrorKind::dimension, "negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

 private:
  std::size_t offset(int n, int c, int l) const noexcept {
    return (static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + l;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace shar
