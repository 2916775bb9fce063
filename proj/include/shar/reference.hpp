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

// Scalar integer reference for the packed engine: one sample, plain loops, bit-by-bit field
// extraction, ±1 multiplication instead of XNOR, and 128-bit requantization arithmetic.
// Serves as the oracle for integer_forward and as the serial baseline of the benchmark.

#include <cstdint>
#include <span>
#include <vector>

#include "shar/engine.hpp"

namespace shar {

struct ReferenceResult {
  std::vector<std::int64_t> scores;
  std::vector<std::vector<std::int64_t>> acc;  // per layer, pre-requant accumulators
};

ReferenceResult reference_forward(const CompiledModel& cm, std::span<const std::uint8_t> sample, double width = 1.0);

}  // namespace shar
