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

// Packed integer engine (OpenMP over samples) against the serial scalar reference, per bit-width.

#include <benchmark/benchmark.h>

#include <random>

#include "shar/engine.hpp"
#include "shar/network.hpp"
#include "shar/reference.hpp"

namespace {

constexpr int kBatch = 64;

struct Fixture {
  shar::CompiledModel model;
  std::vector<std::uint8_t> input;
};

Fixture make_fixture(int bits) {
  shar::ArchConfig c;
  c.tmpl = shar::Template::B;
  c.c_out = {64, 64};
  c.k = 7;
  c.pool = {{true, 2}, {true, 2}};
  c.n_classes = 6;
  c.in_channels = 3;
  c.length = 64;
  c.set_uniform_bits(bits);
  shar::Network net = shar::Network::instantiate(c, 17);
  net.input = shar::InputCalibration::from_range(-3.0, 3.0);
  for (auto& b : net.blocks) b.conv.a_quant.alpha.value[0] = 2.0;
  Fixture f{shar::compile(net, {1.0}), {}};
  std::mt19937 rng(5);
  f.input.resize(f.model.input_size() * kBatch);
  for (auto& v : f.input) v = static_cast<std::uint8_t>(rng());
  return f;
}

void BM_IntegerForward(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto scores = shar::integer_forward(f.model, f.input, kBatch);
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() * kBatch);
}

void BM_ReferenceForward(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  const std::size_t stride = f.model.input_size();
  for (auto _ : state) {
    for (int i = 0; i < kBatch; ++i) {
      auto r = shar::reference_forward(f.model, std::span(f.input).subspan(i * stride, stride));
      benchmark::DoNotOptimize(r.scores.data());
    }
  }
  state.SetItemsProcessed(state.iterations() * kBatch);
}

}  // namespace

BENCHMARK(BM_IntegerForward)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime();
BENCHMARK(BM_ReferenceForward)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime();

BENCHMARK_MAIN();
