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

#include <doctest.h>

#include <cmath>
#include <random>

#include "shar/engine.hpp"
#include "shar/nas.hpp"
#include "shar/train.hpp"
#include "support.hpp"

using namespace shar;

namespace {

constexpr double kOff = -1000.0;  // softmax weight exactly 0 in double precision

QuantSite weight_site(std::vector<double> logits, std::size_t count, double alpha = 1.0) {
  QuantSite s = QuantSite::mixed(SiteKind::weight, {1, 2, 4, 8}, alpha);
  s.logits.value = std::move(logits);
  s.element_count = count;
  return s;
}

ArchConfig small_arch(int c = 4) {
  ArchConfig cfg;
  cfg.tmpl = Template::B;
  cfg.c_out = {c, c};
  cfg.k = 7;
  cfg.pool = {{true, 2}, {true, 2}};
  cfg.n_classes = 6;
  cfg.in_channels = 3;
  cfg.length = 64;
  cfg.set_uniform_bits(8);
  return cfg;
}

WindowedDataset synth(int per_class, std::uint64_t seed) {
  SynthOptions o;
  o.n_per_class = per_class;
  o.seed = seed;
  return synth_har(o);
}

// Gradient descent on the branch logits (and clip values) of one site so that its mixed output
// reconstructs `target`, with the size penalty lambda * expected_bits. Returns the argmax bits.
int reconstruct(SiteKind kind, const std::vector<double>& input, const std::vector<double>& target, double lambda) {
  QuantSite s = QuantSite::mixed(kind, {1, 2, 4, 8}, kind == SiteKind::weight ? 1.0 : 2.0);
  s.element_count = input.size();
  Param* ps[] = {&s.logits, &s.alpha};
  AdamState st;
  std::vector<double> out(input.size()), grad_in(input.size());
  for (int it = 0; it < 400; ++it) {
    s.logits.zero_grad();
    s.alpha.zero_grad();
    s.forward(input, out);
    std::vector<double> g(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) g[i] = 2.0 * (out[i] - target[i]) / out.size();
    s.backward(input, g, grad_in);
    QuantSite* sp[] = {&s};
    add_cost_gradient(sp, lambda);
    adam_step(ps, st, 0.05, 0.0);
    for (double& a : s.alpha.value) a = std::max(a, kMinAlpha);
  }
  const auto p = s.probabilities();
  std::size_t best = 0;
  for (std::size_t b = 1; b < p.size(); ++b) {
    if (p[b] > p[best]) best = b;
  }
  return s.bits[best];
}

}  // namespace

TEST_CASE("expected bits hand values") {
  CHECK(expected_bits(weight_site({0, 0, 0, 0}, 100)) == doctest::Approx((1 + 2 + 4 + 8) / 4.0 * 100));
  CHECK(expected_bits(weight_site({0, 0, 0, 0}, 100)) == doctest::Approx(375.0));
  CHECK(expected_bits(weight_site({kOff, kOff, kOff, 0}, 64)) == 512.0);
  CHECK(expected_bits(weight_site({0, 0, kOff, kOff}, 64)) == doctest::Approx(0.5 * 64 + 0.5 * 2 * 64));
  CHECK(expected_bits(weight_site({0, 0, kOff, kOff}, 64)) == doctest::Approx(96.0));
}

TEST_CASE("regularized loss hand values") {
  const QuantSite s = weight_site({kOff, kOff, kOff, 0}, 64);
  const QuantSite* sp[] = {&s};
  CHECK(nas_loss(1.0, sp, 0.0) == 1.0);
  CHECK(nas_loss(1.0, sp, 0.001) == doctest::Approx(1.512));
  double prev = nas_loss(0.3, sp, 0.0);
  for (double l : {1e-4, 1e-3, 1e-2, 1.0}) {
    const double cur = nas_loss(0.3, sp, l);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("expected bits gradient matches finite differences") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    QuantSite s = weight_site(test::random_vector(4, rng, -2, 2), 10 + rng() % 100);
    const auto g = expected_bits_grad(s);
    for (std::size_t j = 0; j < 4; ++j) {
      const double fd = test::central_difference(s.logits.value, j, [&] { return expected_bits(s); });
      CHECK(test::relative_error(g[j], fd, 1e-3) < 1e-4);
    }
    // add_cost_gradient adds lambda times the same gradient and returns lambda * cost.
    s.logits.zero_grad();
    QuantSite* sp[] = {&s};
    CHECK(add_cost_gradient(sp, 0.5) == doctest::Approx(0.5 * expected_bits(s)));
    for (std::size_t j = 0; j < 4; ++j) CHECK(s.logits.grad[j] == doctest::Approx(0.5 * g[j]));
  }
}

TEST_CASE("mixed weight examples") {
  const std::vector<double> w{0.7, -0.3, 0.05};
  const QuantSite one_hot = weight_site({0, kOff, kOff, kOff}, 3);
  CHECK(mixed_weight(one_hot, w) == fake_quant_weight(w, WeightQuantizer{1, 1.0}));

  const std::vector<double> on_grid{-1.0};  // -alpha is a level of every grid
  CHECK(mixed_weight(weight_site({0, 0, 0, 0}, 1), on_grid)[0] == doctest::Approx(-1.0));

  QuantSite half = weight_site({0, 0, kOff, kOff}, 1);
  half.alpha.value = {0.9, 1.1, 1.0, 1.0};
  const double w1 = fake_quant_weight(0.7, WeightQuantizer{1, 0.9});
  const double w2 = fake_quant_weight(0.7, WeightQuantizer{2, 1.1});
  const std::vector<double> x{0.7};
  CHECK(mixed_weight(half, x)[0] == doctest::Approx(0.5 * w1 + 0.5 * w2));
}

TEST_CASE("mixing is convex") {
  std::mt19937_64 rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    QuantSite s = weight_site(test::random_vector(4, rng, -3, 3), 20);
    s.alpha.value = test::random_vector(4, rng, 0.2, 1.5);
    const auto w = test::random_vector(20, rng, -2, 2);
    const auto mixed = mixed_weight(s, w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t b = 0; b < 4; ++b) {
        const double v = fake_quant_weight(w[i], WeightQuantizer{s.bits[b], s.alpha.value[b]});
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(mixed[i] >= lo - 1e-12);
      CHECK(mixed[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("site gradients of a mixed weight match finite differences") {
  std::mt19937_64 rng(73);
  QuantSite s = weight_site(test::random_vector(4, rng, -1, 1), 16);
  auto w = test::random_vector(16, rng, -0.9, 0.9);
  const auto g = test::random_vector(16, rng);
  std::vector<double> grad_in(16, 0.0);
  s.logits.zero_grad();
  s.backward(w, g, grad_in);
  auto loss = [&] {
    const auto y = mixed_weight(s, w);
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l += g[i] * y[i];
    return l;
  };
  // Rounded outputs are piecewise constant in the input, so the logits are the exact check.
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(test::relative_error(s.logits.grad[j], test::central_difference(s.logits.value, j, loss)) < 1e-4);
  }
}

TEST_CASE("extraction picks the argmax branch with ties toward fewer bits") {
  Network base = Network::instantiate(small_arch(), 1);
  Network mixed = make_mixed(base, {1, 2, 4, 8});
  auto sites = mixed.sites();
  REQUIRE(sites.size() == 5);
  for (QuantSite* s : sites) REQUIRE(s->is_mixed());
  sites[0]->logits.value = {10, 0, 0, 0};
  sites[1]->logits.value = {0, 3, 3, 0};
  sites[2]->logits.value = {0, 0, 0, 5};
  sites[3]->logits.value = {1, 1, 1, 1};
  sites[4]->logits.value = {0, 0, 2, 0};
  const ArchConfig arch = extract_fixed(mixed);
  CHECK(arch.weight_bits == std::vector<int>{1, 8, 4});
  CHECK(arch.act_bits == std::vector<int>{2, 1});
  CHECK(arch.input_bits == 8);

  const Network fixed = fix_sites(mixed, arch);
  CHECK(fixed.blocks[0].conv.w_quant.fixed_bits() == 1);
  CHECK(fixed.blocks[0].conv.w_quant.alpha.value[0] == mixed.blocks[0].conv.w_quant.alpha.value[0]);
  CHECK(fixed.blocks[0].conv.a_quant.alpha.value[0] == mixed.blocks[0].conv.a_quant.alpha.value[1]);
  CHECK(fixed.fc.w_quant.alpha.value[0] == mixed.fc.w_quant.alpha.value[2]);
}

TEST_CASE("cost of a fixed assignment equals the sum of site bits") {
  Network net = Network::instantiate(small_arch(8), 2);
  const ArchConfig arch = [] {
    ArchConfig a = small_arch(8);
    a.weight_bits = {2, 4, 1};
    a.act_bits = {8, 2};
    return a;
  }();
  Network mixed = make_mixed(net, {1, 2, 4, 8});
  const Network fixed = fix_sites(mixed, arch);
  const auto sites = fixed.sites();
  CHECK(cost_bits(sites) == doctest::Approx(model_bits(arch)));
  // Weights: 8*3*7 at 2 bits, 8*8*7 at 4 bits, (8*16)*6 at 1 bit. Activations: c_out * L_in.
  const double want = 8 * 3 * 7 * 2 + 8 * 8 * 7 * 4 + 8 * 16 * 6 * 1 + 8 * 64 * 8 + 8 * 32 * 2;
  CHECK(model_bits(arch) == doctest::Approx(want));
}

TEST_CASE("size penalty decides the reconstruction task at both extremes") {
  std::mt19937_64 rng(74);
  const auto w = test::random_vector(200, rng, -0.9, 0.9);
  CHECK(reconstruct(SiteKind::weight, w, w, 0.0) == 8);
  CHECK(reconstruct(SiteKind::weight, w, w, 1.0) == 1);
  const auto x = test::random_vector(200, rng, 0.0, 1.9);
  CHECK(reconstruct(SiteKind::activation, x, x, 0.0) == 8);
  CHECK(reconstruct(SiteKind::activation, x, x, 1.0) == 1);
}

TEST_CASE("default lambda sweep") {
  const auto s = NasConfig::default_sweep();
  REQUIRE(s.size() == 10);
  CHECK(s.front() == doctest::Approx(1e-4));
  CHECK(s.back() == doctest::Approx(1e-3));
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] - s[i - 1] == doctest::Approx(1e-4));
  NasConfig bad;
  bad.lambda_sweep.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = NasConfig{};
  bad.lambda_sweep = {-1.0};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("search produces one deployable record per lambda") {
  const auto data = synth(12, 75);
  TrainProtocol p;
  p.max_epochs = 2;
  p.seed = 3;
  const Network base = train_fixed(Network::instantiate(small_arch(), 3), data, p);
  NasConfig nas;
  nas.lambda_sweep = {0.0, 1.0};
  nas.search_epochs = 3;
  const auto results = nas_search(base, data, p, nas);
  REQUIRE(results.size() == 2);
  for (const auto& r : results) {
    CHECK(r.arch.input_bits == 8);
    CHECK(r.model.arch == r.arch);
    CHECK(r.model_bits == doctest::Approx(model_bits(r.arch)));
    const CompiledModel cm = compile(r.model);
    CHECK(cost_report(cm).memory_bytes == estimate_cost(r.arch, 1.0).memory_bytes);
  }
  CHECK(results[1].arch.weight_bits == std::vector<int>{1, 1, 1});
  CHECK(results[1].arch.act_bits == std::vector<int>{1, 1});
  CHECK(results[1].model_bits <= results[0].model_bits);
  const std::string csv = sweep_report_csv(results);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
