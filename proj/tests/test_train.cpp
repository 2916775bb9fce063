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
#include <limits>
#include <random>

#include "shar/train.hpp"
#include "support.hpp"

using namespace shar;

namespace {

ArchConfig template_b_arch(int bits, int c = 16) {
  ArchConfig cfg;
  cfg.tmpl = Template::B;
  cfg.c_out = {c, c};
  cfg.k = 7;
  cfg.pool = {{true, 2}, {true, 2}};
  cfg.n_classes = 6;
  cfg.in_channels = 3;
  cfg.length = 64;
  cfg.set_uniform_bits(bits);
  return cfg;
}

WindowedDataset synth(int per_class, std::uint64_t seed, double easy = 1.0) {
  SynthOptions o;
  o.n_per_class = per_class;
  o.easy_fraction = easy;
  o.seed = seed;
  return synth_har(o);
}

bool same_params(Network& a, Network& b) {
  auto pa = a.params();
  auto pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value != pb[i]->value) return false;
  }
  return pa.size() == pb.size();
}

}  // namespace

TEST_CASE("weighted cross entropy examples") {
  Tensor s({1, 2});
  const std::vector<int> y{0};
  const std::vector<double> w{1.0, 1.0};
  CHECK(weighted_cross_entropy(s, y, w).loss == doctest::Approx(std::log(2.0)));

  Tensor confident({1, 3});
  confident[0] = 60.0;
  CHECK(weighted_cross_entropy(confident, y, std::vector<double>{1, 1, 1}).loss < 1e-20);

  std::mt19937_64 rng(51);
  const Tensor r = test::random_tensor({5, 4}, rng, -3, 3);
  const std::vector<int> labels{0, 3, 2, 1, 3};
  const std::vector<double> w1{1.0, 0.5, 2.0, 1.5}, w2{2.0, 1.0, 4.0, 3.0};
  CHECK(weighted_cross_entropy(r, labels, w2).loss ==
        doctest::Approx(2.0 * weighted_cross_entropy(r, labels, w1).loss));

  Tensor bad({1, 2});
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    weighted_cross_entropy(bad, y, w);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
}

TEST_CASE("cross entropy gradient matches finite differences") {
  std::mt19937_64 rng(52);
  const Tensor s = test::random_tensor({4, 5}, rng, -2, 2);
  const std::vector<int> labels{1, 4, 0, 1};
  const std::vector<double> w{0.5, 1.5, 1.0, 2.0, 0.7};
  const auto res = weighted_cross_entropy(s, labels, w);
  std::vector<double> sv(s.values().begin(), s.values().end());
  for (std::size_t i = 0; i < sv.size(); ++i) {
    const double fd = test::central_difference(sv, i, [&] {
      return weighted_cross_entropy(test::as_tensor(sv, s.shape()), labels, w).loss;
    });
    CHECK(test::relative_error(res.grad[i], fd) < 1e-4);
  }
}

TEST_CASE("adam steps") {
  Param p(3, 0.5);
  Param* ps[] = {&p};
  AdamState st;
  adam_step(ps, st, 1e-3, 0.0);
  for (double v : p.value) CHECK(v == 0.5);

  Param q(1, 2.0);
  q.grad = {1.0};
  Param* qs[] = {&q};
  AdamState st2;
  adam_step(qs, st2, 1e-3, 0.0);
  CHECK(q.value[0] - 2.0 == doctest::Approx(-1e-3).epsilon(1e-6));

  Param d(1, 2.0, true);
  Param* ds[] = {&d};
  AdamState st3;
  adam_step(ds, st3, 1e-2, 0.1);  // zero gradient: only the decoupled decay acts
  CHECK(d.value[0] == doctest::Approx(2.0 * (1.0 - 1e-2 * 0.1)));

  Param s(1, 0.0);
  s.grad = {1.0};
  s.lr_scale = 10.0;
  Param* ss[] = {&s};
  AdamState st4;
  adam_step(ss, st4, 1e-3, 0.0);
  CHECK(s.value[0] == doctest::Approx(-1e-2).epsilon(1e-6));
}

TEST_CASE("protocol validation") {
  TrainProtocol p;
  CHECK_NOTHROW(p.validate());
  p.lr_patience = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = TrainProtocol{};
  p.class_weights = {1.0, -1.0};
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("zero epochs returns the initialized model") {
  Network net = Network::instantiate(template_b_arch(8, 4), 3);
  TrainProtocol p;
  p.max_epochs = 0;
  Network out = train_fixed(net, synth(10, 1), p);
  CHECK(same_params(out, net));
  CHECK(out.history.empty());
}

TEST_CASE("empty dataset is a data error") {
  WindowedDataset empty;
  empty.channels = 3;
  empty.length = 64;
  empty.n_classes = 6;
  try {
    train_fixed(Network::instantiate(template_b_arch(8, 4), 0), empty, TrainProtocol{});
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("8-bit template B reaches 95% balanced accuracy on separable data") {
  const auto train = synth(100, 61);
  const auto test = synth(100, 62);
  TrainProtocol p;
  p.seed = 1;
  const Network net = train_fixed(Network::instantiate(template_b_arch(8), 1), train, p);
  CHECK(evaluate(net, test).balanced_accuracy >= 0.95);
  REQUIRE(net.history.size() >= 2);
  for (std::size_t e = 1; e < net.history.size(); ++e) CHECK(net.history[e].train_loss <= net.history[0].train_loss);
}

TEST_CASE("learning-rate decay follows the recorded training loss") {
  // A vanishing step size freezes the parameters; the epoch loss then only moves with the batch
  // composition, so stale stretches are frequent and the schedule fires.
  const auto train = synth(20, 63, 0.0);
  TrainProtocol p;
  p.seed = 2;
  p.max_epochs = 20;
  p.initial_lr = 1e-9;
  TrainOptions o;
  o.early_stop = false;
  o.return_last = true;
  const Network net = shar::train(Network::instantiate(template_b_arch(4, 8), 2), train, p, o);
  const auto& h = net.history;
  REQUIRE(h.size() == 20);
  double lr = p.initial_lr, best = std::numeric_limits<double>::infinity();
  int stale = 0, decays = 0;
  for (std::size_t e = 0; e < h.size(); ++e) {
    CHECK(h[e].epoch == static_cast<int>(e) + 1);
    CHECK(h[e].lr == doctest::Approx(lr).epsilon(1e-12));
    if (h[e].train_loss < best) {
      best = h[e].train_loss;
      stale = 0;
    } else if (++stale >= p.lr_patience) {
      CHECK(stale == 3);
      lr *= 0.1;
      stale = 0;
      ++decays;
    }
  }
  CHECK(decays >= 1);
}

TEST_CASE("early stop never runs more than five epochs past the best holdout score") {
  const auto train = synth(40, 63, 0.0);
  TrainProtocol p;
  p.seed = 2;
  p.max_epochs = 60;
  const Network net = train_fixed(Network::instantiate(template_b_arch(4, 8), 2), train, p);
  const auto& h = net.history;
  REQUIRE(!h.empty());
  std::size_t best_epoch = 0;
  for (std::size_t e = 0; e < h.size(); ++e) {
    if (h[e].holdout_score > h[best_epoch].holdout_score) best_epoch = e;
  }
  CHECK(h.size() - 1 - best_epoch <= 5);
  REQUIRE(h.size() < static_cast<std::size_t>(p.max_epochs));
  CHECK(h.size() - 1 - best_epoch == 5);
  // The returned snapshot is the best-holdout one.
  const auto split = stratified_split(train.labels, train.n_classes, p.holdout_fraction, p.seed);
  const double score = evaluate(net, train.subset(split.second)).balanced_accuracy;
  CHECK(score == doctest::Approx(h[best_epoch].holdout_score).epsilon(1e-12));
}

TEST_CASE("training is deterministic") {
  const auto train = synth(20, 64);
  TrainProtocol p;
  p.max_epochs = 3;
  p.seed = 5;
  Network a = train_fixed(Network::instantiate(template_b_arch(2, 8), 5), train, p);
  Network b = train_fixed(Network::instantiate(template_b_arch(2, 8), 5), train, p);
  CHECK(same_params(a, b));
  CHECK(network_to_json(a) == network_to_json(b));
}

TEST_CASE("float training loss decreases over the first epochs for both templates") {
  const auto train = synth(30, 65);
  for (Template t : {Template::A, Template::B}) {
    ArchConfig cfg = template_b_arch(0, 8);
    cfg.input_bits = 0;
    if (t == Template::A) {
      cfg.tmpl = Template::A;
      cfg.c_out = {8, 8, 8};
      cfg.pool = {{true, 2}, {true, 2}, {true, 2}};
      cfg.set_uniform_bits(0);
    }
    TrainProtocol p;
    p.max_epochs = 5;
    p.seed = 3;
    TrainOptions o;
    o.early_stop = false;
    o.return_last = true;
    const Network net = shar::train(Network::instantiate(cfg, 3), train, p, o);
    REQUIRE(net.history.size() == 5);
    CHECK(net.history[4].train_loss < net.history[0].train_loss);
  }
}

TEST_CASE("slimmable gradients are the sum of per-width gradients") {
  const auto data = synth(4, 66);
  Network net = Network::instantiate(template_b_arch(8, 8), 4);
  calibrate_input(net, data);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor x = data.batch(idx);
  const auto w = class_weights(data.labels, data.n_classes);

  auto grads_of = [&](Network& m) {
    std::vector<std::vector<double>> g;
    for (Param* p : m.params()) g.push_back(p->grad);
    return g;
  };
  auto run = [&](Network& m, double width) {
    NetCache cache;
    const Tensor s = m.forward(x, width, Mode::train, &cache);
    m.backward(cache, weighted_cross_entropy(s, data.labels, w).grad);
  };

  std::vector<std::vector<double>> sum;
  for (double width : kSupportedWidths) {
    Network m = net;
    m.zero_grad();
    run(m, width);
    const auto g = grads_of(m);
    if (sum.empty()) sum = g;
    else {
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < g[i].size(); ++j) sum[i][j] += g[i][j];
      }
    }
  }
  Network joint = net;
  joint.zero_grad();
  for (double width : kSupportedWidths) run(joint, width);
  const auto g = grads_of(joint);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < g[i].size(); ++j) CHECK(g[i][j] == doctest::Approx(sum[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("slimmable training keeps private BatchNorm statistics per width") {
  const auto train = synth(30, 67);
  TrainProtocol p;
  p.max_epochs = 4;
  p.seed = 6;
  const Network net = train_slimmable(Network::instantiate(template_b_arch(8, 8), 6), train, p);
  const auto& bn = net.blocks.back().bn;
  const auto& small = bn.entries[bn.index_of(0.25)];
  const auto& full = bn.entries[bn.index_of(1.0)];
  bool differs = false;
  for (std::size_t c = 0; c < small.running_mean.size(); ++c) {
    if (std::abs(small.running_mean[c] - full.running_mean[c]) > 1e-9) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("slimmable training with only full width reduces to fixed training") {
  const auto train = synth(15, 68);
  TrainProtocol p;
  p.max_epochs = 3;
  p.seed = 7;
  Network a = train_slimmable(Network::instantiate(template_b_arch(4, 8), 7), train, p, {1.0});
  Network b = train_fixed(Network::instantiate(template_b_arch(4, 8), 7), train, p);
  CHECK(same_params(a, b));
}

TEST_CASE("slimmable training rejects widths without a BatchNorm bank") {
  TrainProtocol p;
  p.max_epochs = 1;
  CHECK_THROWS_AS(train_slimmable(Network::instantiate(template_b_arch(8, 4), 0), synth(5, 1), p, {0.75}), Error);
}

TEST_CASE("input calibration follows the training range") {
  const auto data = synth(5, 69);
  Network net = Network::instantiate(template_b_arch(8, 4), 0);
  calibrate_input(net, data);
  REQUIRE(net.input.enabled());
  const auto [lo, hi] = std::minmax_element(data.windows.begin(), data.windows.end());
  CHECK(net.input.fake_quant(*hi) == doctest::Approx(*hi).epsilon(0.01));
  CHECK(net.input.fake_quant(*lo) == doctest::Approx(*lo).epsilon(0.01));
}
