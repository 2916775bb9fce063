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

#include "shar/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "shar/error.hpp"
#include "shar/quantize.hpp"

namespace shar {

using nlohmann::json;

InputCalibration InputCalibration::from_range(double lo, double hi) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (!(hi > lo)) hi = lo + 1.0;
  InputCalibration c;
  c.scale = (hi - lo) / 255.0;
  c.zero_point = static_cast<int>(std::clamp(round_half_away(-lo / c.scale), 0.0, 255.0));
  return c;
}

std::uint8_t InputCalibration::code(double x) const {
  const double u = round_half_away(x / scale) + zero_point;
  return static_cast<std::uint8_t>(std::clamp(u, 0.0, 255.0));
}

double InputCalibration::fake_quant(double x) const { return scale * (static_cast<int>(code(x)) - zero_point); }

double initial_act_alpha(int bits) { return bits == 1 || bits == 2 ? 2.0 : 8.0; }

Network Network::instantiate(const ArchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network net;
  net.arch = cfg;
  std::mt19937_64 rng(seed);
  auto init_uniform = [&](Param& p, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.value) v = dist(rng);
  };
  auto max_abs = [](const Param& p) {
    double m = 0.0;
    for (double v : p.value) m = std::max(m, std::abs(v));
    return m > 0.0 ? m : 1.0;
  };

  const auto lens = cfg.block_lengths();
  int c_in = cfg.in_channels;
  int len_in = cfg.length;
  for (int l = 0; l < cfg.conv_count(); ++l) {
    ConvBlock b;
    b.conv = Conv1DLayer(c_in, cfg.c_out[l], cfg.k);
    init_uniform(b.conv.weight, c_in * cfg.k);
    b.conv.w_quant = QuantSite::fixed(SiteKind::weight, cfg.weight_bits[l], max_abs(b.conv.weight));
    b.conv.w_quant.element_count = b.conv.weight.size();
    b.conv.a_quant = QuantSite::fixed(SiteKind::activation, cfg.act_bits[l], initial_act_alpha(cfg.act_bits[l]));
    b.conv.a_quant.element_count = static_cast<std::size_t>(cfg.c_out[l]) * len_in;
    b.bn = BatchNormBank(cfg.c_out[l], kSupportedWidths);
    b.pool = MaxPool1DLayer{cfg.pool[l].present, cfg.pool[l].size};
    net.blocks.push_back(std::move(b));
    c_in = cfg.c_out[l];
    len_in = lens[l];
  }
  net.fc = FCLayer(cfg.fc_in_features(), cfg.n_classes);
  init_uniform(net.fc.weight, net.fc.in_features);
  net.fc.w_quant = QuantSite::fixed(SiteKind::weight, cfg.weight_bits.back(), max_abs(net.fc.weight));
  net.fc.w_quant.element_count = net.fc.weight.size();
  return net;
}

namespace {

void check_input(const Network& net, const Tensor& x) {
  if (x.rank() != 3 || x.dim(1) != net.arch.in_channels || x.dim(2) != net.arch.length) {
    fail(ErrorKind::dimension, "network expects [N, " + std::to_string(net.arch.in_channels) + ", " +
                                   std::to_string(net.arch.length) + "] input");
  }
}

Tensor quantize_input(const Network& net, const Tensor& x) {
  if (!net.input.enabled() || net.arch.input_bits == 0) return x;
  Tensor q = x;
  for (double& v : q.values()) v = net.input.fake_quant(v);
  return q;
}

Tensor apply_site(const QuantSite& site, const Tensor& y) {
  Tensor a(y.shape());
  site.forward(y.values(), a.values());
  return a;
}

}  // namespace

Tensor Network::forward(const Tensor& x, double width, Mode mode, NetCache* cache) {
  check_input(*this, x);
  Tensor h = quantize_input(*this, x);
  if (cache) {
    cache->input = h;
    cache->width = width;
    cache->conv.assign(blocks.size(), {});
    cache->bn.assign(blocks.size(), {});
    cache->pre_act.assign(blocks.size(), {});
    cache->pool.assign(blocks.size(), {});
  }
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    auto& b = blocks[l];
    Tensor z = conv1d_forward(h, b.conv, width, cache ? &cache->conv[l] : nullptr);
    Tensor y = batchnorm_forward(z, b.bn, width, mode, cache ? &cache->bn[l] : nullptr);
    Tensor a = apply_site(b.conv.a_quant, y);
    if (cache) cache->pre_act[l] = std::move(y);
    h = maxpool_forward(a, b.pool, cache ? &cache->pool[l] : nullptr);
  }
  if (cache) cache->block_lengths = {h.dim(1), h.dim(2)};
  return fc_forward(h, fc, cache ? &cache->fc : nullptr);
}

Tensor Network::predict(const Tensor& x, double width) const {
  check_input(*this, x);
  Tensor h = quantize_input(*this, x);
  for (const auto& b : blocks) {
    Tensor z = conv1d_forward(h, b.conv, width);
    Tensor y = batchnorm_forward(z, b.bn, width);
    h = maxpool_forward(apply_site(b.conv.a_quant, y), b.pool);
  }
  return fc_forward(h, fc);
}

void Network::backward(const NetCache& cache, const Tensor& grad_scores) {
  if (cache.conv.size() != blocks.size() || !cache.fc.valid) fail(ErrorKind::state, "network backward without a forward cache");
  Tensor g = fc_backward(grad_scores, cache.fc, fc);
  g = g.reshaped({g.dim(0), cache.block_lengths[0], cache.block_lengths[1]});
  for (std::size_t l = blocks.size(); l-- > 0;) {
    auto& b = blocks[l];
    g = maxpool_backward(g, cache.pool[l]);
    Tensor ga(g.shape());
    b.conv.a_quant.backward(cache.pre_act[l].values(), g.values(), ga.values());
    g = batchnorm_backward(ga, cache.bn[l], b.bn);
    g = conv1d_backward(g, cache.conv[l], b.conv).grad_x;
  }
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  auto add_site = [&](QuantSite& s) {
    out.push_back(&s.alpha);
    out.push_back(&s.logits);
  };
  for (auto& b : blocks) {
    out.push_back(&b.conv.weight);
    out.push_back(&b.conv.bias);
    add_site(b.conv.w_quant);
    add_site(b.conv.a_quant);
    for (auto& e : b.bn.entries) {
      out.push_back(&e.gamma);
      out.push_back(&e.beta);
    }
  }
  out.push_back(&fc.weight);
  out.push_back(&fc.bias);
  add_site(fc.w_quant);
  return out;
}

std::vector<QuantSite*> Network::sites() {
  std::vector<QuantSite*> out;
  for (auto& b : blocks) {
    out.push_back(&b.conv.w_quant);
    out.push_back(&b.conv.a_quant);
  }
  out.push_back(&fc.w_quant);
  return out;
}

std::vector<const QuantSite*> Network::sites() const {
  std::vector<const QuantSite*> out;
  for (const auto& b : blocks) {
    out.push_back(&b.conv.w_quant);
    out.push_back(&b.conv.a_quant);
  }
  out.push_back(&fc.w_quant);
  return out;
}

void Network::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

void Network::sync_arch_bits() {
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    arch.weight_bits[l] = blocks[l].conv.w_quant.fixed_bits();
    arch.act_bits[l] = blocks[l].conv.a_quant.fixed_bits();
  }
  arch.weight_bits.back() = fc.w_quant.fixed_bits();
}

// ---- JSON ----------------------------------------------------------------------------------

namespace {

json site_json(const QuantSite& s) {
  return json{{"kind", s.kind == SiteKind::weight ? "weight" : "activation"},
              {"bits", s.bits},
              {"alpha", s.alpha.value},
              {"logits", s.logits.value},
              {"element_count", s.element_count}};
}

QuantSite site_from(const json& j) {
  QuantSite s = QuantSite::mixed(j.at("kind") == "weight" ? SiteKind::weight : SiteKind::activation,
                                 j.at("bits").get<std::vector<int>>(), 1.0);
  s.alpha.value = j.at("alpha").get<std::vector<double>>();
  s.logits.value = j.at("logits").get<std::vector<double>>();
  if (s.alpha.size() != s.bits.size() || s.logits.size() != s.bits.size()) {
    fail(ErrorKind::format, "quantization site arrays disagree with its branch count");
  }
  s.element_count = j.at("element_count").get<std::size_t>();
  return s;
}

void load_param(Param& p, const json& j) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != p.size()) fail(ErrorKind::format, "parameter array has the wrong length");
  p.value = std::move(v);
}

}  // namespace

std::string network_to_json(const Network& net) {
  json j;
  j["format"] = "subbyte-har-model";
  j["version"] = 1;
  j["arch"] = to_config_text(net.arch);
  j["input"] = {{"scale", net.input.scale}, {"zero_point", net.input.zero_point}};
  json blocks = json::array();
  for (const auto& b : net.blocks) {
    json bn_entries = json::array();
    for (const auto& e : b.bn.entries) {
      bn_entries.push_back({{"width", e.width},
                            {"gamma", e.gamma.value},
                            {"beta", e.beta.value},
                            {"running_mean", e.running_mean},
                            {"running_var", e.running_var}});
    }
    blocks.push_back({{"weight", b.conv.weight.value},
                      {"bias", b.conv.bias.value},
                      {"w_quant", site_json(b.conv.w_quant)},
                      {"a_quant", site_json(b.conv.a_quant)},
                      {"bn", {{"eps", b.bn.eps}, {"momentum", b.bn.momentum}, {"entries", bn_entries}}}});
  }
  j["blocks"] = blocks;
  j["fc"] = {{"weight", net.fc.weight.value}, {"bias", net.fc.bias.value}, {"w_quant", site_json(net.fc.w_quant)}};
  json hist = json::array();
  for (const auto& h : net.history) {
    hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"holdout_score", h.holdout_score}, {"lr", h.lr}});
  }
  j["history"] = hist;
  return j.dump(1);
}

Network network_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "subbyte-har-model") fail(ErrorKind::format, "not a subbyte-har model file");
    if (j.at("version") != 1) fail(ErrorKind::format, "unsupported model file version");
    Network net = Network::instantiate(parse_arch_config(j.at("arch").get<std::string>()), 0);
    net.input.scale = j.at("input").at("scale").get<double>();
    net.input.zero_point = j.at("input").at("zero_point").get<int>();
    const auto& blocks = j.at("blocks");
    if (blocks.size() != net.blocks.size()) fail(ErrorKind::format, "model file block count disagrees with its architecture");
    for (std::size_t l = 0; l < net.blocks.size(); ++l) {
      auto& b = net.blocks[l];
      const auto& jb = blocks[l];
      load_param(b.conv.weight, jb.at("weight"));
      load_param(b.conv.bias, jb.at("bias"));
      b.conv.w_quant = site_from(jb.at("w_quant"));
      b.conv.a_quant = site_from(jb.at("a_quant"));
      b.bn.eps = jb.at("bn").at("eps").get<double>();
      b.bn.momentum = jb.at("bn").at("momentum").get<double>();
      const auto& entries = jb.at("bn").at("entries");
      if (entries.size() != b.bn.entries.size()) fail(ErrorKind::format, "BatchNorm bank size mismatch");
      for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& e = b.bn.entries[i];
        e.width = entries[i].at("width").get<double>();
        load_param(e.gamma, entries[i].at("gamma"));
        load_param(e.beta, entries[i].at("beta"));
        e.running_mean = entries[i].at("running_mean").get<std::vector<double>>();
        e.running_var = entries[i].at("running_var").get<std::vector<double>>();
        if (e.running_mean.size() != e.gamma.size() || e.running_var.size() != e.gamma.size()) {
          fail(ErrorKind::format, "BatchNorm running statistics have the wrong length");
        }
      }
    }
    load_param(net.fc.weight, j.at("fc").at("weight"));
    load_param(net.fc.bias, j.at("fc").at("bias"));
    net.fc.w_quant = site_from(j.at("fc").at("w_quant"));
    for (const auto& h : j.at("history")) {
      net.history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                             h.at("holdout_score").get<double>(), h.at("lr").get<double>()});
    }
    return net;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed model file: ") + e.what());
  }
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path);
  os << network_to_json(net) << "\n";
  if (!os) fail(ErrorKind::io, "failed writing " + path);
}

Network load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return network_from_json(ss.str());
}

}  // namespace shar
