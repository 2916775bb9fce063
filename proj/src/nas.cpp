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

#include "shar/nas.hpp"

#include <cmath>
#include <sstream>

#include "shar/error.hpp"
#include "shar/quantize.hpp"

namespace shar {

std::vector<double> NasConfig::default_sweep() {
  std::vector<double> v(10);
  for (int i = 0; i < 10; ++i) v[i] = 1e-4 + i * (1e-3 - 1e-4) / 9.0;
  return v;
}

void NasConfig::validate() const {
  if (lambda < 0.0) fail(ErrorKind::config, "lambda must be non-negative");
  if (lambda_sweep.empty()) fail(ErrorKind::config, "lambda sweep must not be empty");
  for (double l : lambda_sweep) {
    if (l < 0.0) fail(ErrorKind::config, "lambda must be non-negative");
  }
  if (branches.empty()) fail(ErrorKind::config, "at least one precision branch required");
  for (int b : branches) {
    if (!is_supported_bits(b)) fail(ErrorKind::config, "unsupported branch bit-width " + std::to_string(b));
  }
  if (search_epochs < 1) fail(ErrorKind::config, "search_epochs must be positive");
  if (!(logit_lr_scale > 0.0)) fail(ErrorKind::config, "logit learning-rate scale must be positive");
}

std::vector<double> mixed_weight(const QuantSite& site, std::span<const double> w) {
  std::vector<double> out(w.size());
  site.forward(w, out);
  return out;
}

double expected_bits(const QuantSite& site) {
  const auto p = site.probabilities();
  double e = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) e += p[b] * site.bits[b];
  return e * static_cast<double>(site.element_count);
}

std::vector<double> expected_bits_grad(const QuantSite& site) {
  const auto p = site.probabilities();
  double e = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) e += p[b] * site.bits[b];
  std::vector<double> g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) g[j] = static_cast<double>(site.element_count) * p[j] * (site.bits[j] - e);
  return g;
}

double cost_bits(std::span<const QuantSite* const> sites) {
  double c = 0.0;
  for (const QuantSite* s : sites) c += expected_bits(*s);
  return c;
}

double nas_loss(double task_loss, std::span<const QuantSite* const> sites, double lambda) {
  return task_loss + lambda * cost_bits(sites);
}

double add_cost_gradient(std::span<QuantSite* const> sites, double lambda) {
  double c = 0.0;
  for (QuantSite* s : sites) {
    c += expected_bits(*s);
    if (lambda == 0.0) continue;
    const auto g = expected_bits_grad(*s);
    for (std::size_t j = 0; j < g.size(); ++j) s->logits.grad[j] += lambda * g[j];
  }
  return lambda * c;
}

namespace {

QuantSite mixed_from(const QuantSite& base, const std::vector<int>& branches) {
  const double a = base.alpha.value.front();
  QuantSite s = QuantSite::mixed(base.kind, branches, a);
  s.element_count = base.element_count;
  if (s.kind == SiteKind::activation) {
    for (std::size_t b = 0; b < branches.size(); ++b) {
      if (branches[b] <= 2) s.alpha.value[b] = initial_act_alpha(branches[b]);
    }
  }
  return s;
}

int argmax_bits(const QuantSite& s) {
  const auto p = s.probabilities();
  std::size_t best = 0;
  for (std::size_t b = 1; b < p.size(); ++b) {
    if (p[b] > p[best] || (p[b] == p[best] && s.bits[b] < s.bits[best])) best = b;
  }
  return s.bits[best];
}

QuantSite collapse(const QuantSite& s, int bits) {
  for (std::size_t b = 0; b < s.bits.size(); ++b) {
    if (s.bits[b] == bits) {
      QuantSite f = QuantSite::fixed(s.kind, bits, s.alpha.value[b]);
      f.element_count = s.element_count;
      return f;
    }
  }
  fail(ErrorKind::state, "site has no " + std::to_string(bits) + "-bit branch");
}

}  // namespace

Network make_mixed(const Network& base, const std::vector<int>& branches) {
  Network net = base;
  for (auto& b : net.blocks) {
    b.conv.w_quant = mixed_from(base.blocks[&b - net.blocks.data()].conv.w_quant, branches);
    b.conv.a_quant = mixed_from(base.blocks[&b - net.blocks.data()].conv.a_quant, branches);
  }
  net.fc.w_quant = mixed_from(base.fc.w_quant, branches);
  net.history.clear();
  return net;
}

ArchConfig extract_fixed(const Network& searched) {
  ArchConfig arch = searched.arch;
  for (std::size_t l = 0; l < searched.blocks.size(); ++l) {
    arch.weight_bits[l] = argmax_bits(searched.blocks[l].conv.w_quant);
    arch.act_bits[l] = argmax_bits(searched.blocks[l].conv.a_quant);
  }
  arch.weight_bits.back() = argmax_bits(searched.fc.w_quant);
  arch.input_bits = 8;
  return arch;
}

Network fix_sites(const Network& searched, const ArchConfig& arch) {
  Network net = searched;
  for (std::size_t l = 0; l < net.blocks.size(); ++l) {
    net.blocks[l].conv.w_quant = collapse(searched.blocks[l].conv.w_quant, arch.weight_bits[l]);
    net.blocks[l].conv.a_quant = collapse(searched.blocks[l].conv.a_quant, arch.act_bits[l]);
  }
  net.fc.w_quant = collapse(searched.fc.w_quant, arch.weight_bits.back());
  net.sync_arch_bits();
  return net;
}

double model_bits(const ArchConfig& arch) {
  double bits = 0.0;
  int c_in = arch.in_channels;
  int len = arch.length;
  const auto lens = arch.block_lengths();
  for (int l = 0; l < arch.conv_count(); ++l) {
    bits += static_cast<double>(arch.c_out[l]) * c_in * arch.k * arch.weight_bits[l];
    bits += static_cast<double>(arch.c_out[l]) * len * arch.act_bits[l];
    c_in = arch.c_out[l];
    len = lens[l];
  }
  bits += static_cast<double>(arch.fc_in_features()) * arch.n_classes * arch.weight_bits.back();
  return bits;
}

Network nas_search_one(const Network& base, const WindowedDataset& data, const TrainProtocol& protocol,
                       const NasConfig& nas, double lambda) {
  nas.validate();
  if (lambda < 0.0) fail(ErrorKind::config, "lambda must be non-negative");
  Network mixed = make_mixed(base, nas.branches);
  for (QuantSite* s : mixed.sites()) s->logits.lr_scale = nas.logit_lr_scale;
  TrainProtocol search = protocol;
  search.max_epochs = nas.search_epochs;
  TrainOptions opt;
  opt.early_stop = false;
  opt.return_last = true;
  opt.extra = [lambda](Network& net) {
    auto sites = net.sites();
    return add_cost_gradient(sites, lambda);
  };
  return train(std::move(mixed), data, search, opt);
}

std::vector<NasResult> nas_search(const Network& base, const WindowedDataset& data, const TrainProtocol& protocol,
                                  const NasConfig& nas) {
  nas.validate();
  std::vector<NasResult> out;
  for (double lambda : nas.lambda_sweep) {
    const Network searched = nas_search_one(base, data, protocol, nas, lambda);
    NasResult r;
    r.lambda = lambda;
    r.arch = extract_fixed(searched);
    Network fixed = fix_sites(searched, r.arch);
    for (QuantSite* s : fixed.sites()) s->logits.lr_scale = 1.0;
    r.model = train_fixed(std::move(fixed), data, protocol);
    r.model_bits = model_bits(r.arch);
    for (const auto& h : r.model.history) r.holdout_score = std::max(r.holdout_score, h.holdout_score);
    out.push_back(std::move(r));
  }
  return out;
}

std::string sweep_report_csv(const std::vector<NasResult>& results) {
  std::ostringstream os;
  os.precision(10);
  os << "lambda,weight_bits,act_bits,model_bits,holdout_bacc\n";
  for (const auto& r : results) {
    os << r.lambda << ',' << join_ints(r.arch.weight_bits, ' ') << ',' << join_ints(r.arch.act_bits, ' ') << ','
       << r.model_bits << ',' << r.holdout_score << '\n';
  }
  return os.str();
}

}  // namespace shar
