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

#include "shar/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "shar/error.hpp"
#include "shar/model_space.hpp"

namespace shar {

void WindowedDataset::validate() const {
  if (channels < 1 || length < 1 || n_classes < 1) fail(ErrorKind::data, "dataset shape must be positive");
  if (windows.size() != labels.size() * window_size()) fail(ErrorKind::data, "dataset windows are not uniformly shaped");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) fail(ErrorKind::data, "label out of range at sample " + std::to_string(i));
  }
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset out = *this;
  out.windows.clear();
  out.labels.clear();
  out.windows.reserve(indices.size() * window_size());
  for (std::size_t i : indices) {
    const auto w = window(i);
    out.windows.insert(out.windows.end(), w.begin(), w.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

Tensor WindowedDataset::batch(std::span<const std::size_t> indices) const {
  Tensor t({static_cast<int>(indices.size()), channels, length});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto w = window(indices[b]);
    std::copy(w.begin(), w.end(), t.data() + b * window_size());
  }
  return t;
}

Tensor WindowedDataset::all() const {
  Tensor t({static_cast<int>(size()), channels, length});
  std::copy(windows.begin(), windows.end(), t.data());
  return t;
}

std::vector<std::size_t> WindowedDataset::class_counts() const {
  std::vector<std::size_t> c(n_classes, 0);
  for (int l : labels) ++c[l];
  return c;
}

std::string WindowedDataset::digest() const {
  std::string bytes = std::to_string(channels) + "x" + std::to_string(length) + "x" + std::to_string(n_classes) + ":";
  bytes.append(reinterpret_cast<const char*>(labels.data()), labels.size() * sizeof(int));
  bytes.append(reinterpret_cast<const char*>(windows.data()), windows.size() * sizeof(double));
  return hex64(fnv1a64(bytes));
}

// ---- CSV -------------------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  if (b < e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && b != e;
}

}  // namespace

WindowedDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open dataset " + path);
  WindowedDataset ds;
  ds.channels = schema.channels;
  ds.length = schema.length;
  int header_classes = 0;
  std::string line;
  int lineno = 0;
  int max_label = -1;
  std::size_t expected = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const int val = std::atoi(tok.c_str() + eq + 1);
        if (key == "channels" && schema.channels == 0) ds.channels = val;
        if (key == "length" && schema.length == 0) ds.length = val;
        if (key == "classes") header_classes = val;
      }
      continue;
    }
    if (ds.channels <= 0 || ds.length <= 0) {
      fail(ErrorKind::data, path + ": schema does not declare channels/length (no header and none given)");
    }
    expected = static_cast<std::size_t>(ds.channels) * ds.length + 1;
    std::vector<double> row;
    row.reserve(expected);
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      double v = 0.0;
      if (!parse_double(cell, v)) fail(ErrorKind::format, path + ":" + std::to_string(lineno) + ": cannot parse '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != expected) {
      fail(ErrorKind::format, path + ":" + std::to_string(lineno) + ": expected " + std::to_string(expected) +
                                " columns, found " + std::to_string(row.size()));
    }
    const double lab = row.back();
    if (lab != std::floor(lab) || lab < 0) fail(ErrorKind::data, path + ":" + std::to_string(lineno) + ": schema error: label must be a non-negative integer");
    const int label = static_cast<int>(lab);
    const int declared = schema.n_classes > 0 ? schema.n_classes : header_classes;
    if (declared > 0 && label >= declared) {
      fail(ErrorKind::data, path + ":" + std::to_string(lineno) + ": schema error: label " + std::to_string(label) +
                                " out of range for " + std::to_string(declared) + " classes");
    }
    max_label = std::max(max_label, label);
    ds.windows.insert(ds.windows.end(), row.begin(), row.end() - 1);
    ds.labels.push_back(label);
  }
  if (ds.labels.empty()) fail(ErrorKind::data, path + ": dataset is empty");
  ds.n_classes = schema.n_classes > 0 ? schema.n_classes : (header_classes > 0 ? header_classes : max_label + 1);
  ds.validate();
  return ds;
}

void save_csv(const WindowedDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write dataset " + path);
  os << "# subbyte-har-csv v1 channels=" << ds.channels << " length=" << ds.length << " classes=" << ds.n_classes << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.window(i)) os << format_double(v) << ',';
    os << ds.labels[i] << '\n';
  }
  if (!os) fail(ErrorKind::io, "failed writing dataset " + path);
}

// ---- synthetic data --------------------------------------------------------------------------

namespace {

int class_cycles(int c) { return 2 + 3 * c; }

struct SynthDraw {
  WindowedDataset ds;
  std::vector<bool> easy;
};

SynthDraw synth_draw(const SynthOptions& opt) {
  if (opt.n_per_class < 1 || opt.n_classes < 1 || opt.channels < 1 || opt.length < 1) {
    fail(ErrorKind::config, "synthetic dataset parameters must be positive");
  }
  if (opt.easy_fraction < 0.0 || opt.easy_fraction > 1.0) fail(ErrorKind::config, "easy_fraction must be in [0, 1]");
  if (2 * class_cycles(opt.n_classes) >= opt.length) {
    fail(ErrorKind::config, "window too short to hold " + std::to_string(opt.n_classes) + " separable class frequencies");
  }
  SynthDraw d;
  auto& ds = d.ds;
  ds.channels = opt.channels;
  ds.length = opt.length;
  ds.n_classes = opt.n_classes;
  ds.rate_hz = 50.0;
  ds.window_seconds = opt.length / ds.rate_hz;
  for (int c = 0; c < opt.n_classes; ++c) ds.class_names.push_back("class" + std::to_string(c));

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const int n_easy = static_cast<int>(std::lround(opt.easy_fraction * opt.n_per_class));

  for (int c = 0; c < opt.n_classes; ++c) {
    std::vector<int> order(opt.n_per_class);
    for (int i = 0; i < opt.n_per_class; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const int neighbour = c + 1 < opt.n_classes ? c + 1 : c - 1;
    for (int i = 0; i < opt.n_per_class; ++i) {
      const bool easy = order[i] < n_easy;
      const double amp = 0.8 + 0.4 * uni(rng);
      const double mix = easy || neighbour < 0 ? 0.0 : 0.30 + 0.15 * uni(rng);
      const double noise = easy ? 0.15 : 0.6;
      for (int ch = 0; ch < opt.channels; ++ch) {
        const double phase = two_pi * uni(rng);
        const double phase_n = two_pi * uni(rng);
        const double gain = 0.7 + 0.3 * uni(rng);
        const double offset = 0.4 * (uni(rng) - 0.5);
        for (int t = 0; t < opt.length; ++t) {
          const double u = static_cast<double>(t) / opt.length;
          double v = (1.0 - mix) * std::sin(two_pi * class_cycles(c) * u + phase);
          if (mix > 0.0) v += mix * std::sin(two_pi * class_cycles(neighbour) * u + phase_n);
          ds.windows.push_back(amp * gain * v + offset + noise * gauss(rng));
        }
      }
      ds.labels.push_back(c);
      d.easy.push_back(easy);
    }
  }
  return d;
}

}  // namespace

WindowedDataset synth_har(const SynthOptions& opt) { return synth_draw(opt).ds; }

std::vector<bool> synth_easy_mask(const SynthOptions& opt) { return synth_draw(opt).easy; }

// ---- metrics -----------------------------------------------------------------------------------

long ConfusionMatrix::total() const {
  long t = 0;
  for (long v : counts) t += v;
  return t;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\pred";
  for (int p = 0; p < n_classes; ++p) os << ',' << p;
  os << '\n';
  for (int t = 0; t < n_classes; ++t) {
    os << t;
    for (int p = 0; p < n_classes; ++p) os << ',' << at(t, p);
    os << '\n';
  }
  return os.str();
}

Metrics compute_metrics(std::span<const int> pred, std::span<const int> labels, int n_classes) {
  if (pred.size() != labels.size()) fail(ErrorKind::dimension, "prediction and label counts differ");
  Metrics m;
  m.confusion.n_classes = n_classes;
  m.confusion.counts.assign(static_cast<std::size_t>(n_classes) * n_classes, 0);
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes) {
      fail(ErrorKind::range, "class index out of range in metrics");
    }
    ++m.confusion.counts[static_cast<std::size_t>(labels[i]) * n_classes + pred[i]];
    if (pred[i] == labels[i]) ++correct;
  }
  m.accuracy = pred.empty() ? 0.0 : static_cast<double>(correct) / pred.size();
  m.recall.assign(n_classes, 0.0);
  m.precision.assign(n_classes, 0.0);
  m.f1.assign(n_classes, 0.0);
  int present = 0, f1_classes = 0;
  double recall_sum = 0.0, f1_sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    long row = 0, col = 0;
    for (int j = 0; j < n_classes; ++j) {
      row += m.confusion.at(c, j);
      col += m.confusion.at(j, c);
    }
    const long tp = m.confusion.at(c, c);
    m.recall[c] = row ? static_cast<double>(tp) / row : 0.0;
    m.precision[c] = col ? static_cast<double>(tp) / col : 0.0;
    const double denom = m.recall[c] + m.precision[c];
    m.f1[c] = denom > 0.0 ? 2.0 * m.recall[c] * m.precision[c] / denom : 0.0;
    if (row) {
      ++present;
      recall_sum += m.recall[c];
    }
    if (row || col) {
      ++f1_classes;
      f1_sum += m.f1[c];
    }
  }
  m.balanced_accuracy = present ? recall_sum / present : 0.0;
  m.macro_f1 = f1_classes ? f1_sum / f1_classes : 0.0;
  return m;
}

std::vector<double> class_weights(std::span<const int> labels, int n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int l : labels) {
    if (l < 0 || l >= n_classes) fail(ErrorKind::data, "label out of range");
    ++counts[l];
  }
  std::vector<double> w(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) fail(ErrorKind::data, "class " + std::to_string(c) + " has no training samples");
    w[c] = static_cast<double>(labels.size()) / (static_cast<double>(n_classes) * counts[c]);
  }
  return w;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                                                int n_classes, double fraction,
                                                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);
  std::vector<std::size_t> first, second;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto take = static_cast<std::size_t>(std::lround(fraction * idx.size()));
    second.insert(second.end(), idx.begin(), idx.begin() + take);
    first.insert(first.end(), idx.begin() + take, idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {first, second};
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.score >= b.score && a.cost <= b.cost && (a.score > b.score || a.cost < b.cost);
}

std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points) {
  std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  std::vector<ParetoPoint> front;
  for (auto& p : points) {
    if (front.empty() || p.score > front.back().score) front.push_back(std::move(p));
  }
  return front;
}

}  // namespace shar
