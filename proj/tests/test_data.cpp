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
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "shar/data.hpp"
#include "support.hpp"

using namespace shar;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "shar_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

// Energy per DFT bin, summed over channels and normalized to unit total.
std::vector<double> spectral_energy(const WindowedDataset& ds, std::size_t i) {
  const int L = ds.length;
  std::vector<double> e(L / 2 + 1, 0.0);
  const auto w = ds.window(i);
  for (int c = 0; c < ds.channels; ++c) {
    double mean = 0.0;
    for (int t = 0; t < L; ++t) mean += w[c * L + t] / L;
    for (int f = 1; f <= L / 2; ++f) {
      double re = 0.0, im = 0.0;
      for (int t = 0; t < L; ++t) {
        const double ang = 2.0 * std::numbers::pi * f * t / L;
        re += (w[c * L + t] - mean) * std::cos(ang);
        im -= (w[c * L + t] - mean) * std::sin(ang);
      }
      e[f] += re * re + im * im;
    }
  }
  double total = 0.0;
  for (double v : e) total += v;
  for (double& v : e) v /= total;
  return e;
}

// Brute-force non-dominated filter with the documented duplicate rule.
std::vector<ParetoPoint> brute_front(const std::vector<ParetoPoint>& pts) {
  std::vector<ParetoPoint> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < pts.size() && keep; ++j) {
      if (i == j) continue;
      const auto& a = pts[j];
      const auto& b = pts[i];
      const bool dom = a.score >= b.score && a.cost <= b.cost && (a.score > b.score || a.cost < b.cost);
      const bool same_smaller_id = a.score == b.score && a.cost == b.cost && a.id < b.id;
      if (dom || same_smaller_id) keep = false;
    }
    if (keep) out.push_back(pts[i]);
  }
  std::sort(out.begin(), out.end(), [](const ParetoPoint& a, const ParetoPoint& b) { return a.score < b.score; });
  return out;
}

}  // namespace

TEST_CASE("metric examples") {
  SUBCASE("perfect predictions") {
    const std::vector<int> y{0, 1, 2, 2, 1};
    const auto m = compute_metrics(y, y, 3);
    CHECK(m.accuracy == 1.0);
    CHECK(m.balanced_accuracy == 1.0);
    CHECK(m.macro_f1 == 1.0);
    for (int t = 0; t < 3; ++t) {
      for (int p = 0; p < 3; ++p) {
        if (t != p) CHECK(m.confusion.at(t, p) == 0);
      }
    }
    CHECK(m.confusion.total() == 5);
  }
  SUBCASE("recalls 1.0 and 0.5 average to 0.75") {
    const std::vector<int> truth{0, 0, 1, 1};
    const std::vector<int> pred{0, 0, 1, 0};
    const auto m = compute_metrics(pred, truth, 2);
    CHECK(m.recall[0] == doctest::Approx(1.0));
    CHECK(m.recall[1] == doctest::Approx(0.5));
    CHECK(m.balanced_accuracy == doctest::Approx((1.0 + 0.5) / 2.0));
  }
  SUBCASE("precision 1 and recall 0.5 give F1 = 2/3") {
    const std::vector<int> truth{1, 1, 0, 0};
    const std::vector<int> pred{1, 0, 0, 0};
    const auto m = compute_metrics(pred, truth, 2);
    CHECK(m.precision[1] == doctest::Approx(1.0));
    CHECK(m.recall[1] == doctest::Approx(0.5));
    CHECK(m.f1[1] == doctest::Approx(2.0 * 1.0 * 0.5 / 1.5));
  }
  SUBCASE("length mismatch") {
    const std::vector<int> a{0, 1}, b{0};
    CHECK_THROWS_AS(compute_metrics(a, b, 2), Error);
  }
}

TEST_CASE("metric properties on random predictions") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 5);
    std::vector<int> truth, pred;
    for (int c = 0; c < k; ++c) {
      for (int i = 0; i < 1 + static_cast<int>(rng() % 20); ++i) truth.push_back(c);
    }
    for (std::size_t i = 0; i < truth.size(); ++i) pred.push_back(static_cast<int>(rng() % k));
    const auto m = compute_metrics(pred, truth, k);
    const auto [lo, hi] = std::minmax_element(m.recall.begin(), m.recall.end());
    CHECK(m.accuracy >= *lo - 1e-12);
    CHECK(m.accuracy <= *hi + 1e-12);
    // Duplicating every sample of class 0 leaves its recall, and therefore bAcc, unchanged.
    std::vector<int> truth2 = truth, pred2 = pred;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == 0) {
        truth2.push_back(truth[i]);
        pred2.push_back(pred[i]);
      }
    }
    CHECK(compute_metrics(pred2, truth2, k).balanced_accuracy == doctest::Approx(m.balanced_accuracy));
  }
}

TEST_CASE("class weights") {
  const std::vector<int> balanced{0, 1, 2, 0, 1, 2};
  for (double w : class_weights(balanced, 3)) CHECK(w == doctest::Approx(1.0));
  std::vector<int> skew(30, 0);
  skew.insert(skew.end(), 10, 1);
  const auto w = class_weights(skew, 2);
  CHECK(w[0] == doctest::Approx(40.0 / 60.0));
  CHECK(w[1] == doctest::Approx(40.0 / 20.0));
  // Relabeling the classes permutes the weights.
  std::vector<int> swapped;
  for (int y : skew) swapped.push_back(1 - y);
  const auto ws = class_weights(swapped, 2);
  CHECK(ws[0] == doctest::Approx(w[1]));
  CHECK(ws[1] == doctest::Approx(w[0]));
  const std::vector<int> missing{0, 0, 2};
  CHECK_THROWS_AS(class_weights(missing, 3), Error);
}

TEST_CASE("stratified split keeps per-class fractions") {
  std::mt19937_64 rng(12);
  std::vector<int> labels;
  for (int c = 0; c < 5; ++c) labels.insert(labels.end(), 7 + 13 * c, c);
  std::shuffle(labels.begin(), labels.end(), rng);
  const auto [first, second] = stratified_split(labels, 5, 0.25, 3);
  CHECK(first.size() + second.size() == labels.size());
  for (int c = 0; c < 5; ++c) {
    const double count = static_cast<double>(std::count(labels.begin(), labels.end(), c));
    const double got = static_cast<double>(std::count_if(second.begin(), second.end(), [&](std::size_t i) {
      return labels[i] == c;
    }));
    CHECK(std::abs(got - 0.25 * count) <= 1.0);
  }
  const auto again = stratified_split(labels, 5, 0.25, 3);
  CHECK(again.second == second);
}

TEST_CASE("pareto front examples") {
  std::vector<ParetoPoint> pts{{80, 10, "a"}, {85, 20, "b"}, {79, 15, "c"}};
  const auto f = pareto_front(pts);
  REQUIRE(f.size() == 2);
  CHECK(f[0].id == "a");
  CHECK(f[1].id == "b");
  CHECK(pareto_front({{50, 5, "x"}}).size() == 1);
  const auto dup = pareto_front({{70, 3, "z"}, {70, 3, "y"}, {70, 3, "w"}});
  REQUIRE(dup.size() == 1);
  CHECK(dup[0].id == "w");
  CHECK(dominates({80, 10, ""}, {79, 15, ""}));
  CHECK_FALSE(dominates({80, 10, ""}, {80, 10, ""}));
}

TEST_CASE("pareto front equals the brute-force filter on 1000 random sets") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ParetoPoint> pts(1 + rng() % 30);
    int id = 0;
    for (auto& p : pts) {
      // Coarse values force ties and duplicates.
      p.score = static_cast<double>(rng() % 12);
      p.cost = static_cast<double>(rng() % 12);
      p.id = "p" + std::to_string(100 + id++);
    }
    const auto got = pareto_front(pts);
    const auto want = brute_front(pts);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].id == want[i].id);
    for (const auto& a : got) {
      for (const auto& b : got) CHECK_FALSE(dominates(a, b));
    }
  }
}

TEST_CASE("CSV roundtrip is bit-identical") {
  SynthOptions o;
  o.n_per_class = 1;
  o.n_classes = 2;
  o.seed = 5;
  const auto ds = synth_har(o);
  REQUIRE(ds.size() == 2);
  const auto p = temp_file("roundtrip.csv");
  save_csv(ds, p.string());
  const auto back = load_csv(p.string());
  CHECK(back.windows == ds.windows);
  CHECK(back.labels == ds.labels);
  CHECK(back.channels == ds.channels);
  CHECK(back.length == ds.length);
  CHECK(back.digest() == ds.digest());
}

TEST_CASE("CSV with a declared WISDM-like shape") {
  std::mt19937_64 rng(14);
  std::ostringstream os;
  for (int r = 0; r < 12; ++r) {
    for (int i = 0; i < 200 * 3; ++i) os << std::uniform_real_distribution<double>(-10, 10)(rng) << ',';
    os << r % 6 << '\n';
  }
  const auto p = temp_file("wisdm_like.csv");
  write_file(p, os.str());
  CsvSchema schema;
  schema.channels = 3;
  schema.length = 200;
  schema.n_classes = 6;
  const auto ds = load_csv(p.string(), schema);
  CHECK(ds.size() == 12);
  CHECK(ds.channels == 3);
  CHECK(ds.length == 200);
  CHECK(ds.n_classes == 6);
}

TEST_CASE("CSV errors") {
  const auto empty = temp_file("empty.csv");
  write_file(empty, "");
  try {
    load_csv(empty.string());
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
  CsvSchema schema;
  schema.channels = 1;
  schema.length = 2;
  schema.n_classes = 2;
  const auto ragged = temp_file("ragged.csv");
  write_file(ragged, "0.1,0.2,0\n0.3,1\n");
  try {
    load_csv(ragged.string(), schema);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
    CHECK(std::string(e.what()).find('2') != std::string::npos);  // line number
  }
  const auto bad_label = temp_file("label.csv");
  write_file(bad_label, "0.1,0.2,5\n");
  CHECK_THROWS_AS(load_csv(bad_label.string(), schema), Error);
  CHECK_THROWS_AS(load_csv(temp_file("does_not_exist.csv").string(), schema), Error);
}

TEST_CASE("synthetic dataset is deterministic with exact class histograms") {
  SynthOptions o;
  o.n_per_class = 17;
  o.n_classes = 5;
  o.easy_fraction = 0.6;
  o.seed = 9;
  const auto a = synth_har(o);
  const auto b = synth_har(o);
  CHECK(a.windows == b.windows);
  CHECK(a.labels == b.labels);
  for (auto c : a.class_counts()) CHECK(c == 17);
  const auto easy = synth_easy_mask(o);
  CHECK(easy.size() == a.size());
  o.seed = 10;
  CHECK(synth_har(o).windows != a.windows);
}

TEST_CASE("easy synthetic data is linearly separable on spectral energy") {
  SynthOptions o;
  o.n_per_class = 60;
  o.n_classes = 6;
  o.easy_fraction = 1.0;
  o.seed = 21;
  const auto train = synth_har(o);
  o.seed = 22;
  const auto test = synth_har(o);
  const std::size_t bins = train.length / 2 + 1;
  // Nearest class centroid in feature space: a linear decision rule.
  std::vector<std::vector<double>> centroid(o.n_classes, std::vector<double>(bins, 0.0));
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto e = spectral_energy(train, i);
    for (std::size_t f = 0; f < bins; ++f) centroid[train.labels[i]][f] += e[f] / o.n_per_class;
  }
  std::vector<int> pred;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto e = spectral_energy(test, i);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < o.n_classes; ++c) {
      double d = 0.0;
      for (std::size_t f = 0; f < bins; ++f) d += (e[f] - centroid[c][f]) * (e[f] - centroid[c][f]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    pred.push_back(best);
  }
  CHECK(compute_metrics(pred, test.labels, o.n_classes).accuracy >= 0.99);
}

TEST_CASE("synthetic generator rejects windows too short for the class frequencies") {
  SynthOptions o;
  o.n_classes = 12;
  o.length = 16;
  CHECK_THROWS_AS(synth_har(o), Error);
}
