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

#include <filesystem>
#include <fstream>

#include "shar/search.hpp"
#include "support.hpp"

using namespace shar;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("shar_test_search_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ExperimentPlan tiny_plan(const fs::path& out) {
  ExperimentPlan p = ExperimentPlan::parse(
      "template=B\nc_out=4,8\nk=7\npool=2\nbits=1,8\nmax_epochs=3\nlambda_sweep=0.0001,1\nsearch_epochs=2\nseed=4\n");
  p.out_dir = out.string();
  return p;
}

WindowedDataset synth(int per_class, std::uint64_t seed) {
  SynthOptions o;
  o.n_per_class = per_class;
  o.seed = seed;
  return synth_har(o);
}

}  // namespace

TEST_CASE("plan text roundtrips") {
  const ExperimentPlan p = ExperimentPlan::parse(
      "# comment\ntemplate=A\nc_out=8,16\nk=7,15\npool=0,2\nbits=2,8\nlr=0.01\nbatch_size=16\nmax_epochs=5\n"
      "weight_decay=0.001\nlambda_sweep=0.0001,0.0005\nsearch_epochs=4\njobs=3\nseed=9\nout=somewhere\n");
  CHECK(p.tmpl == Template::A);
  CHECK(p.c_out_choices == std::vector<int>{8, 16});
  CHECK(p.k_choices == std::vector<int>{7, 15});
  REQUIRE(p.pool_choices.size() == 2);
  CHECK_FALSE(p.pool_choices[0].present);
  CHECK(p.pool_choices[1].present);
  CHECK(p.bits == std::vector<int>{2, 8});
  CHECK(p.protocol.initial_lr == 0.01);
  CHECK(p.protocol.batch_size == 16);
  CHECK(p.protocol.max_epochs == 5);
  CHECK(p.nas.lambda_sweep == std::vector<double>{1e-4, 5e-4});
  CHECK(p.nas.search_epochs == 4);
  CHECK(p.jobs == 3);
  CHECK(p.seed == 9);
  CHECK(p.protocol.seed == 9);
  CHECK(p.out_dir == "somewhere");
  const ExperimentPlan q = ExperimentPlan::parse(p.to_text());
  CHECK(q.to_text() == p.to_text());

  CHECK_THROWS_AS(ExperimentPlan::parse("colour=blue\n"), Error);
  CHECK_THROWS_AS(ExperimentPlan::parse("bits=3\n"), Error);
  CHECK_THROWS_AS(ExperimentPlan::parse("jobs=0\n"), Error);
  CHECK_THROWS_AS(ExperimentPlan::parse("lr=fast\n"), Error);
}

TEST_CASE("grid spec follows the plan") {
  const ExperimentPlan p = tiny_plan(fresh_dir("spec"));
  const auto data = synth(2, 1);
  const GridSpec g = p.grid_spec(1, data);
  CHECK(g.c_out_choices == std::vector<int>{4, 8});
  CHECK(enumerate_grid(g).size() == 4);
  for (const auto& a : enumerate_grid(g)) {
    CHECK(a.weight_bits == std::vector<int>{1, 1, 1});
    CHECK(a.n_classes == 6);
    CHECK(a.length == 64);
  }
}

TEST_CASE("result rows roundtrip through the store") {
  const fs::path dir = fresh_dir("store");
  ResultRow r;
  r.digest = "abc";
  r.stage = "mixed";
  r.parent = "def";
  r.arch = "B c=4,8 \"quoted\", k=7";
  r.weight_bits = "1 2 8";
  r.act_bits = "4 1";
  r.lambda = 1e-4;
  r.accuracy = 91.25;
  r.bacc = 90.5;
  r.macro_f1 = 89.75;
  r.memory_bytes = 1234;
  r.cycle_units = 5678.5;
  r.artifact = "models/abc.json";
  r.status = "error:numeric:scale, not representable";
  const ResultRow back = ResultsStore::from_line(ResultsStore::to_line(r));
  CHECK(ResultsStore::to_line(back) == ResultsStore::to_line(r));
  CHECK(back.arch == r.arch);
  CHECK(back.status == r.status);
  CHECK(back.memory_bytes == 1234u);
  CHECK_FALSE(back.ok());
  CHECK_THROWS_AS(ResultsStore::from_line("a,b,c"), Error);

  const std::string path = (dir / "results.csv").string();
  {
    ResultsStore s(path);
    CHECK(s.rows().empty());
    s.append(r);
    CHECK(s.contains("abc"));
  }
  ResultsStore again(path);
  REQUIRE(again.rows().size() == 1);
  CHECK(ResultsStore::to_line(again.rows()[0]) == ResultsStore::to_line(r));

  std::ofstream(dir / "bad.csv") << "not,the,header\n";
  CHECK_THROWS_AS(ResultsStore((dir / "bad.csv").string()), Error);
}

TEST_CASE("run digests separate every input") {
  ArchConfig a = enumerate_grid(GridSpec::template_b(6, 3, 64, 8)).front();
  const TrainProtocol p;
  const std::string d = run_digest(a, p, 1, "data");
  CHECK(d.size() == 16);
  CHECK(d == run_digest(a, p, 1, "data"));
  CHECK(d != run_digest(a, p, 2, "data"));
  CHECK(d != run_digest(a, p, 1, "other"));
  CHECK(d != run_digest(a, p, 1, "data", "grid"));
  TrainProtocol q = p;
  q.initial_lr *= 2;
  CHECK(d != run_digest(a, q, 1, "data"));
  ArchConfig b = a;
  b.act_bits[0] = 4;
  CHECK(d != run_digest(b, p, 1, "data"));
}

TEST_CASE("grid sweep, resume, mixed search and fronts") {
  const fs::path dir = fresh_dir("pipeline");
  ExperimentPlan plan = tiny_plan(dir);
  plan.jobs = 2;
  const auto train = synth(15, 31);
  const auto test = synth(10, 32);
  ResultsStore store((dir / "results.csv").string());

  RunCounters c1;
  const auto rows = run_grid(plan, train, test, store, &c1);
  CHECK(rows.size() == 8);  // 2 c_out x 2 c_out x 1 k x 1 pool, at two bit-widths
  CHECK(c1.trained == 8);
  CHECK(c1.skipped == 0);
  for (const auto& r : rows) {
    CHECK(r.ok());
    CHECK(r.stage == "grid");
    CHECK(fs::exists(r.artifact));
    const CompiledModel cm = load_compiled(fs::path(r.artifact).replace_extension(".sbh").string());
    CHECK(cost_report(cm).memory_bytes == r.memory_bytes);
    CHECK(r.bacc >= 0.0);
    CHECK(r.bacc <= 100.0);
  }

  RunCounters c2;
  ResultsStore reopened((dir / "results.csv").string());
  const auto again = run_grid(plan, train, test, reopened, &c2);
  CHECK(c2.trained == 0);
  CHECK(c2.skipped == 8);
  CHECK(again.size() == 8);

  RunCounters c3;
  const auto mixed = run_mixed(plan, rows, train, test, reopened, &c3);
  CHECK(c3.failed == 0);
  const auto all = reopened.rows();
  for (const auto& m : mixed) {
    CHECK(m.stage == "mixed");
    CHECK(m.ok());
    const auto parent = std::find_if(all.begin(), all.end(), [&](const ResultRow& r) { return r.digest == m.parent; });
    REQUIRE(parent != all.end());
    CHECK(parent->weight_bits == "8 8 8");
    CHECK(m.memory_bytes <= parent->memory_bytes);
  }
  CHECK(c3.trained + c3.skipped >= 2);

  for (FrontMetric metric : {FrontMetric::memory, FrontMetric::cycles}) {
    const auto front = pareto_rows(all, metric);
    REQUIRE_FALSE(front.empty());
    auto cost = [&](const ResultRow& r) { return metric == FrontMetric::memory ? double(r.memory_bytes) : r.cycle_units; };
    for (std::size_t i = 1; i < front.size(); ++i) {
      CHECK(front[i].bacc > front[i - 1].bacc);
      CHECK(cost(front[i]) > cost(front[i - 1]));
    }
    for (const auto& f : front) {
      for (const auto& r : all) {
        if (!r.ok()) continue;
        const bool dominated = r.bacc >= f.bacc && cost(r) <= cost(f) && (r.bacc > f.bacc || cost(r) < cost(f));
        CHECK_FALSE(dominated);
      }
    }
  }

  RunCounters c4;
  run_mixed(plan, rows, train, test, reopened, &c4);
  CHECK(c4.trained == 0);
  CHECK(rows_csv(all).find(ResultsStore::header()) == 0);
}

TEST_CASE("adaptive build needs a usable front") {
  const fs::path dir = fresh_dir("adaptive");
  const ExperimentPlan plan = tiny_plan(dir);
  const auto data = synth(4, 1);
  std::vector<ResultRow> rows(1);
  rows[0].digest = "only";
  rows[0].bacc = 80;
  rows[0].cycle_units = 10;
  try {
    build_adaptive(rows, plan, data, data);
    FAIL("single-model front accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::selection);
  }
  ArchConfig bin = enumerate_grid(plan.grid_spec(1, data)).front();
  CHECK_THROWS_AS(build_adaptive_for(bin, plan, data, data), Error);
}

TEST_CASE("adaptive build end to end") {
  const fs::path dir = fresh_dir("adaptive_e2e");
  ExperimentPlan plan = tiny_plan(dir);
  plan.protocol.max_epochs = 6;
  SynthOptions o;
  o.n_per_class = 30;
  o.easy_fraction = 0.7;
  o.seed = 41;
  const auto train = synth_har(o);
  o.seed = 42;
  const auto test = synth_har(o);
  ArchConfig arch = enumerate_grid(plan.grid_spec(8, train)).back();
  const AdaptiveBuild b = build_adaptive_for(arch, plan, train, test, 1.0);
  CHECK((b.model.small_width() == 0.25 || b.model.small_width() == 0.5));
  CHECK(b.model.small_width() == b.width_choice.width);
  CHECK(b.test_sweep.size() == default_thresholds().size());
  CHECK(b.static_cost == doctest::Approx(b.model.cost_big()));
  CHECK(b.adaptive_file_bytes > b.static_file_bytes);
  CHECK(b.adaptive_file_bytes == serialize(b.model.model).size());
  CHECK(b.test_sweep.back().score == doctest::Approx(b.static_score));
}
