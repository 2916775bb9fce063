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

#include "shar/search.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shar/error.hpp"

namespace shar {

namespace fs = std::filesystem;

// ---- plan ---------------------------------------------------------------------------------------

void ExperimentPlan::validate() const {
  if (bits.empty()) fail(ErrorKind::config, "plan needs at least one bit-width");
  for (int b : bits) {
    if (!is_supported_bits(b)) fail(ErrorKind::config, "plan bit-width " + std::to_string(b) + " is not in {1,2,4,8}");
  }
  if (jobs < 1) fail(ErrorKind::config, "jobs must be at least 1");
  protocol.validate();
  nas.validate();
}

GridSpec ExperimentPlan::grid_spec(int b, const WindowedDataset& data) const {
  GridSpec g = tmpl == Template::A ? GridSpec::template_a(data.n_classes, data.channels, data.length, b)
                                   : GridSpec::template_b(data.n_classes, data.channels, data.length, b);
  if (!c_out_choices.empty()) g.c_out_choices = c_out_choices;
  if (!k_choices.empty()) g.k_choices = k_choices;
  if (!pool_choices.empty()) g.pool_choices = pool_choices;
  return g;
}

ExperimentPlan ExperimentPlan::parse(const std::string& text) {
  ExperimentPlan p;
  for (const auto& [key, value] : parse_key_values(text)) {
    try {
      if (key == "template") {
        if (value != "A" && value != "B") fail(ErrorKind::config, "template must be A or B");
        p.tmpl = value == "A" ? Template::A : Template::B;
      } else if (key == "c_out") {
        p.c_out_choices = parse_int_list(value);
      } else if (key == "k") {
        p.k_choices = parse_int_list(value);
      } else if (key == "pool") {
        p.pool_choices.clear();
        for (int s : parse_int_list(value)) p.pool_choices.push_back(s == 0 ? PoolSpec{false, 2} : PoolSpec{true, s});
      } else if (key == "bits") {
        p.bits = parse_int_list(value);
      } else if (key == "lr") {
        p.protocol.initial_lr = std::stod(value);
      } else if (key == "batch_size") {
        p.protocol.batch_size = std::stoi(value);
      } else if (key == "max_epochs") {
        p.protocol.max_epochs = std::stoi(value);
      } else if (key == "weight_decay") {
        p.protocol.weight_decay = std::stod(value);
      } else if (key == "lambda_sweep") {
        p.nas.lambda_sweep = parse_double_list(value);
      } else if (key == "search_epochs") {
        p.nas.search_epochs = std::stoi(value);
      } else if (key == "jobs") {
        p.jobs = std::stoi(value);
      } else if (key == "seed") {
        p.seed = std::stoull(value);
      } else if (key == "out") {
        p.out_dir = value;
      } else {
        fail(ErrorKind::config, "unknown plan key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::config, "cannot parse plan value for '" + key + "'");
    }
  }
  p.protocol.seed = p.seed;
  p.validate();
  return p;
}

std::string ExperimentPlan::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "template=" << (tmpl == Template::A ? "A" : "B") << "\n";
  if (!c_out_choices.empty()) os << "c_out=" << join_ints(c_out_choices) << "\n";
  if (!k_choices.empty()) os << "k=" << join_ints(k_choices) << "\n";
  if (!pool_choices.empty()) {
    std::vector<int> p;
    for (const auto& s : pool_choices) p.push_back(s.present ? s.size : 0);
    os << "pool=" << join_ints(p) << "\n";
  }
  os << "bits=" << join_ints(bits) << "\nlr=" << protocol.initial_lr << "\nbatch_size=" << protocol.batch_size
     << "\nmax_epochs=" << protocol.max_epochs << "\nweight_decay=" << protocol.weight_decay << "\nlambda_sweep=";
  for (std::size_t i = 0; i < nas.lambda_sweep.size(); ++i) os << (i ? "," : "") << nas.lambda_sweep[i];
  os << "\nsearch_epochs=" << nas.search_epochs << "\njobs=" << jobs << "\nseed=" << seed << "\nout=" << out_dir << "\n";
  return os.str();
}

// ---- results store ------------------------------------------------------------------------------

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_q = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_q) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        in_q = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_q = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string ResultsStore::header() {
  return "digest,stage,parent,arch,weight_bits,act_bits,lambda,accuracy,bacc,macro_f1,memory_bytes,cycle_units,artifact,status";
}

std::string ResultsStore::to_line(const ResultRow& r) {
  std::ostringstream os;
  os << r.digest << ',' << r.stage << ',' << r.parent << ',' << quote(r.arch) << ',' << r.weight_bits << ','
     << r.act_bits << ',' << fmt(r.lambda) << ',' << fmt(r.accuracy) << ',' << fmt(r.bacc) << ',' << fmt(r.macro_f1)
     << ',' << r.memory_bytes << ',' << fmt(r.cycle_units) << ',' << quote(r.artifact) << ',' << quote(r.status);
  return os.str();
}

ResultRow ResultsStore::from_line(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 14) fail(ErrorKind::format, "results row has " + std::to_string(f.size()) + " fields, expected 14");
  ResultRow r;
  try {
    r.digest = f[0];
    r.stage = f[1];
    r.parent = f[2];
    r.arch = f[3];
    r.weight_bits = f[4];
    r.act_bits = f[5];
    r.lambda = std::stod(f[6]);
    r.accuracy = std::stod(f[7]);
    r.bacc = std::stod(f[8]);
    r.macro_f1 = std::stod(f[9]);
    r.memory_bytes = std::stoull(f[10]);
    r.cycle_units = std::stod(f[11]);
    r.artifact = f[12];
    r.status = f[13];
  } catch (const std::logic_error&) {
    fail(ErrorKind::format, "malformed number in results row");
  }
  return r;
}

ResultsStore::ResultsStore(std::string path) : path_(std::move(path)) {
  std::ifstream is(path_);
  if (!is) return;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == header()) continue;
      fail(ErrorKind::format, path_ + ": unexpected results header");
    }
    cache_.push_back(from_line(line));
  }
}

std::vector<ResultRow> ResultsStore::rows() const {
  std::lock_guard lock(mu_);
  return cache_;
}

bool ResultsStore::contains(const std::string& digest) const {
  std::lock_guard lock(mu_);
  return std::any_of(cache_.begin(), cache_.end(), [&](const ResultRow& r) { return r.digest == digest; });
}

void ResultsStore::append(const ResultRow& row) {
  std::lock_guard lock(mu_);
  if (!path_.empty()) {
    const bool fresh = !fs::exists(path_) || fs::file_size(path_) == 0;
    if (fs::path(path_).has_parent_path()) fs::create_directories(fs::path(path_).parent_path());
    std::ofstream os(path_, std::ios::app);
    if (!os) fail(ErrorKind::io, "cannot append to " + path_);
    if (fresh) os << header() << '\n';
    os << to_line(row) << '\n';
  }
  cache_.push_back(row);
}

std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::string s = ResultsStore::header() + "\n";
  for (const auto& r : rows) s += ResultsStore::to_line(r) + "\n";
  return s;
}

std::string run_digest(const ArchConfig& arch, const TrainProtocol& protocol, std::uint64_t seed,
                       const std::string& dataset_digest, const std::string& extra) {
  return hex64(fnv1a64(to_config_text(arch) + "|" + protocol.digest_text() + "|" + std::to_string(seed) + "|" +
                       dataset_digest + "|" + extra));
}

// ---- stages -------------------------------------------------------------------------------------

namespace {

struct Evaluated {
  Metrics metrics;
  CostReport cost;
};

Evaluated evaluate_compiled(const Network& model, const WindowedDataset& test, const ThetaTable& theta,
                            const std::string& artifact_base) {
  const CompiledModel cm = compile(model, {1.0});
  const auto x = quantize_input(cm, test.all());
  const auto scores = integer_forward(cm, x, static_cast<int>(test.size()));
  std::vector<int> pred(test.size());
  const int k = cm.n_classes();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto* row = scores.data() + i * k;
    pred[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  if (!artifact_base.empty()) {
    save_network(model, artifact_base + ".json");
    save_compiled(cm, artifact_base + ".sbh");
  }
  return {compute_metrics(pred, test.labels, test.n_classes), cost_report(cm, 1.0, theta)};
}

void fill_scores(ResultRow& row, const Evaluated& ev) {
  row.accuracy = 100.0 * ev.metrics.accuracy;
  row.bacc = 100.0 * ev.metrics.balanced_accuracy;
  row.macro_f1 = 100.0 * ev.metrics.macro_f1;
  row.memory_bytes = ev.cost.memory_bytes;
  row.cycle_units = ev.cost.cycle_units;
}

ResultRow describe(const ArchConfig& arch, const std::string& digest, const std::string& stage) {
  ResultRow row;
  row.digest = digest;
  row.stage = stage;
  row.arch = arch_summary(arch);
  row.weight_bits = join_ints(arch.weight_bits, ' ');
  row.act_bits = join_ints(arch.act_bits, ' ');
  return row;
}

std::string model_dir(const ExperimentPlan& plan) {
  const fs::path dir = fs::path(plan.out_dir) / "models";
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

std::vector<ResultRow> run_grid(const ExperimentPlan& plan, const WindowedDataset& train, const WindowedDataset& test,
                                ResultsStore& store, RunCounters* counters) {
  plan.validate();
  struct Job {
    ArchConfig arch;
    std::string digest;
  };
  const std::string data_digest = train.digest();
  std::vector<Job> jobs;
  for (int b : plan.bits) {
    for (auto& arch : enumerate_grid(plan.grid_spec(b, train))) {
      jobs.push_back({arch, run_digest(arch, plan.protocol, plan.seed, data_digest, "grid")});
    }
  }
  RunCounters local;
  std::vector<Job> pending;
  for (auto& j : jobs) {
    if (store.contains(j.digest)) {
      ++local.skipped;
    } else {
      pending.push_back(j);
    }
  }
  const std::string dir = model_dir(plan);
  std::mutex count_mu;
  const int n = static_cast<int>(pending.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(plan.jobs) if (plan.jobs > 1)
  for (int i = 0; i < n; ++i) {
    const Job& job = pending[i];
    ResultRow row = describe(job.arch, job.digest, "grid");
    row.artifact = (fs::path(dir) / job.digest).string() + ".json";
    try {
      TrainProtocol proto = plan.protocol;
      proto.seed = plan.seed;
      proto.log = nullptr;
      const Network model = train_fixed(Network::instantiate(job.arch, plan.seed), train, proto);
      fill_scores(row, evaluate_compiled(model, test, plan.theta, (fs::path(dir) / job.digest).string()));
      std::lock_guard lock(count_mu);
      ++local.trained;
    } catch (const Error& e) {
      row.status = std::string("error:") + to_string(e.kind()) + ":" + e.what();
      std::lock_guard lock(count_mu);
      ++local.failed;
    }
    store.append(row);
  }
  if (counters) *counters = local;
  std::vector<ResultRow> out;
  for (const auto& r : store.rows()) {
    if (std::any_of(jobs.begin(), jobs.end(), [&](const Job& j) { return j.digest == r.digest; })) out.push_back(r);
  }
  return out;
}

std::vector<ResultRow> pareto_rows(const std::vector<ResultRow>& rows, FrontMetric metric) {
  std::vector<ParetoPoint> pts;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    pts.push_back({r.bacc, metric == FrontMetric::memory ? static_cast<double>(r.memory_bytes) : r.cycle_units, r.digest});
  }
  std::vector<ResultRow> out;
  for (const auto& p : pareto_front(pts)) {
    for (const auto& r : rows) {
      if (r.digest == p.id) {
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

std::vector<ResultRow> run_mixed(const ExperimentPlan& plan, const std::vector<ResultRow>& eight_bit_rows,
                                 const WindowedDataset& train, const WindowedDataset& test, ResultsStore& store,
                                 RunCounters* counters) {
  plan.validate();
  std::vector<ResultRow> eight;
  for (const auto& r : eight_bit_rows) {
    if (r.stage != "grid" || !r.ok()) continue;
    const bool all8 = r.weight_bits.find_first_not_of("8 ") == std::string::npos &&
                      r.act_bits.find_first_not_of("8 ") == std::string::npos;
    if (all8) eight.push_back(r);
  }
  const auto front = pareto_rows(eight, FrontMetric::memory);
  const std::string data_digest = train.digest();
  const std::string dir = model_dir(plan);
  RunCounters local;
  std::vector<ResultRow> out;

  struct Job {
    ResultRow parent;
    double lambda;
  };
  std::vector<Job> jobs;
  for (const auto& parent : front) {
    for (double l : plan.nas.lambda_sweep) jobs.push_back({parent, l});
  }
  std::mutex mu;
  const int n = static_cast<int>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(plan.jobs) if (plan.jobs > 1)
  for (int i = 0; i < n; ++i) {
    const Job& job = jobs[i];
    const std::string job_key = job.parent.digest + "|lambda=" + fmt(job.lambda);
    {
      bool done = false;
      for (const auto& r : store.rows()) {
        if (r.stage == "mixed" && r.parent == job.parent.digest && r.lambda == job.lambda) done = true;
      }
      if (done) {
        std::lock_guard lock(mu);
        ++local.skipped;
        continue;
      }
    }
    ResultRow row;
    try {
      TrainProtocol proto = plan.protocol;
      proto.seed = plan.seed;
      proto.log = nullptr;
      const Network base = load_network(job.parent.artifact);
      const Network searched = nas_search_one(base, train, proto, plan.nas, job.lambda);
      const ArchConfig arch = extract_fixed(searched);
      const std::string digest = run_digest(arch, proto, plan.seed, data_digest, "mixed|" + job.parent.digest);
      row = describe(arch, digest, "mixed");
      row.parent = job.parent.digest;
      row.lambda = job.lambda;
      if (store.contains(digest)) {
        std::lock_guard lock(mu);
        ++local.skipped;
        continue;
      }
      const Network model = train_fixed(fix_sites(searched, arch), train, proto);
      row.artifact = (fs::path(dir) / digest).string() + ".json";
      fill_scores(row, evaluate_compiled(model, test, plan.theta, (fs::path(dir) / digest).string()));
      std::lock_guard lock(mu);
      ++local.trained;
    } catch (const Error& e) {
      if (row.digest.empty()) {
        row.digest = hex64(fnv1a64(job_key));
        row.stage = "mixed";
        row.parent = job.parent.digest;
        row.lambda = job.lambda;
      }
      row.status = std::string("error:") + to_string(e.kind()) + ":" + e.what();
      std::lock_guard lock(mu);
      ++local.failed;
    }
    store.append(row);
    std::lock_guard lock(mu);
    out.push_back(row);
  }
  if (counters) *counters = local;
  std::sort(out.begin(), out.end(), [](const ResultRow& a, const ResultRow& b) { return a.digest < b.digest; });
  return out;
}

AdaptiveBuild build_adaptive_for(const ArchConfig& arch, const ExperimentPlan& plan, const WindowedDataset& train,
                                 const WindowedDataset& test, double max_drop) {
  if (arch.all_binary()) {
    fail(ErrorKind::selection, "adaptive inference refused: fully binarized backbones give uncalibrated score margins");
  }
  AdaptiveBuild out;
  out.arch = arch;
  TrainProtocol proto = plan.protocol;
  proto.seed = plan.seed;
  const Network model = train_slimmable(Network::instantiate(arch, plan.seed), train, proto);
  const CompiledModel cm = compile(model, kSupportedWidths);
  const auto holdout_idx = stratified_split(train.labels, train.n_classes, proto.holdout_fraction, proto.seed).second;
  const WindowedDataset holdout = train.subset(holdout_idx);
  out.width_choice = choose_width(cm, holdout, plan.theta);
  const auto& val_sweep = out.width_choice.width == 0.25 ? out.width_choice.sweep_025 : out.width_choice.sweep_050;
  const SweepPoint chosen = pick_threshold(val_sweep, val_sweep.back().score, max_drop);
  out.model = make_adaptive(cm, out.width_choice.width, chosen.threshold, plan.theta);
  out.test_sweep = threshold_sweep(out.model, test);
  out.static_score = out.test_sweep.back().score;
  out.static_cost = out.model.cost_big();
  out.static_file_bytes = serialize(compile(model, {1.0})).size();
  out.adaptive_file_bytes = serialize(out.model.model).size();
  return out;
}

AdaptiveBuild build_adaptive(const std::vector<ResultRow>& rows, const ExperimentPlan& plan,
                             const WindowedDataset& train, const WindowedDataset& test, double max_drop) {
  const auto front = pareto_rows(rows, FrontMetric::cycles);
  std::vector<ParetoPoint> pts;
  for (const auto& r : front) pts.push_back({r.bacc, r.cycle_units, r.digest});
  const std::size_t idx = select_backbone(pts);
  const ResultRow& row = front[idx];
  const Network trained = load_network(row.artifact);
  AdaptiveBuild out = build_adaptive_for(trained.arch, plan, train, test, max_drop);
  out.backbone_row = row;
  return out;
}

}  // namespace shar
