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

// subbyte_har: command-line front end for data generation, training, search, compilation,
// evaluation and adaptive execution.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "shar/adaptive.hpp"
#include "shar/data.hpp"
#include "shar/engine.hpp"
#include "shar/nas.hpp"
#include "shar/network.hpp"
#include "shar/search.hpp"
#include "shar/train.hpp"

namespace fs = std::filesystem;
using namespace shar;

namespace {

std::string output_root() {
  const char* env = std::getenv("SUBBYTE_HAR_DIR");
  return env && *env ? env : "subbyte_har_out";
}

std::string under_root(const std::string& name) { return (fs::path(output_root()) / name).string(); }

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path);
  os << text;
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

ThetaTable theta_from(const std::string& path) { return path.empty() ? ThetaTable{} : ThetaTable::load(path); }

std::vector<int> argmax_rows(const std::vector<double>& scores, int k) {
  std::vector<int> out(scores.size() / k);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* r = scores.data() + i * k;
    out[i] = static_cast<int>(std::max_element(r, r + k) - r);
  }
  return out;
}

std::vector<int> argmax_rows(const std::vector<std::int32_t>& scores, int k) {
  std::vector<int> out(scores.size() / k);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int32_t* r = scores.data() + i * k;
    out[i] = static_cast<int>(std::max_element(r, r + k) - r);
  }
  return out;
}

bool has_tie(const std::int32_t* r, int k) {
  const std::int32_t top = *std::max_element(r, r + k);
  return std::count(r, r + k, top) > 1;
}

// ---- options shared by several commands ---------------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", c.out, out_help);
}

struct ProtocolFlags {
  int epochs = 100;
  double lr = 1e-3;
  int batch = 32;
  double weight_decay = 0.0;
  bool verbose = false;
};

void add_protocol(CLI::App* cmd, ProtocolFlags& p) {
  cmd->add_option("--epochs", p.epochs, "Maximum training epochs")->capture_default_str();
  cmd->add_option("--lr", p.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--batch-size", p.batch, "Mini-batch size")->capture_default_str();
  cmd->add_option("--weight-decay", p.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_flag("--verbose", p.verbose, "Log one line per epoch to stderr");
}

TrainProtocol make_protocol(const ProtocolFlags& f, std::uint64_t seed) {
  TrainProtocol p;
  p.max_epochs = f.epochs;
  p.initial_lr = f.lr;
  p.batch_size = f.batch;
  p.weight_decay = f.weight_decay;
  p.seed = seed;
  p.log = f.verbose ? &std::cerr : nullptr;
  p.validate();
  return p;
}

struct ArchFlags {
  std::string file;
  std::string tmpl = "B";
  std::string c_out = "16,16";
  int k = 7;
  std::string pool = "2,2";
  int bits = 8;
};

void add_arch(CLI::App* cmd, ArchFlags& a) {
  cmd->add_option("--arch", a.file, "Architecture config file (key=value); overrides the flags below");
  cmd->add_option("--template", a.tmpl, "Template A or B")->check(CLI::IsMember({"A", "B"}))->capture_default_str();
  cmd->add_option("--c-out", a.c_out, "Filters per conv layer")->capture_default_str();
  cmd->add_option("--k", a.k, "Kernel size")->capture_default_str();
  cmd->add_option("--pool", a.pool, "Pool size per conv layer (0 = none)")->capture_default_str();
  cmd->add_option("--bits", a.bits, "Uniform weight/activation bit-width")->capture_default_str();
}

ArchConfig make_arch(const ArchFlags& a, const WindowedDataset& data) {
  if (!a.file.empty()) return parse_arch_config(read_text(a.file));
  ArchConfig cfg;
  cfg.tmpl = a.tmpl == "A" ? Template::A : Template::B;
  cfg.c_out = parse_int_list(a.c_out);
  cfg.k = a.k;
  for (int s : parse_int_list(a.pool)) cfg.pool.push_back(s == 0 ? PoolSpec{false, 2} : PoolSpec{true, s});
  cfg.n_classes = data.n_classes;
  cfg.in_channels = data.channels;
  cfg.length = data.length;
  if (!is_supported_bits(a.bits)) fail(ErrorKind::config, "bit-width must be one of 1,2,4,8");
  cfg.set_uniform_bits(a.bits);
  cfg.validate();
  return cfg;
}

ExperimentPlan load_plan(const std::string& path, std::uint64_t seed, int jobs, const std::string& theta) {
  ExperimentPlan plan = path.empty() ? ExperimentPlan{} : ExperimentPlan::parse(read_text(path));
  plan.seed = seed;
  plan.protocol.seed = seed;
  if (jobs > 0) plan.jobs = jobs;
  plan.theta = theta_from(theta);
  plan.validate();
  return plan;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized tiny 1D CNNs for time-series classification: train, search, compile, run."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // gen-data
  Common gen_c;
  SynthOptions synth;
  int test_per_class = 100;
  auto* gen = app.add_subcommand("gen-data", "Write synthetic train.csv and test.csv");
  add_common(gen, gen_c, "Output directory");
  gen->add_option("--n-per-class", synth.n_per_class, "Training windows per class")->capture_default_str();
  gen->add_option("--test-per-class", test_per_class, "Test windows per class")->capture_default_str();
  gen->add_option("--classes", synth.n_classes, "Number of classes")->capture_default_str();
  gen->add_option("--channels", synth.channels, "Channels per window")->capture_default_str();
  gen->add_option("--length", synth.length, "Samples per window")->capture_default_str();
  gen->add_option("--easy-fraction", synth.easy_fraction, "Fraction of low-noise windows")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  // train
  Common train_c;
  ProtocolFlags train_p;
  ArchFlags train_a;
  std::string train_data;
  bool slimmable = false;
  auto* train_cmd = app.add_subcommand("train", "Quantization-aware training of one architecture");
  add_common(train_cmd, train_c, "Trained model file (JSON)");
  add_protocol(train_cmd, train_p);
  add_arch(train_cmd, train_a);
  train_cmd->add_option("--data", train_data, "Training CSV");
  train_cmd->add_flag("--slimmable", slimmable, "Train jointly at widths 0.25, 0.5 and 1.0");

  // grid
  Common grid_c;
  std::string grid_plan, grid_train, grid_test, grid_theta;
  int grid_jobs = 0;
  auto* grid = app.add_subcommand("grid", "Quantized grid search over a plan");
  add_common(grid, grid_c, "Results directory");
  grid->add_option("--plan", grid_plan, "Plan file (key=value)");
  grid->add_option("--train", grid_train, "Training CSV");
  grid->add_option("--test", grid_test, "Test CSV");
  grid->add_option("--jobs", grid_jobs, "Parallel training jobs");
  grid->add_option("--theta", grid_theta, "Cycle-unit table");

  // nas
  Common nas_c;
  std::string nas_plan, nas_train, nas_test, nas_theta, nas_model;
  int nas_jobs = 0;
  auto* nas_cmd = app.add_subcommand("nas", "Mixed-precision search from the 8-bit memory front (or one model)");
  add_common(nas_cmd, nas_c, "Results directory");
  nas_cmd->add_option("--plan", nas_plan, "Plan file (key=value)");
  nas_cmd->add_option("--train", nas_train, "Training CSV");
  nas_cmd->add_option("--test", nas_test, "Test CSV");
  nas_cmd->add_option("--jobs", nas_jobs, "Parallel search jobs");
  nas_cmd->add_option("--theta", nas_theta, "Cycle-unit table");
  nas_cmd->add_option("--model", nas_model, "Search from this trained model only and write the lambda sweep CSV");

  // compile
  Common comp_c;
  std::string comp_model, comp_dump, comp_theta, comp_widths = "1.0";
  auto* comp = app.add_subcommand("compile", "Lower a trained model to the integer engine");
  add_common(comp, comp_c, "Compiled model file");
  comp->add_option("--model", comp_model, "Trained model (JSON)");
  comp->add_option("--widths", comp_widths, "Widths to emit requantization banks for")->capture_default_str();
  comp->add_option("--dump-json", comp_dump, "Also write a lossless JSON rendering of the compiled model");
  comp->add_option("--theta", comp_theta, "Cycle-unit table");

  // eval
  Common eval_c;
  std::string eval_model, eval_compiled, eval_data, engine = "both";
  double eval_width = 1.0;
  auto* eval = app.add_subcommand("eval", "Metrics of the float and/or integer engine");
  add_common(eval, eval_c, "Metrics CSV (stdout when absent)");
  eval->add_option("--model", eval_model, "Trained model (JSON)");
  eval->add_option("--compiled", eval_compiled, "Compiled model; compiled from --model when absent");
  eval->add_option("--data", eval_data, "Evaluation CSV");
  eval->add_option("--engine", engine, "float, integer or both")
      ->check(CLI::IsMember({"float", "integer", "both"}))
      ->capture_default_str();
  eval->add_option("--width", eval_width, "Execution width")->capture_default_str();

  // adaptive
  Common ad_c;
  ProtocolFlags ad_p;
  ArchFlags ad_a;
  std::string ad_results, ad_train, ad_test, ad_theta, ad_plan;
  double max_drop = 1.0;
  auto* ad = app.add_subcommand("adaptive", "Build a big/little adaptive model and its threshold sweep");
  add_common(ad, ad_c, "Output directory");
  add_protocol(ad, ad_p);
  add_arch(ad, ad_a);
  ad->add_option("--results", ad_results, "Results CSV: select the backbone on its cycle front");
  ad->add_option("--plan", ad_plan, "Plan file (training protocol)");
  ad->add_option("--train", ad_train, "Training CSV");
  ad->add_option("--test", ad_test, "Test CSV");
  ad->add_option("--theta", ad_theta, "Cycle-unit table");
  ad->add_option("--max-drop", max_drop, "Allowed holdout bAcc drop (points) when picking the threshold")
      ->capture_default_str();

  // sweep
  Common sw_c;
  std::string sw_model, sw_data, sw_theta;
  auto* sw = app.add_subcommand("sweep", "Threshold sweep of an adaptive compiled model");
  add_common(sw, sw_c, "Sweep CSV");
  sw->add_option("--model", sw_model, "Adaptive compiled model");
  sw->add_option("--data", sw_data, "Evaluation CSV");
  sw->add_option("--theta", sw_theta, "Cycle-unit table");

  // report
  Common rep_c;
  std::string rep_results;
  auto* rep = app.add_subcommand("report", "Pareto tables from a results CSV");
  add_common(rep, rep_c, "Output directory");
  rep->add_option("--results", rep_results, "Results CSV");

  for (auto* cmd : app.get_subcommands({})) cmd->allow_extras(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 1;
  }

  try {
    if (gen->parsed()) {
      const std::string dir = gen_c.out.empty() ? output_root() : gen_c.out;
      synth.seed = gen_c.seed;
      const auto tr = synth_har(synth);
      SynthOptions te = synth;
      te.n_per_class = test_per_class;
      te.seed = gen_c.seed + 1;
      const auto ts = synth_har(te);
      fs::create_directories(dir);
      save_csv(tr, (fs::path(dir) / "train.csv").string());
      save_csv(ts, (fs::path(dir) / "test.csv").string());
      std::cout << "# seed=" << gen_c.seed << "\ntrain," << tr.size() << "\ntest," << ts.size() << '\n';
    } else if (train_cmd->parsed()) {
      const auto data = load_csv(train_data.empty() ? under_root("train.csv") : train_data);
      const auto proto = make_protocol(train_p, train_c.seed);
      const ArchConfig arch = make_arch(train_a, data);
      Network net = Network::instantiate(arch, train_c.seed);
      net = slimmable ? train_slimmable(std::move(net), data, proto) : train_fixed(std::move(net), data, proto);
      const std::string out = train_c.out.empty() ? under_root("model.json") : train_c.out;
      ensure_parent(out);
      save_network(net, out);
      const auto m = evaluate(net, data);
      std::cout << "# seed=" << train_c.seed << "\narch," << arch_summary(arch) << "\nepochs," << net.history.size()
                << "\ntrain_bacc," << 100.0 * m.balanced_accuracy << "\nmodel," << out << '\n';
    } else if (grid->parsed()) {
      ExperimentPlan plan = load_plan(grid_plan, grid_c.seed, grid_jobs, grid_theta);
      if (!grid_c.out.empty()) plan.out_dir = grid_c.out;
      else if (grid_plan.empty()) plan.out_dir = output_root();
      const auto tr = load_csv(grid_train.empty() ? under_root("train.csv") : grid_train);
      const auto ts = load_csv(grid_test.empty() ? under_root("test.csv") : grid_test);
      ResultsStore store((fs::path(plan.out_dir) / "results.csv").string());
      RunCounters rc;
      const auto rows = run_grid(plan, tr, ts, store, &rc);
      std::cout << "# seed=" << plan.seed << "\nrows," << rows.size() << "\ntrained," << rc.trained << "\nskipped,"
                << rc.skipped << "\nfailed," << rc.failed << "\nresults," << store.path() << '\n';
      if (rc.failed > 0 && rc.trained == 0 && rc.skipped == 0) fail(ErrorKind::numeric, "every grid run failed");
    } else if (nas_cmd->parsed()) {
      ExperimentPlan plan = load_plan(nas_plan, nas_c.seed, nas_jobs, nas_theta);
      if (!nas_c.out.empty()) plan.out_dir = nas_c.out;
      else if (nas_plan.empty()) plan.out_dir = output_root();
      const auto tr = load_csv(nas_train.empty() ? under_root("train.csv") : nas_train);
      if (!nas_model.empty()) {
        TrainProtocol proto = plan.protocol;
        const auto results = nas_search(load_network(nas_model), tr, proto, plan.nas);
        const std::string path = (fs::path(plan.out_dir) / "nas_sweep.csv").string();
        write_text(path, sweep_report_csv(results));
        std::cout << "# seed=" << plan.seed << '\n' << sweep_report_csv(results);
      } else {
        const auto ts = load_csv(nas_test.empty() ? under_root("test.csv") : nas_test);
        ResultsStore store((fs::path(plan.out_dir) / "results.csv").string());
        RunCounters rc;
        const auto rows = run_mixed(plan, store.rows(), tr, ts, store, &rc);
        std::cout << "# seed=" << plan.seed << "\nmixed_rows," << rows.size() << "\ntrained," << rc.trained
                  << "\nskipped," << rc.skipped << "\nfailed," << rc.failed << '\n';
      }
    } else if (comp->parsed()) {
      const Network net = load_network(comp_model.empty() ? under_root("model.json") : comp_model);
      const CompiledModel cm = compile(net, parse_double_list(comp_widths));
      const std::string out = comp_c.out.empty() ? under_root("model.sbh") : comp_c.out;
      ensure_parent(out);
      save_compiled(cm, out);
      if (!comp_dump.empty()) write_text(comp_dump, compiled_to_json(cm));
      const auto report = cost_report(cm, 1.0, theta_from(comp_theta));
      write_text(out + ".cost.csv", report.to_csv());
      std::cout << "# seed=" << comp_c.seed << '\n' << report.to_csv();
    } else if (eval->parsed()) {
      const auto data = load_csv(eval_data.empty() ? under_root("test.csv") : eval_data);
      const int k = data.n_classes;
      std::ostringstream os;
      os << "# seed=" << eval_c.seed << "\nengine,accuracy,bacc,macro_f1\n";
      std::vector<int> float_pred, int_pred;
      std::vector<std::int32_t> int_scores;
      const bool want_float = engine != "integer";
      const bool want_int = engine != "float";
      Network net;
      if (want_float || eval_compiled.empty()) {
        net = load_network(eval_model.empty() ? under_root("model.json") : eval_model);
      }
      if (want_float) {
        const Tensor s = net.predict(data.all(), eval_width);
        float_pred = argmax_rows(std::vector<double>(s.data(), s.data() + s.size()), k);
        const auto m = compute_metrics(float_pred, data.labels, k);
        os << "float," << 100.0 * m.accuracy << ',' << 100.0 * m.balanced_accuracy << ',' << 100.0 * m.macro_f1 << '\n';
      }
      if (want_int) {
        const CompiledModel cm = eval_compiled.empty() ? compile(net, {eval_width}) : load_compiled(eval_compiled);
        const auto x = quantize_input(cm, data.all());
        int_scores = integer_forward(cm, x, static_cast<int>(data.size()), eval_width);
        int_pred = argmax_rows(int_scores, k);
        const auto m = compute_metrics(int_pred, data.labels, k);
        os << "integer," << 100.0 * m.accuracy << ',' << 100.0 * m.balanced_accuracy << ',' << 100.0 * m.macro_f1
           << '\n';
      }
      if (want_float && want_int) {
        std::size_t agree = 0, compared = 0, ties = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
          if (has_tie(int_scores.data() + i * k, k)) {
            ++ties;
            continue;
          }
          ++compared;
          agree += float_pred[i] == int_pred[i];
        }
        os << "# argmax_agreement,compared,ties\nagreement," << agree << ',' << compared << ',' << ties << '\n';
      }
      if (eval_c.out.empty()) std::cout << os.str();
      else write_text(eval_c.out, os.str());
    } else if (ad->parsed()) {
      ExperimentPlan plan = load_plan(ad_plan, ad_c.seed, 0, ad_theta);
      if (ad_plan.empty()) plan.protocol = make_protocol(ad_p, ad_c.seed);
      const std::string dir = ad_c.out.empty() ? output_root() : ad_c.out;
      const auto tr = load_csv(ad_train.empty() ? under_root("train.csv") : ad_train);
      const auto ts = load_csv(ad_test.empty() ? under_root("test.csv") : ad_test);
      const AdaptiveBuild b = ad_results.empty()
                                  ? build_adaptive_for(make_arch(ad_a, tr), plan, tr, ts, max_drop)
                                  : build_adaptive(ResultsStore(ad_results).rows(), plan, tr, ts, max_drop);
      fs::create_directories(dir);
      save_compiled(b.model.model, (fs::path(dir) / "adaptive.sbh").string());
      write_text((fs::path(dir) / "adaptive_sweep.csv").string(), sweep_csv(b.test_sweep));
      write_text((fs::path(dir) / "width_sweep_025.csv").string(), sweep_csv(b.width_choice.sweep_025));
      write_text((fs::path(dir) / "width_sweep_050.csv").string(), sweep_csv(b.width_choice.sweep_050));
      const auto& pts = b.test_sweep;
      const auto at = std::find_if(pts.begin(), pts.end(), [&](const SweepPoint& p) {
        return p.threshold >= b.model.threshold();
      });
      const SweepPoint op = at == pts.end() ? pts.back() : *at;
      std::cout << "# seed=" << plan.seed << "\narch," << arch_summary(b.arch) << "\nsmall_width,"
                << b.model.small_width() << "\nthreshold," << b.model.threshold() << "\nstatic_bacc,"
                << b.static_score << "\nstatic_cost," << b.static_cost << "\nadaptive_bacc," << op.score
                << "\nadaptive_cost," << op.avg_cost << "\ncost_reduction_pct,"
                << 100.0 * (1.0 - op.avg_cost / b.static_cost) << "\nstatic_file_bytes," << b.static_file_bytes
                << "\nadaptive_file_bytes," << b.adaptive_file_bytes << '\n';
    } else if (sw->parsed()) {
      const CompiledModel cm = load_compiled(sw_model.empty() ? under_root("adaptive.sbh") : sw_model);
      const auto data = load_csv(sw_data.empty() ? under_root("test.csv") : sw_data);
      const AdaptiveModel am = make_adaptive(cm, cm.banks.front().width, cm.threshold, theta_from(sw_theta));
      const std::string csv = sweep_csv(threshold_sweep(am, data));
      if (sw_c.out.empty()) std::cout << "# seed=" << sw_c.seed << '\n' << csv;
      else write_text(sw_c.out, csv);
    } else if (rep->parsed()) {
      const auto rows = ResultsStore(rep_results.empty() ? under_root("results.csv") : rep_results).rows();
      if (rows.empty()) fail(ErrorKind::data, "results table is empty");
      const std::string dir = rep_c.out.empty() ? output_root() : rep_c.out;
      std::cout << "# seed=" << rep_c.seed << "\nfront,metric,points\n";
      auto emit = [&](const std::string& group, const std::vector<ResultRow>& subset) {
        if (subset.empty()) return;
        for (auto metric : {FrontMetric::memory, FrontMetric::cycles}) {
          const std::string name = metric == FrontMetric::memory ? "memory" : "cycles";
          const auto front = pareto_rows(subset, metric);
          write_text((fs::path(dir) / ("front_" + group + "_" + name + ".csv")).string(), rows_csv(front));
          std::cout << group << ',' << name << ',' << front.size() << '\n';
        }
      };
      for (int b : {1, 2, 4, 8}) {
        std::vector<ResultRow> s;
        const std::string tag = std::to_string(b);
        for (const auto& r : rows) {
          const bool uniform = r.stage == "grid" && r.weight_bits.find_first_not_of(tag + " ") == std::string::npos &&
                               r.act_bits.find_first_not_of(tag + " ") == std::string::npos;
          if (uniform) s.push_back(r);
        }
        emit("bits" + tag, s);
      }
      std::vector<ResultRow> mixed;
      for (const auto& r : rows) {
        if (r.stage == "mixed") mixed.push_back(r);
      }
      emit("mixed", mixed);
      emit("all", rows);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_status(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: numeric: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
