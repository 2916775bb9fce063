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

#pragma once

// Pipeline driver: quantized grid search per bit-width, mixed-precision search seeded from the
// 8-bit memory front, Pareto extraction over memory and cycle units, adaptive-model construction.

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "shar/adaptive.hpp"
#include "shar/data.hpp"
#include "shar/engine.hpp"
#include "shar/model_space.hpp"
#include "shar/nas.hpp"
#include "shar/train.hpp"

namespace shar {

struct ExperimentPlan {
  Template tmpl = Template::B;
  std::vector<int> c_out_choices;     // empty => template default
  std::vector<int> k_choices;         // empty => {7, 15}
  std::vector<PoolSpec> pool_choices; // empty => template default
  std::vector<int> bits = {1, 2, 4, 8};
  TrainProtocol protocol;
  NasConfig nas;
  ThetaTable theta;
  std::string out_dir = "results";
  int jobs = 1;
  std::uint64_t seed = 0;

  void validate() const;
  GridSpec grid_spec(int bits, const WindowedDataset& data) const;
  // key=value text: template, c_out, k, pool (0 = absent), bits, lr, batch_size, max_epochs,
  // weight_decay, lambda_sweep, search_epochs, jobs, seed, out.
  static ExperimentPlan parse(const std::string& text);
  std::string to_text() const;
};

struct ResultRow {
  std::string digest;
  std::string stage;   // grid | mixed
  std::string parent;  // digest of the 8-bit row a mixed row was searched from
  std::string arch;    // arch_summary
  std::string weight_bits;
  std::string act_bits;
  double lambda = 0.0;
  double accuracy = 0.0;  // percent, test split, integer engine
  double bacc = 0.0;
  double macro_f1 = 0.0;
  std::size_t memory_bytes = 0;
  double cycle_units = 0.0;
  std::string artifact;  // trained model (JSON); the compiled model sits next to it (.sbh)
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

// Append-only CSV table of result rows, safe for concurrent appends.
class ResultsStore {
 public:
  explicit ResultsStore(std::string path);
  const std::string& path() const { return path_; }
  std::vector<ResultRow> rows() const;
  bool contains(const std::string& digest) const;
  void append(const ResultRow& row);

  static std::string header();
  static std::string to_line(const ResultRow& row);
  static ResultRow from_line(const std::string& line);

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::vector<ResultRow> cache_;
};

std::string run_digest(const ArchConfig& arch, const TrainProtocol& protocol, std::uint64_t seed,
                       const std::string& dataset_digest, const std::string& extra = "");

struct RunCounters {
  int trained = 0;
  int skipped = 0;
  int failed = 0;
};

// Trains, evaluates (integer engine, test split), compiles and records every config x bit-width
// not already in the store. Failures are recorded as rows and do not stop the sweep.
std::vector<ResultRow> run_grid(const ExperimentPlan& plan, const WindowedDataset& train, const WindowedDataset& test,
                                ResultsStore& store, RunCounters* counters = nullptr);

// Runs the lambda sweep from every 8-bit model on the memory front and appends mixed rows
// (extracted assignments already present are collapsed).
std::vector<ResultRow> run_mixed(const ExperimentPlan& plan, const std::vector<ResultRow>& eight_bit_rows,
                                 const WindowedDataset& train, const WindowedDataset& test, ResultsStore& store,
                                 RunCounters* counters = nullptr);

enum class FrontMetric { memory, cycles };
// Successful rows on the (bAcc, cost) front, ordered by increasing score.
std::vector<ResultRow> pareto_rows(const std::vector<ResultRow>& rows, FrontMetric metric);

struct AdaptiveBuild {
  ResultRow backbone_row;
  ArchConfig arch;
  AdaptiveModel model;
  WidthChoice width_choice;                // on the training holdout
  std::vector<SweepPoint> test_sweep;
  double static_score = 0.0;  // full-width backbone, test bAcc (percent)
  double static_cost = 0.0;
  std::size_t static_file_bytes = 0;
  std::size_t adaptive_file_bytes = 0;
};

// Selects the backbone on the cycle front by the gain metric, retrains it slimmably, picks the
// small width and threshold on a holdout of the training data, and sweeps on the test split.
AdaptiveBuild build_adaptive(const std::vector<ResultRow>& rows, const ExperimentPlan& plan,
                             const WindowedDataset& train, const WindowedDataset& test, double max_drop = 1.0);
// Same, for a given backbone architecture.
AdaptiveBuild build_adaptive_for(const ArchConfig& arch, const ExperimentPlan& plan, const WindowedDataset& train,
                                 const WindowedDataset& test, double max_drop = 1.0);

std::string rows_csv(const std::vector<ResultRow>& rows);

}  // namespace shar
