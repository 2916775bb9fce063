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

// Acceptance run: every criterion is a set of oracle test cases selected by name. Prints one
// PASS/FAIL line per criterion; the full doctest log goes to acceptance_details.log.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "acceptance.hpp"

namespace {

std::mutex g_mu;
std::map<int, std::vector<std::string>> g_notes;

// Counts executed and failed test cases across every context run.
struct CaseCounter : doctest::IReporter {
  static inline int started = 0;
  static inline int failed = 0;

  explicit CaseCounter(const doctest::ContextOptions&) {}
  void report_query(const doctest::QueryData&) override {}
  void test_run_start() override {}
  void test_run_end(const doctest::TestRunStats&) override {}
  void test_case_start(const doctest::TestCaseData&) override { ++started; }
  void test_case_reenter(const doctest::TestCaseData&) override {}
  void test_case_end(const doctest::CurrentTestCaseStats& s) override {
    if (!s.testCaseSuccess) ++failed;
  }
  void test_case_exception(const doctest::TestCaseException&) override {}
  void subcase_start(const doctest::SubcaseSignature&) override {}
  void subcase_end() override {}
  void log_assert(const doctest::AssertData&) override {}
  void log_message(const doctest::MessageData&) override {}
  void test_case_skipped(const doctest::TestCaseData&) override {}
};

DOCTEST_REGISTER_LISTENER("case-counter", 1, CaseCounter);

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> cases;  // doctest name filters (wildcards allowed, no commas)
  bool gating = true;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> c = {
      {1, "kernel oracle equivalence", {"acceptance 1:*"}},
      {2, "packing", {"packing golden bytes", "unpacking golden bytes", "pack and unpack roundtrip*",
                      "padding bits of the last byte are zero", "signed values roundtrip through offset encoding"}},
      {3, "gradient suite",
       {"acceptance 3:*", "conv1d gradients match central finite differences", "batchnorm gradients*",
        "fully connected gradients*", "maxpool gradient*", "cross entropy gradient*", "activation clip gradient*",
        "weight clip gradient*", "quantized weight clip gradient*", "straight-through input gradient*"}},
      {4, "XNOR-popcount", {"binary dot product"}},
      {5, "mixed-precision search sanity",
       {"expected bits hand values", "size penalty decides the reconstruction task at both extremes",
        "acceptance 5:*"}},
      {6, "slimmable consistency",
       {"width slicing equals full width with masked channels", "slimmable gradients are the sum*",
        "slimmable training keeps private BatchNorm statistics per width", "acceptance 6:*"}},
      {7, "adaptive properties",
       {"adaptive runtime endpoints and accounting", "early commits are nested in the threshold",
        "per-sample classification matches the sweep bookkeeping"}},
      {8, "adaptive cost reduction on easy-heavy synthetic data", {"acceptance 8:*"}},
      {9, "adaptive memory overhead", {"acceptance 9:*"}},
      {10, "end-to-end reduced grid", {"acceptance 10:*"}},
  };
  return c;
}

}  // namespace

namespace shar::acceptance {

void note(int criterion, const std::string& text) {
  std::lock_guard<std::mutex> lock(g_mu);
  g_notes[criterion].push_back(text);
}

}  // namespace shar::acceptance

int main(int argc, char** argv) {
  std::string log_path = "acceptance_details.log";
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--log=", 0) == 0) log_path = a.substr(6);
    else only.push_back(std::stoi(a));
  }
  std::ofstream log(log_path);
  int gating_failures = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const int started_before = CaseCounter::started, failed_before = CaseCounter::failed;
    const auto t0 = std::chrono::steady_clock::now();
    int rc = 0;
    for (const auto& filter : c.cases) {
      doctest::Context ctx;
      ctx.setOption("test-case", filter.c_str());
      ctx.setOption("no-version", true);
      ctx.setCout(&log);
      log << "==== criterion " << c.id << ": " << filter << '\n';
      rc |= ctx.run();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const int ran = CaseCounter::started - started_before, failed = CaseCounter::failed - failed_before;
    const bool pass = rc == 0 && failed == 0 && ran >= static_cast<int>(c.cases.size());
    if (!pass && c.gating) ++gating_failures;
    std::string detail = std::to_string(ran) + " cases";
    if (failed) detail += ", " + std::to_string(failed) + " failed";
    for (const auto& n : g_notes[c.id]) detail += "; " + n;
    char secs_text[32];
    std::snprintf(secs_text, sizeof secs_text, "%.1f", secs);
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << " (" << secs_text << " s) " << detail
              << std::endl;
  }
  std::cout << "INFO [11] WISDM reproduction is a stretch goal: run scripts/reproduce_wisdm.sh" << std::endl;
  return gating_failures == 0 ? 0 : 1;
}
