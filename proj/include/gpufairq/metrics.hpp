// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Analyses over invocation records and the simulation audit: weighted
// average latency, per-function statistics, windowed service fairness
// against the pairwise bound, cold-hit rates, and the export formats.

#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpufairq/mqfq.hpp"
#include "gpufairq/records.hpp"

namespace gpufairq {

// sum_f N_f * L_f / sum_f N_f. Throws ValidationError on empty input.
double weighted_avg_latency(std::span<const InvocationRecord> records);

struct FunctionStats {
  std::size_t count = 0;
  double mean_latency_s = 0.0;
  // Unbiased (n - 1) sample variance; 0 for a single sample.
  double var_latency_s = 0.0;
  double cold_hit_pct = 0.0;
};

std::map<std::string, FunctionStats> per_function_stats(std::span<const InvocationRecord> records);

// Nearest-rank percentile of end-to-end latency, q in [0, 100].
double latency_percentile(std::span<const InvocationRecord> records, double q);

// Fraction in [0, 1] of records that started cold; 0 for no records.
double cold_hit_rate(std::span<const InvocationRecord> records);

struct PoolCurvePoint {
  int pool_size = 0;
  double cold_hit_pct = 0.0;
};

// One point per (pool size, records of a run at that size), sorted by size.
std::vector<PoolCurvePoint> cold_hit_curve(
    const std::vector<std::pair<int, std::vector<InvocationRecord>>>& runs);

struct ServiceWindow {
  double window_start_s = 0.0;
  double window_s = 0.0;
  // GPU execution time each function received inside the window; container
  // start-up and host-to-device transfer are not service.
  std::map<std::string, double> service_s;
  std::vector<std::string> backlogged;
  bool compared = false;  // false: fewer than two co-backlogged functions
  std::string max_function;
  std::string min_function;
  int D = 1;
  double max_gap = 0.0;
  double bound = 0.0;
  double bound_conservative = 0.0;
  bool violated = false;
  bool violated_conservative = false;
};

// Splits [0, makespan) into windows. A function takes part in a window when
// it was backlogged at the window start and at every event sample inside
// it. The gap is between the extremal weight-normalized services and is
// checked against fairness_bound for that ordered pair, with the
// window-average execution times of the pair and the largest total
// concurrency seen in the window.
std::vector<ServiceWindow> service_gap_report(std::span<const InvocationRecord> records,
                                              const SimAudit& audit, double makespan_s,
                                              const SchedulerConfig& cfg,
                                              double window_s = 30.0);

struct Summary {
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t invocations = 0;
  double weighted_avg_latency_s = 0.0;
  double p50_latency_s = 0.0;
  double p99_latency_s = 0.0;
  double cold_hit_pct = 0.0;
  double mean_util = 0.0;
  std::size_t windows_compared = 0;
  std::size_t violations = 0;
  std::size_t violations_conservative = 0;
  double max_gap_worst_window = 0.0;
  std::map<std::string, FunctionStats> per_function;
  // Ordered "section.key" -> value pairs echoed into summary.json.
  std::vector<std::pair<std::string, std::string>> config;
};

Summary summarize(PolicyKind policy, std::span<const InvocationRecord> records,
                  const std::vector<ServiceWindow>& windows, double mean_util,
                  std::uint64_t seed,
                  std::vector<std::pair<std::string, std::string>> config = {});

void write_invocations_csv(std::ostream& out, std::span<const InvocationRecord> records);
void write_windows_csv(std::ostream& out, const std::vector<ServiceWindow>& windows);
std::string summary_json(const Summary& s);

// Writes invocations.csv, windows.csv and summary.json into out_dir
// (created if missing), each atomically.
void export_results(std::span<const InvocationRecord> records,
                    const std::vector<ServiceWindow>& windows, const Summary& summary,
                    const std::string& out_dir);

std::vector<InvocationRecord> parse_invocations_csv(std::istream& in, const std::string& source);

}  // namespace gpufairq
