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

#include <gtest/gtest.h>

#include <json.hpp>
#include <random>
#include <sstream>

#include "gpufairq/error.hpp"
#include "gpufairq/metrics.hpp"
#include "gpufairq/sim.hpp"
#include "test_support.hpp"

namespace gpufairq {
namespace {

InvocationRecord rec(const std::string& fn, double arrival, double dispatch, double complete,
                     StartState st = StartState::GpuWarm) {
  InvocationRecord r;
  r.function = fn;
  r.arrival_s = arrival;
  r.dispatch_s = dispatch;
  r.complete_s = complete;
  r.start_state = st;
  r.gpu_exec_s = complete - dispatch;
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(WeightedLatency, DirectSubstitution) {
  std::vector<InvocationRecord> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(rec("a", 0, 0, 1.0));
  for (int i = 0; i < 5; ++i) rs.push_back(rec("b", 0, 0, 4.0));
  EXPECT_DOUBLE_EQ(weighted_avg_latency(rs), 2.0);
  EXPECT_DOUBLE_EQ(weighted_avg_latency(std::span(rs).first(10)), 1.0);
}

TEST(WeightedLatency, EqualsGrandMean) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<InvocationRecord> rs;
    double sum = 0;
    int n = 1 + static_cast<int>(rng() % 500);
    for (int i = 0; i < n; ++i) {
      double a = u(rng);
      double l = u(rng);
      rs.push_back(rec("f" + std::to_string(rng() % 7), a, a, a + l));
      sum += rs.back().latency_s();
    }
    EXPECT_NEAR(weighted_avg_latency(rs), sum / n, 1e-12);
  }
}

TEST(WeightedLatency, EmptyInputRejected) {
  EXPECT_THROW(weighted_avg_latency({}), ValidationError);
}

TEST(PerFunction, UnbiasedVariance) {
  std::vector<InvocationRecord> rs = {rec("a", 0, 0, 1), rec("a", 0, 0, 2), rec("a", 0, 0, 3),
                                      rec("b", 0, 0, 5, StartState::Cold)};
  auto st = per_function_stats(rs);
  EXPECT_EQ(st["a"].count, 3u);
  EXPECT_DOUBLE_EQ(st["a"].mean_latency_s, 2.0);
  EXPECT_DOUBLE_EQ(st["a"].var_latency_s, 1.0);
  EXPECT_DOUBLE_EQ(st["a"].cold_hit_pct, 0.0);
  EXPECT_DOUBLE_EQ(st["b"].var_latency_s, 0.0);
  EXPECT_DOUBLE_EQ(st["b"].cold_hit_pct, 100.0);
}

TEST(Percentile, NearestRank) {
  std::vector<InvocationRecord> rs;
  for (int i = 100; i >= 1; --i) rs.push_back(rec("a", 0, 0, i));
  EXPECT_DOUBLE_EQ(latency_percentile(rs, 50), 50);
  EXPECT_DOUBLE_EQ(latency_percentile(rs, 99), 99);
  EXPECT_DOUBLE_EQ(latency_percentile(rs, 100), 100);
  EXPECT_DOUBLE_EQ(latency_percentile(rs, 0), 1);
  EXPECT_DOUBLE_EQ(latency_percentile({}, 50), 0);
}

TEST(ColdHit, Rates) {
  std::vector<InvocationRecord> warm = {rec("a", 0, 0, 1), rec("a", 0, 0, 1, StartState::HostWarm)};
  EXPECT_DOUBLE_EQ(cold_hit_rate(warm), 0.0);
  warm.push_back(rec("a", 0, 0, 1, StartState::Cold));
  warm.push_back(rec("a", 0, 0, 1, StartState::Cold));
  EXPECT_DOUBLE_EQ(cold_hit_rate(warm), 0.5);
  EXPECT_DOUBLE_EQ(cold_hit_rate({}), 0.0);
}

TEST(ColdHit, NaiveRunIsAllCold) {
  SimConfig cfg;
  cfg.policy = PolicyKind::FcfsNaive;
  auto t = gen_zipf(std::vector<std::string>{"a"}, 1.5, 1.0, 30, 1);
  auto r = run(t, {testing::profile("a", 0.1, 0.5)}, cfg);
  EXPECT_DOUBLE_EQ(cold_hit_rate(r.records), 1.0);
}

TEST(ColdHit, CurveSortedByPoolSize) {
  std::vector<std::pair<int, std::vector<InvocationRecord>>> runs;
  runs.push_back({16, {rec("a", 0, 0, 1)}});
  runs.push_back({4, {rec("a", 0, 0, 1, StartState::Cold)}});
  auto curve = cold_hit_curve(runs);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_EQ(curve[0].pool_size, 4);
  EXPECT_DOUBLE_EQ(curve[0].cold_hit_pct, 100.0);
  EXPECT_DOUBLE_EQ(curve[1].cold_hit_pct, 0.0);
}

// Two functions backlogged over [0, 60) with D = 2 throughout.
SimAudit two_function_audit() {
  SimAudit audit;
  audit.backlog = {{0, "a", true}, {0, "b", true}, {60, "a", false}, {60, "b", false}};
  audit.concurrency = {{0, 0, 2}};
  return audit;
}

TEST(ServiceGap, ExtremalPairAgainstBound) {
  std::vector<InvocationRecord> rs = {rec("a", 0, 0, 10), rec("b", 0, 0, 4),
                                      rec("a", 10, 10, 20), rec("b", 4, 4, 8)};
  SchedulerConfig cfg;
  cfg.T = 1;
  auto ws = service_gap_report(rs, two_function_audit(), 60, cfg, 30);
  ASSERT_EQ(ws.size(), 2u);
  const auto& w = ws[0];
  EXPECT_TRUE(w.compared);
  EXPECT_EQ(w.max_function, "a");
  EXPECT_EQ(w.min_function, "b");
  EXPECT_DOUBLE_EQ(w.service_s.at("a"), 20);
  EXPECT_DOUBLE_EQ(w.service_s.at("b"), 8);
  EXPECT_DOUBLE_EQ(w.max_gap, 12);
  EXPECT_EQ(w.D, 2);
  // tau_a = 10, tau_b = 4 inside the window.
  EXPECT_DOUBLE_EQ(w.bound, fairness_bound(2, 1, 10, 4, 1, 1));
  EXPECT_DOUBLE_EQ(w.bound, 8);
  EXPECT_DOUBLE_EQ(w.bound_conservative, 16);
  EXPECT_TRUE(w.violated);
  EXPECT_FALSE(w.violated_conservative);
  // Nothing ran in the second window, so the gap is 0.
  EXPECT_TRUE(ws[1].compared);
  EXPECT_DOUBLE_EQ(ws[1].max_gap, 0);
}

TEST(ServiceGap, ServiceStartsAfterStartupOverhead) {
  auto r = rec("a", 0, 25, 40);
  r.gpu_exec_s = 10;  // 5 s of cold start before execution
  std::vector<InvocationRecord> rs = {r, rec("b", 0, 0, 40)};
  SimAudit audit = two_function_audit();
  auto ws = service_gap_report(rs, audit, 60, SchedulerConfig{}, 30);
  EXPECT_EQ(ws[0].service_s.count("a"), 0u);
  EXPECT_DOUBLE_EQ(ws[1].service_s.at("a"), 10);
}

TEST(ServiceGap, WeightsNormalizeService) {
  std::vector<InvocationRecord> rs = {rec("a", 0, 0, 20), rec("b", 0, 0, 10)};
  SchedulerConfig cfg;
  cfg.weights["a"] = 2;
  auto ws = service_gap_report(rs, two_function_audit(), 30, cfg, 30);
  ASSERT_EQ(ws.size(), 1u);
  EXPECT_DOUBLE_EQ(ws[0].max_gap, 0);
}

TEST(ServiceGap, SingleFunctionHasNoComparison) {
  std::vector<InvocationRecord> rs = {rec("a", 0, 0, 50)};
  SimAudit audit;
  audit.backlog = {{0, "a", true}, {50, "a", false}};
  auto ws = service_gap_report(rs, audit, 50, SchedulerConfig{}, 30);
  ASSERT_EQ(ws.size(), 2u);
  for (const auto& w : ws) {
    EXPECT_FALSE(w.compared);
    EXPECT_DOUBLE_EQ(w.max_gap, 0);
  }
  std::ostringstream out;
  write_windows_csv(out, ws);
  EXPECT_EQ(lines_of(out.str())[1], "0.000000,0.000000,0.000000,no_comparison");
}

TEST(ServiceGap, BacklogMustHoldForWholeWindow) {
  SimAudit audit;
  audit.backlog = {{0, "a", true}, {0, "b", true}, {10, "b", false}, {12, "b", true}};
  std::vector<InvocationRecord> rs = {rec("a", 0, 0, 30), rec("b", 0, 0, 10)};
  auto ws = service_gap_report(rs, audit, 30, SchedulerConfig{}, 30);
  ASSERT_EQ(ws.size(), 1u);
  EXPECT_EQ(ws[0].backlogged, (std::vector<std::string>{"a"}));
  EXPECT_FALSE(ws[0].compared);
}

TEST(ServiceGap, SingleSlotBoundIsZero) {
  std::vector<std::string> names = {"a", "b", "c"};
  std::vector<FunctionProfile> ps;
  for (auto& n : names) ps.push_back(testing::profile(n, 1.0, 1.5));
  Trace t;
  for (int i = 0; i < 300; ++i) t.entries.push_back({0.0, names[i % 3]});
  SimConfig cfg;
  cfg.scheduler.d_max = 1;
  auto r = run(t, ps, cfg);
  auto ws = service_gap_report(r.records, r.audit, r.makespan_s, cfg.scheduler, 30);
  std::size_t compared = 0;
  for (const auto& w : ws) {
    if (!w.compared) continue;
    ++compared;
    EXPECT_EQ(w.D, 1);
    EXPECT_DOUBLE_EQ(w.bound, 0);
    // One slot round-robins equal jobs, so services differ by at most one job.
    EXPECT_LE(w.max_gap, 1.0 + 1e-9);
  }
  EXPECT_GT(compared, 5u);
}

TEST(Export, InvocationsCsvFormat) {
  std::vector<InvocationRecord> rs = {rec("a", 0.5, 1.25, 3.0, StartState::HostWarm)};
  rs[0].device = 1;
  std::ostringstream out;
  write_invocations_csv(out, rs);
  auto ls = lines_of(out.str());
  ASSERT_EQ(ls.size(), 2u);
  EXPECT_EQ(ls[0],
            "function,arrival_s,dispatch_s,complete_s,start_state,device,queue_latency_s,exec_s,"
            "latency_s");
  EXPECT_EQ(ls[1], "a,0.500000,1.250000,3.000000,host_warm,1,0.750000,1.750000,2.500000");
  EXPECT_EQ(out.str().find('\r'), std::string::npos);
}

TEST(Export, WindowsCsvFormat) {
  ServiceWindow w;
  w.window_start_s = 30;
  w.compared = true;
  w.max_gap = 1.5;
  w.bound = 22;
  std::ostringstream out;
  write_windows_csv(out, {w});
  auto ls = lines_of(out.str());
  EXPECT_EQ(ls[0], "window_start_s,max_gap,bound,violated");
  EXPECT_EQ(ls[1], "30.000000,1.500000,22.000000,false");
}

TEST(Export, ZeroRecordsGiveHeadersOnly) {
  testing::TempDir dir("export");
  Summary s = summarize(PolicyKind::Fcfs, {}, {}, 0, 1);
  export_results({}, {}, s, dir.file("out"));
  EXPECT_EQ(lines_of(testing::slurp(dir.file("out/invocations.csv"))).size(), 1u);
  EXPECT_EQ(testing::slurp(dir.file("out/windows.csv")), "window_start_s,max_gap,bound,violated\n");
  auto j = nlohmann::json::parse(testing::slurp(dir.file("out/summary.json")));
  EXPECT_EQ(j["policy"], "fcfs");
  EXPECT_EQ(j["invocations"], 0);
}

TEST(Export, SummaryJsonKeys) {
  std::vector<InvocationRecord> rs = {rec("a", 0, 0, 1), rec("a", 0, 0, 3, StartState::Cold)};
  auto s = summarize(PolicyKind::MqfqSticky, rs, {}, 0.5, 7, {{"scheduler.T", "10"}});
  auto j = nlohmann::json::parse(summary_json(s));
  for (const char* key : {"policy", "weighted_avg_latency_s", "per_function", "cold_hit_pct",
                          "mean_util", "config", "seed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["policy"], "mqfq");
  EXPECT_EQ(j["seed"], 7);
  EXPECT_DOUBLE_EQ(j["weighted_avg_latency_s"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j["cold_hit_pct"].get<double>(), 50.0);
  const auto& a = j["per_function"]["a"];
  for (const char* key : {"mean_latency_s", "var_latency_s", "count", "cold_hit_pct"})
    EXPECT_TRUE(a.contains(key)) << key;
  EXPECT_EQ(a["count"], 2);
  EXPECT_DOUBLE_EQ(a["var_latency_s"].get<double>(), 2.0);
  EXPECT_EQ(j["config"]["scheduler.T"], "10");
}

TEST(Export, RoundTripThroughCsv) {
  auto profiles = default_profiles();
  std::vector<std::string> names;
  for (auto& p : profiles) names.push_back(p.name);
  auto r = run(gen_zipf(names, 1.5, 0.5, 100, 2), profiles, SimConfig{});
  std::stringstream ss;
  write_invocations_csv(ss, r.records);
  auto back = parse_invocations_csv(ss, "mem");
  ASSERT_EQ(back.size(), r.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].function, r.records[i].function);
    EXPECT_NEAR(back[i].arrival_s, r.records[i].arrival_s, 5e-7);
    EXPECT_NEAR(back[i].dispatch_s, r.records[i].dispatch_s, 5e-7);
    EXPECT_NEAR(back[i].complete_s, r.records[i].complete_s, 5e-7);
    EXPECT_EQ(back[i].start_state, r.records[i].start_state);
    EXPECT_EQ(back[i].device, r.records[i].device);
  }
  EXPECT_NEAR(weighted_avg_latency(back), weighted_avg_latency(r.records), 1e-6);
}

TEST(Export, ParseRejectsBadFiles) {
  std::istringstream bad_header("function,arrival\n");
  EXPECT_THROW(parse_invocations_csv(bad_header, "x"), LoadError);
  std::istringstream bad_row(
      "function,arrival_s,dispatch_s,complete_s,start_state,device,queue_latency_s,exec_s,"
      "latency_s\na,1,2,3,lukewarm,0,1,1,2\n");
  EXPECT_THROW(parse_invocations_csv(bad_row, "x"), LoadError);
}

TEST(Export, SameRunSameBytes) {
  auto profiles = default_profiles();
  std::vector<std::string> names;
  for (auto& p : profiles) names.push_back(p.name);
  auto t = gen_zipf(names, 1.5, 0.5, 100, 2);
  std::ostringstream a, b;
  write_invocations_csv(a, run(t, profiles, SimConfig{}).records);
  write_invocations_csv(b, run(t, profiles, SimConfig{}).records);
  EXPECT_EQ(a.str(), b.str());
}

}  // namespace
}  // namespace gpufairq
