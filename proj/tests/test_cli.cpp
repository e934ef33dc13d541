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

// Drives the gpufairq executable as a subprocess.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

#ifndef GPUFAIRQ_CLI
#error "GPUFAIRQ_CLI must name the CLI executable"
#endif
#ifndef GPUFAIRQ_SOURCE_DIR
#error "GPUFAIRQ_SOURCE_DIR must name the source tree"
#endif

namespace {

namespace fs = std::filesystem;
using gpufairq::testing::slurp;
using gpufairq::testing::spit;
using gpufairq::testing::TempDir;

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Outcome cli(const std::string& args, const std::string& env = "") {
  std::string cmd = env + (env.empty() ? "" : " ") + "'" + GPUFAIRQ_CLI + "' " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf;
  while (size_t n = fread(buf.data(), 1, buf.size(), pipe)) o.output.append(buf.data(), n);
  int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string default_conf() { return std::string(GPUFAIRQ_SOURCE_DIR) + "/configs/default.conf"; }

// Short version of the default experiment so each call stays quick.
std::string quick() {
  return "-c '" + default_conf() + "' --set workload.duration_s=90 --set workload.n_functions=8";
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(Cli, HelpListsEveryKey) {
  auto o = cli("--help");
  EXPECT_EQ(o.code, 0);
  for (const char* key : {"scheduler.T", "scheduler.alpha", "device.pool_max_containers",
                          "workload.trace_path", "sim.seed", "output.dir"})
    EXPECT_NE(o.output.find(key), std::string::npos) << key;
  EXPECT_NE(o.output.find("GPUFAIRQ_OUT"), std::string::npos);
}

TEST(Cli, RunWritesFilesAndSummaryLine) {
  TempDir dir("cli");
  auto o = cli("run " + quick() + " -o '" + dir.file("out") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("policy=mqfq"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("weighted_avg_latency_s="), std::string::npos);
  EXPECT_NE(o.output.find("cold_hit_pct="), std::string::npos);
  EXPECT_NE(o.output.find("bound_violations="), std::string::npos);
  for (const char* f : {"invocations.csv", "windows.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(dir.path() / "out" / f)) << f;
  auto j = nlohmann::json::parse(slurp(dir.file("out/summary.json")));
  EXPECT_EQ(j["config"]["workload.duration_s"], "90");
}

TEST(Cli, NaivePolicyIsAllCold) {
  TempDir dir("cli");
  auto o = cli("run " + quick() + " --policy fcfs_naive -o '" + dir.file("out") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  auto j = nlohmann::json::parse(slurp(dir.file("out/summary.json")));
  EXPECT_DOUBLE_EQ(j["cold_hit_pct"].get<double>(), 100.0);
  EXPECT_EQ(j["policy"], "fcfs_naive");
}

TEST(Cli, SeedFlagOverridesConfig) {
  TempDir dir("cli");
  ASSERT_EQ(cli("run " + quick() + " --seed 9 -o '" + dir.file("a") + "'").code, 0);
  auto j = nlohmann::json::parse(slurp(dir.file("a/summary.json")));
  EXPECT_EQ(j["seed"], 9);
}

TEST(Cli, BadConfigKeyExitsTwo) {
  TempDir dir("cli");
  spit(dir.file("bad.conf"), "[scheduler]\nquantum = 4\n");
  auto o = cli("run -c '" + dir.file("bad.conf") + "' -o '" + dir.file("out") + "'");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("scheduler.quantum"), std::string::npos) << o.output;
  o = cli("run " + quick() + " --set device.warp=1 -o '" + dir.file("out") + "'");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("device.warp"), std::string::npos) << o.output;
}

TEST(Cli, InvalidValuesAndFilesExitTwo) {
  TempDir dir("cli");
  EXPECT_EQ(cli("run " + quick() + " --policy lifo -o '" + dir.file("o") + "'").code, 2);
  EXPECT_EQ(cli("run " + quick() + " --set scheduler.T=-3 -o '" + dir.file("o") + "'").code, 2);
  EXPECT_EQ(cli("run -c /nonexistent.conf").code, 2);
  EXPECT_EQ(cli("run " + quick() + " --set workload.trace_path=/nonexistent.csv").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  TempDir dir("cli");
  auto o = cli("run " + quick(), "GPUFAIRQ_OUT='" + dir.file("env") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_TRUE(fs::exists(dir.path() / "env" / "invocations.csv"));
}

TEST(Cli, CompareWritesPerPolicyDirectories) {
  TempDir dir("cli");
  auto o = cli("compare " + quick() + " --policies mqfq,fcfs,batch,sjf -j 2 -o '" +
               dir.file("cmp") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  for (const char* p : {"mqfq", "fcfs", "batch", "sjf"})
    EXPECT_TRUE(fs::exists(dir.path() / "cmp" / p / "invocations.csv")) << p;
  auto rows = lines(slurp(dir.file("cmp/compare.csv")));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "policy,weighted_avg_latency_s,p50,p99,cold_hit_pct,max_gap_worst_window");
  EXPECT_EQ(rows[1].substr(0, 5), "mqfq,");
  EXPECT_TRUE(fs::exists(dir.path() / "cmp" / "trace.csv"));
}

TEST(Cli, CompareSharesOneTrace) {
  TempDir dir("cli");
  ASSERT_EQ(cli("compare " + quick() + " --policies mqfq,fcfs -o '" + dir.file("c") + "'").code, 0);
  auto a = lines(slurp(dir.file("c/mqfq/invocations.csv")));
  auto b = lines(slurp(dir.file("c/fcfs/invocations.csv")));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 1; i < a.size(); ++i) {
    auto key = [](const std::string& row) {
      auto second = row.find(',', row.find(',') + 1);
      return row.substr(0, second);
    };
    EXPECT_EQ(key(a[i]), key(b[i]));
  }
}

TEST(Cli, CompareDeduplicatesWithWarning) {
  TempDir dir("cli");
  auto o = cli("compare " + quick() + " --policies mqfq,fcfs,mqfq -o '" + dir.file("c") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("warning"), std::string::npos) << o.output;
  EXPECT_EQ(lines(slurp(dir.file("c/compare.csv"))).size(), 3u);
  EXPECT_EQ(cli("compare " + quick() + " --policies mqfq,mqfq -o '" + dir.file("d") + "'").code,
            2);
}

TEST(Cli, SweepRowsPerValue) {
  TempDir dir("cli");
  auto o = cli("sweep " + quick() + " --param T --values 0,1,10 -o '" + dir.file("s") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  auto rows = lines(slurp(dir.file("s/sweep.csv")));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "value,weighted_avg_latency_s,cold_hit_pct,mean_util");
  EXPECT_EQ(rows[1].substr(0, 2), "0,");
  EXPECT_TRUE(fs::exists(dir.path() / "s" / "T=10" / "summary.json"));
}

TEST(Cli, SweepPoolSizesGiveMissRateCurve) {
  TempDir dir("cli");
  auto o = cli("sweep " + quick() + " --param pool_max_containers --values 2,4,16 -o '" +
               dir.file("s") + "'");
  ASSERT_EQ(o.code, 0) << o.output;
  auto rows = lines(slurp(dir.file("s/sweep.csv")));
  ASSERT_EQ(rows.size(), 4u);
  double prev = 101;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto f1 = rows[i].find(',');
    auto f2 = rows[i].find(',', f1 + 1);
    auto f3 = rows[i].find(',', f2 + 1);
    double cold = std::stod(rows[i].substr(f2 + 1, f3 - f2 - 1));
    EXPECT_LE(cold, prev + 1e-9);
    prev = cold;
  }
}

TEST(Cli, SweepUnknownParamExitsTwo) {
  TempDir dir("cli");
  auto o = cli("sweep " + quick() + " --param beta --values 1,2 -o '" + dir.file("s") + "'");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("beta"), std::string::npos) << o.output;
}

TEST(Cli, GenerateIsDeterministic) {
  TempDir dir("cli");
  std::string flags = "generate --functions 24 --zipf 1.5 --rate 2.69 --duration 600 --seed 3";
  ASSERT_EQ(cli(flags + " -o '" + dir.file("a.csv") + "'").code, 0);
  ASSERT_EQ(cli(flags + " -o '" + dir.file("b.csv") + "'").code, 0);
  auto a = slurp(dir.file("a.csv"));
  EXPECT_EQ(a, slurp(dir.file("b.csv")));
  EXPECT_NE(a.find("arrival_s,function\n"), std::string::npos);
  EXPECT_GT(lines(a).size(), 1400u);
}

TEST(Cli, GenerateZeroDurationIsHeaderOnly) {
  TempDir dir("cli");
  ASSERT_EQ(cli("generate --duration 0 -o '" + dir.file("e.csv") + "'").code, 0);
  auto rows = lines(slurp(dir.file("e.csv")));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows.back(), "arrival_s,function");
}

TEST(Cli, GeneratedTraceRunsThroughConfig) {
  TempDir dir("cli");
  ASSERT_EQ(cli("generate --functions 8 --rate 0.5 --duration 60 -o '" + dir.file("t.csv") + "'")
                .code,
            0);
  spit(dir.file("run.conf"), "[workload]\ntrace_path = t.csv\n");
  auto o = cli("run -c '" + dir.file("run.conf") + "' -o '" + dir.file("out") + "'");
  EXPECT_EQ(o.code, 0) << o.output;
}

}  // namespace
