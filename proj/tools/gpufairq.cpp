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

// gpufairq command line: run, compare, sweep and generate. Talks to the
// simulator only through the C API.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gpufairq/gpufairq.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CliError {
  int code;
  std::string message;
};

struct ConfigDeleter {
  void operator()(gfq_config* c) const { gfq_config_free(c); }
};
struct ResultDeleter {
  void operator()(gfq_result* r) const { gfq_result_free(r); }
};
using ConfigPtr = std::unique_ptr<gfq_config, ConfigDeleter>;
using ResultPtr = std::unique_ptr<gfq_result, ResultDeleter>;

int exit_code_for(gfq_status s) { return s == GFQ_ERR_INTERNAL ? kExitRuntime : kExitUsage; }

void check(gfq_status s, const std::string& context, int code = -1) {
  if (s == GFQ_OK) return;
  throw CliError{code < 0 ? exit_code_for(s) : code, context + ": " + gfq_last_error()};
}

std::string config_get(const gfq_config* cfg, const std::string& key) {
  size_t needed = 0;
  check(gfq_config_get(cfg, key.c_str(), nullptr, 0, &needed), "config");
  std::string buf(needed, '\0');
  check(gfq_config_get(cfg, key.c_str(), buf.data(), buf.size(), nullptr), "config");
  buf.resize(needed - 1);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError{kExitRuntime, "cannot write " + tmp.string()};
    out << content;
    if (!out.flush()) throw CliError{kExitRuntime, "cannot write " + tmp.string()};
  }
  fs::rename(tmp, path);
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Common {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  long long seed = -1;
  int jobs = 1;
};

ConfigPtr load(const Common& c) {
  gfq_config* raw = nullptr;
  if (c.config_path.empty())
    check(gfq_config_new(&raw), "config");
  else
    check(gfq_config_load(c.config_path.c_str(), &raw), "config");
  ConfigPtr cfg(raw);
  for (const auto& kv : c.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw CliError{kExitUsage, "--set expects key=value, got '" + kv + "'"};
    check(gfq_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
          "--set");
  }
  if (c.seed >= 0) check(gfq_config_set(cfg.get(), "sim.seed", std::to_string(c.seed).c_str()), "--seed");
  return cfg;
}

// --out, then output.dir from the config, then GPUFAIRQ_OUT, then "out".
fs::path output_dir(const Common& c, const gfq_config* cfg) {
  if (!c.out_dir.empty()) return c.out_dir;
  std::string from_cfg = config_get(cfg, "output.dir");
  if (!from_cfg.empty()) return from_cfg;
  if (const char* env = std::getenv("GPUFAIRQ_OUT"); env && *env) return env;
  return "out";
}

gfq_summary run_one(const gfq_config* cfg, const fs::path& out) {
  gfq_result* raw = nullptr;
  check(gfq_run(cfg, &raw), "run");
  ResultPtr res(raw);
  check(gfq_result_export(res.get(), out.string().c_str()), "export", kExitRuntime);
  gfq_summary s{};
  check(gfq_result_summary(res.get(), &s), "summary");
  return s;
}

// Runs jobs on up to n threads; the first failure is rethrown.
template <typename F>
void parallel_for(std::size_t count, int n, F&& f) {
  std::vector<std::unique_ptr<CliError>> errors(count);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= count) return;
        i = next++;
      }
      try {
        f(i);
      } catch (const CliError& e) {
        errors[i] = std::make_unique<CliError>(e);
      } catch (const std::exception& e) {
        errors[i] = std::make_unique<CliError>(CliError{kExitRuntime, e.what()});
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::max(1, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) throw *e;
}

int cmd_run(const Common& c, const std::string& policy) {
  ConfigPtr cfg = load(c);
  if (!policy.empty()) check(gfq_config_set(cfg.get(), "scheduler.policy", policy.c_str()), "--policy");
  check(gfq_config_validate(cfg.get()), "config");
  fs::path out = output_dir(c, cfg.get());
  gfq_summary s = run_one(cfg.get(), out);
  std::printf(
      "policy=%s invocations=%llu weighted_avg_latency_s=%.6f cold_hit_pct=%.2f "
      "bound_violations=%llu/%llu out=%s\n",
      config_get(cfg.get(), "scheduler.policy").c_str(),
      static_cast<unsigned long long>(s.invocations), s.weighted_avg_latency_s, s.cold_hit_pct,
      static_cast<unsigned long long>(s.bound_violations),
      static_cast<unsigned long long>(s.windows_compared), out.string().c_str());
  return kExitOk;
}

int cmd_compare(const Common& c, const std::string& policies_arg) {
  std::vector<std::string> policies;
  for (const auto& p : split_list(policies_arg)) {
    if (std::find(policies.begin(), policies.end(), p) != policies.end()) {
      std::fprintf(stderr, "warning: policy '%s' listed more than once; running it once\n",
                   p.c_str());
      continue;
    }
    policies.push_back(p);
  }
  if (policies.size() < 2) throw CliError{kExitUsage, "compare needs at least two distinct policies"};

  ConfigPtr base = load(c);
  for (const auto& p : policies)
    check(gfq_config_set(base.get(), "scheduler.policy", p.c_str()), "--policies");
  check(gfq_config_validate(base.get()), "config");
  fs::path out = output_dir(c, base.get());
  fs::create_directories(out);
  check(gfq_config_materialize_trace(base.get(), (out / "trace.csv").string().c_str()),
        "trace", kExitRuntime);

  std::vector<gfq_summary> sums(policies.size());
  parallel_for(policies.size(), c.jobs, [&](std::size_t i) {
    gfq_config* raw = nullptr;
    check(gfq_config_clone(base.get(), &raw), "config");
    ConfigPtr cfg(raw);
    check(gfq_config_set(cfg.get(), "scheduler.policy", policies[i].c_str()), "--policies");
    sums[i] = run_one(cfg.get(), out / policies[i]);
  });

  std::string csv = "policy,weighted_avg_latency_s,p50,p99,cold_hit_pct,max_gap_worst_window\n";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto& s = sums[i];
    csv += policies[i] + "," + fmt6(s.weighted_avg_latency_s) + "," + fmt6(s.p50_latency_s) +
           "," + fmt6(s.p99_latency_s) + "," + fmt6(s.cold_hit_pct) + "," +
           fmt6(s.max_gap_worst_window) + "\n";
    std::printf("policy=%s weighted_avg_latency_s=%.6f cold_hit_pct=%.2f\n", policies[i].c_str(),
                s.weighted_avg_latency_s, s.cold_hit_pct);
  }
  write_atomic(out / "compare.csv", csv);
  return kExitOk;
}

const std::vector<std::pair<std::string, std::string>>& sweep_params() {
  static const std::vector<std::pair<std::string, std::string>> params = {
      {"T", "scheduler.T"},
      {"alpha", "scheduler.alpha"},
      {"d_max", "scheduler.d_max"},
      {"pool_max_containers", "device.pool_max_containers"},
      {"rate_rps", "workload.rate_rps"},
  };
  return params;
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& values_arg) {
  std::string key;
  for (const auto& [name, k] : sweep_params())
    if (name == param) key = k;
  if (key.empty())
    throw CliError{kExitUsage,
                   "unknown sweep param '" + param + "' (T, alpha, d_max, pool_max_containers, rate_rps)"};
  std::vector<std::string> values = split_list(values_arg);
  if (values.empty()) throw CliError{kExitUsage, "--values is empty"};

  ConfigPtr base = load(c);
  for (const auto& v : values) {
    gfq_config* raw = nullptr;
    check(gfq_config_clone(base.get(), &raw), "config");
    ConfigPtr probe(raw);
    check(gfq_config_set(probe.get(), key.c_str(), v.c_str()), "--values");
    check(gfq_config_validate(probe.get()), "--values " + v);
  }
  fs::path out = output_dir(c, base.get());
  fs::create_directories(out);

  std::vector<gfq_summary> sums(values.size());
  parallel_for(values.size(), c.jobs, [&](std::size_t i) {
    gfq_config* raw = nullptr;
    check(gfq_config_clone(base.get(), &raw), "config");
    ConfigPtr cfg(raw);
    check(gfq_config_set(cfg.get(), key.c_str(), values[i].c_str()), "--values");
    sums[i] = run_one(cfg.get(), out / (param + "=" + values[i]));
  });

  std::string csv = "value,weighted_avg_latency_s,cold_hit_pct,mean_util\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& s = sums[i];
    csv += values[i] + "," + fmt6(s.weighted_avg_latency_s) + "," + fmt6(s.cold_hit_pct) + "," +
           fmt6(s.mean_util) + "\n";
    std::printf("%s=%s weighted_avg_latency_s=%.6f cold_hit_pct=%.2f mean_util=%.4f\n",
                param.c_str(), values[i].c_str(), s.weighted_avg_latency_s, s.cold_hit_pct,
                s.mean_util);
  }
  write_atomic(out / "sweep.csv", csv);
  return kExitOk;
}

struct GenerateArgs {
  unsigned functions = 24;
  double zipf = 1.5;
  double rate = 2.69;
  double duration = 600.0;
  unsigned long long seed = 1;
  std::string profiles;
  std::string out;
};

int cmd_generate(const GenerateArgs& g) {
  check(gfq_generate_trace(g.functions, g.zipf, g.rate, g.duration, g.seed,
                           g.profiles.empty() ? nullptr : g.profiles.c_str(), g.out.c_str()),
        "generate");
  return kExitOk;
}

std::string keys_help() {
  std::string s = "\nConfig keys ([section] then key = value; override with --set section.key=value):\n";
  for (size_t i = 0; i < gfq_config_key_count(); ++i) {
    std::string name = gfq_config_key_name(i);
    name.resize(std::max<size_t>(name.size(), 36), ' ');
    s += "  " + name + gfq_config_key_help(i) + "\n";
  }
  s += "\nOutput directory: --out, else output.dir, else $GPUFAIRQ_OUT, else ./out\n";
  s += "Exit codes: 0 success, 2 usage or validation error, 1 runtime error\n";
  return s;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "experiment config file")->check(CLI::ExistingFile);
  sub->add_option("-o,--out", c.out_dir, "output directory");
  sub->add_option("--set", c.sets, "override a config key: section.key=value")->take_all();
  sub->add_option("--seed", c.seed, "random seed (overrides sim.seed)")->check(CLI::NonNegativeNumber);
  sub->footer(keys_help());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair-queueing simulator for GPU serverless functions"};
  app.set_version_flag("--version", std::string(gfq_version()));
  app.require_subcommand(1);
  app.footer(keys_help());

  Common common;
  std::string policy;
  auto* run = app.add_subcommand("run", "run one simulation and export its results");
  add_common(run, common);
  run->add_option("-p,--policy", policy, "scheduling policy (overrides scheduler.policy)");

  std::string policies;
  auto* compare = app.add_subcommand("compare", "run several policies on one shared trace");
  add_common(compare, common);
  compare->add_option("--policies", policies, "comma-separated policy list")->required();
  compare->add_option("-j,--jobs", common.jobs, "parallel runs")->check(CLI::PositiveNumber);

  std::string param, values;
  auto* sweep = app.add_subcommand("sweep", "run one parameter over a list of values");
  add_common(sweep, common);
  sweep->add_option("--param", param, "T | alpha | d_max | pool_max_containers | rate_rps")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("-j,--jobs", common.jobs, "parallel runs")->check(CLI::PositiveNumber);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a Zipf workload trace");
  generate->add_option("--functions", gen.functions, "number of functions");
  generate->add_option("--zipf", gen.zipf, "Zipf exponent");
  generate->add_option("--rate", gen.rate, "total arrival rate, requests/s");
  generate->add_option("--duration", gen.duration, "trace length, seconds");
  generate->add_option("--seed", gen.seed, "random seed");
  generate->add_option("--profiles", gen.profiles, "profiles CSV (default: built-in)");
  generate->add_option("-o,--out", gen.out, "trace CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(common, policy);
    if (*compare) return cmd_compare(common, policies);
    if (*sweep) return cmd_sweep(common, param, values);
    if (*generate) return cmd_generate(gen);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
