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

#include "gpufairq/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

#include "csv.hpp"
#include "gpufairq/error.hpp"

namespace gpufairq {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"scheduler.policy", "mqfq | fcfs | batch | sjf | fcfs_naive"},
      {"scheduler.T", "queue over-run threshold in seconds of service"},
      {"scheduler.d_max", "maximum concurrent invocations per device"},
      {"scheduler.alpha", "keep-alive TTL multiplier on the mean inter-arrival time"},
      {"scheduler.dynamic_d", "adjust device concurrency from utilization (true/false)"},
      {"scheduler.default_ttl_s", "TTL before a function has two arrivals"},
      {"scheduler.tau_includes_overhead", "learn tau from full duration incl. cold/prefetch"},
      {"device.count", "number of GPUs"},
      {"device.mem_mb", "device memory in MB"},
      {"device.d_max", "alias of scheduler.d_max"},
      {"device.util_threshold", "utilization threshold in (0,1]"},
      {"device.pcie_mb_per_s", "host-device transfer bandwidth, MB/s"},
      {"device.interference_beta", "slowdown per extra concurrent invocation"},
      {"device.monitor_period_s", "utilization sampling period"},
      {"device.util_window_s", "utilization moving-average window"},
      {"device.pool_max_containers", "container pool capacity per device"},
      {"device.pool_enabled", "keep containers warm between invocations (true/false)"},
      {"device.dynamic_d", "alias of scheduler.dynamic_d"},
      {"device.prefetch_overlap_s", "transfer time hidden behind dispatch, seconds"},
      {"workload.profiles_path", "profiles CSV (empty: built-in registry)"},
      {"workload.trace_path", "trace CSV (exclusive with the generator keys)"},
      {"workload.n_functions", "generator: number of functions"},
      {"workload.zipf_s", "generator: Zipf exponent of per-function rates"},
      {"workload.rate_rps", "generator: total arrival rate, requests/s"},
      {"workload.duration_s", "generator: trace length in seconds"},
      {"workload.copies", "copies of each base profile (0: derived from n_functions)"},
      {"workload.scale", "rate scale factor applied to the trace"},
      {"sim.seed", "random seed"},
      {"output.dir", "output directory"},
      {"metrics.window_s", "service-fairness window length in seconds"},
  };
  return keys;
}

namespace {

double to_double(const std::string& key, const std::string& value) {
  auto v = parse_decimal(value);
  if (!v) throw ValidationError("config key '" + key + "': invalid number '" + value + "'");
  return *v;
}

long long to_int(const std::string& key, const std::string& value) {
  auto v = parse_decimal(value);
  if (!v || *v != static_cast<double>(static_cast<long long>(*v)))
    throw ValidationError("config key '" + key + "': invalid integer '" + value + "'");
  return static_cast<long long>(*v);
}

std::size_t to_count(const std::string& key, const std::string& value) {
  long long v = to_int(key, value);
  if (v < 0) throw ValidationError("config key '" + key + "': must be >= 0");
  return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("config key '" + key + "': invalid boolean '" + value + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  std::string value(detail::trim(raw));
  auto& s = sim.scheduler;
  auto& d = sim.device;
  auto& w = workload;
  if (key == "scheduler.policy") {
    auto p = parse_policy(value);
    if (!p) throw ValidationError("config key 'scheduler.policy': unknown policy '" + value + "'");
    sim.policy = *p;
  } else if (key == "scheduler.T") {
    s.T = to_double(key, value);
  } else if (key == "scheduler.d_max" || key == "device.d_max") {
    s.d_max = static_cast<int>(to_int(key, value));
    d.d_max = s.d_max;
  } else if (key == "scheduler.alpha") {
    s.alpha = to_double(key, value);
  } else if (key == "scheduler.dynamic_d" || key == "device.dynamic_d") {
    s.allow_dynamic_d = to_bool(key, value);
    d.dynamic_d = s.allow_dynamic_d;
  } else if (key == "scheduler.default_ttl_s") {
    s.default_ttl_s = to_double(key, value);
  } else if (key == "scheduler.tau_includes_overhead") {
    s.tau_includes_overhead = to_bool(key, value);
  } else if (key == "device.count") {
    d.count = static_cast<int>(to_int(key, value));
  } else if (key == "device.mem_mb") {
    d.mem_capacity_mb = to_double(key, value);
  } else if (key == "device.util_threshold") {
    d.util_threshold = to_double(key, value);
  } else if (key == "device.pcie_mb_per_s") {
    d.pcie_mb_per_s = to_double(key, value);
  } else if (key == "device.interference_beta") {
    d.interference_beta = to_double(key, value);
  } else if (key == "device.monitor_period_s") {
    d.monitor_period_s = to_double(key, value);
  } else if (key == "device.util_window_s") {
    d.util_window_s = to_double(key, value);
  } else if (key == "device.pool_max_containers") {
    d.pool_max_containers = static_cast<int>(to_int(key, value));
  } else if (key == "device.pool_enabled") {
    d.pool_enabled = to_bool(key, value);
  } else if (key == "device.prefetch_overlap_s") {
    d.prefetch_overlap_s = to_double(key, value);
  } else if (key == "workload.profiles_path") {
    w.profiles_path = value;
  } else if (key == "workload.trace_path") {
    w.trace_path = value;
  } else if (key == "workload.n_functions") {
    w.n_functions = to_count(key, value);
    generator_keys_set.insert(key);
  } else if (key == "workload.zipf_s") {
    w.zipf_s = to_double(key, value);
    generator_keys_set.insert(key);
  } else if (key == "workload.rate_rps") {
    w.rate_rps = to_double(key, value);
    generator_keys_set.insert(key);
  } else if (key == "workload.duration_s") {
    w.duration_s = to_double(key, value);
    generator_keys_set.insert(key);
  } else if (key == "workload.copies") {
    w.copies = to_count(key, value);
  } else if (key == "workload.scale") {
    w.scale = to_double(key, value);
  } else if (key == "sim.seed") {
    long long v = to_int(key, value);
    if (v < 0) throw ValidationError("config key 'sim.seed': must be >= 0");
    seed = static_cast<std::uint64_t>(v);
  } else if (key == "output.dir") {
    out_dir = value;
  } else if (key == "metrics.window_s") {
    window_s = to_double(key, value);
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

std::string ExperimentConfig::get(const std::string& key) const {
  for (const auto& [k, v] : echo())
    if (k == key) return v;
  throw ValidationError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  using detail::shortest;
  const auto& s = sim.scheduler;
  const auto& d = sim.device;
  const auto& w = workload;
  return {
      {"scheduler.policy", std::string(to_string(sim.policy))},
      {"scheduler.T", shortest(s.T)},
      {"scheduler.d_max", std::to_string(s.d_max)},
      {"scheduler.alpha", shortest(s.alpha)},
      {"scheduler.dynamic_d", from_bool(s.allow_dynamic_d)},
      {"scheduler.default_ttl_s", shortest(s.default_ttl_s)},
      {"scheduler.tau_includes_overhead", from_bool(s.tau_includes_overhead)},
      {"device.count", std::to_string(d.count)},
      {"device.mem_mb", shortest(d.mem_capacity_mb)},
      {"device.d_max", std::to_string(s.d_max)},
      {"device.util_threshold", shortest(d.util_threshold)},
      {"device.pcie_mb_per_s", shortest(d.pcie_mb_per_s)},
      {"device.interference_beta", shortest(d.interference_beta)},
      {"device.monitor_period_s", shortest(d.monitor_period_s)},
      {"device.util_window_s", shortest(d.util_window_s)},
      {"device.pool_max_containers", std::to_string(d.pool_max_containers)},
      {"device.pool_enabled", from_bool(d.pool_enabled)},
      {"device.dynamic_d", from_bool(s.allow_dynamic_d)},
      {"device.prefetch_overlap_s", shortest(d.prefetch_overlap_s)},
      {"workload.profiles_path", w.profiles_path},
      {"workload.trace_path", w.trace_path},
      {"workload.n_functions", std::to_string(w.n_functions)},
      {"workload.zipf_s", shortest(w.zipf_s)},
      {"workload.rate_rps", shortest(w.rate_rps)},
      {"workload.duration_s", shortest(w.duration_s)},
      {"workload.copies", std::to_string(w.copies)},
      {"workload.scale", shortest(w.scale)},
      {"sim.seed", std::to_string(seed)},
      {"output.dir", out_dir},
      {"metrics.window_s", shortest(window_s)},
  };
}

void ExperimentConfig::validate() const {
  sim.scheduler.validate();
  DeviceConfig d = sim.device;
  d.d_max = sim.scheduler.d_max;
  d.validate();
  if (!workload.trace_path.empty() && !generator_keys_set.empty())
    throw ValidationError("workload.trace_path conflicts with generator key '" +
                          *generator_keys_set.begin() + "'");
  if (workload.trace_path.empty()) {
    if (workload.n_functions < 1 && workload.copies == 0)
      throw ValidationError("workload.n_functions must be >= 1");
    if (!(workload.zipf_s > 0)) throw ValidationError("workload.zipf_s must be > 0");
    if (!(workload.rate_rps > 0)) throw ValidationError("workload.rate_rps must be > 0");
    if (!(workload.duration_s >= 0)) throw ValidationError("workload.duration_s must be >= 0");
  }
  if (!(workload.scale > 0)) throw ValidationError("workload.scale must be > 0");
  if (!(window_s > 0)) throw ValidationError("metrics.window_s must be > 0");
  namespace fs = std::filesystem;
  if (!workload.profiles_path.empty() && !fs::exists(workload.profiles_path))
    throw ValidationError("workload.profiles_path: file not found '" + workload.profiles_path +
                          "'");
  if (!workload.trace_path.empty() && !fs::exists(workload.trace_path))
    throw ValidationError("workload.trace_path: file not found '" + workload.trace_path + "'");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source,
                              const std::string& base_dir) {
  ExperimentConfig cfg;
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = detail::trim(raw);
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = detail::trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw LoadError(source, lineno, "malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw LoadError(source, lineno, "expected 'key = value'");
    if (section.empty()) throw LoadError(source, lineno, "key outside of a [section]");
    std::string key = section + "." + std::string(detail::trim(line.substr(0, eq)));
    std::string value(detail::trim(line.substr(eq + 1)));
    if ((key == "workload.profiles_path" || key == "workload.trace_path") && !value.empty() &&
        !base_dir.empty() && std::filesystem::path(value).is_relative())
      value = (std::filesystem::path(base_dir) / value).lexically_normal().string();
    try {
      cfg.set(key, value);
    } catch (const ValidationError& e) {
      throw LoadError(source, lineno, e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open config file");
  auto base = std::filesystem::path(path).parent_path().string();
  return parse_config(in, path, base);
}

PreparedWorkload prepare_workload(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& w = cfg.workload;
  std::vector<FunctionProfile> base =
      w.profiles_path.empty() ? default_profiles() : load_profiles(w.profiles_path);
  PreparedWorkload out;
  if (w.trace_path.empty()) {
    std::size_t n = w.n_functions;
    if (w.copies > 0) {
      if (cfg.generator_keys_set.count("workload.n_functions") && n != w.copies * base.size())
        throw ValidationError("workload.n_functions disagrees with workload.copies");
      n = w.copies * base.size();
    }
    out.profiles = expand_profiles(base, n);
    std::vector<std::string> names;
    for (const auto& p : out.profiles) names.push_back(p.name);
    out.trace = gen_zipf(names, w.zipf_s, w.rate_rps, w.duration_s, cfg.seed);
  } else {
    out.profiles = w.copies > 0 ? expand_profiles(base, w.copies * base.size()) : base;
    std::vector<std::string> names;
    for (const auto& p : out.profiles) names.push_back(p.name);
    out.trace = load_trace(w.trace_path, names);
  }
  if (w.scale != 1.0) out.trace = scale_trace(out.trace, w.scale);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, prepare_workload(cfg));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const PreparedWorkload& workload) {
  cfg.validate();
  SimConfig sc = cfg.sim;
  for (const auto& p : workload.profiles)
    if (p.weight != 1.0) sc.scheduler.weights[p.name] = p.weight;
  ExperimentResult out;
  out.sim = run(workload.trace, workload.profiles, sc);
  out.windows =
      service_gap_report(out.sim.records, out.sim.audit, out.sim.makespan_s, sc.scheduler,
                         cfg.window_s);
  out.summary = summarize(cfg.sim.policy, out.sim.records, out.windows, out.sim.mean_util,
                          cfg.seed, cfg.echo());
  return out;
}

}  // namespace gpufairq
