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

#include "gpufairq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "fs_util.hpp"
#include "gpufairq/error.hpp"

namespace gpufairq {

double weighted_avg_latency(std::span<const InvocationRecord> records) {
  if (records.empty()) throw ValidationError("weighted_avg_latency: no records");
  std::map<std::string, std::pair<std::size_t, double>> by_fn;
  for (const auto& r : records) {
    auto& [n, sum] = by_fn[r.function];
    ++n;
    sum += r.latency_s();
  }
  double num = 0.0;
  double den = 0.0;
  for (const auto& [name, agg] : by_fn) {
    double n = static_cast<double>(agg.first);
    num += n * (agg.second / n);
    den += n;
  }
  return num / den;
}

std::map<std::string, FunctionStats> per_function_stats(std::span<const InvocationRecord> records) {
  std::map<std::string, std::vector<const InvocationRecord*>> groups;
  for (const auto& r : records) groups[r.function].push_back(&r);
  std::map<std::string, FunctionStats> out;
  for (const auto& [name, rows] : groups) {
    FunctionStats s;
    s.count = rows.size();
    double sum = 0.0;
    std::size_t cold = 0;
    for (const auto* r : rows) {
      sum += r->latency_s();
      if (r->start_state == StartState::Cold) ++cold;
    }
    s.mean_latency_s = sum / static_cast<double>(s.count);
    if (s.count > 1) {
      double ss = 0.0;
      for (const auto* r : rows) ss += (r->latency_s() - s.mean_latency_s) *
                                       (r->latency_s() - s.mean_latency_s);
      s.var_latency_s = ss / static_cast<double>(s.count - 1);
    }
    s.cold_hit_pct = 100.0 * static_cast<double>(cold) / static_cast<double>(s.count);
    out.emplace(name, s);
  }
  return out;
}

double latency_percentile(std::span<const InvocationRecord> records, double q) {
  if (records.empty()) return 0.0;
  std::vector<double> lat;
  lat.reserve(records.size());
  for (const auto& r : records) lat.push_back(r.latency_s());
  std::sort(lat.begin(), lat.end());
  double rank = std::ceil(q / 100.0 * static_cast<double>(lat.size()));
  std::size_t idx = rank < 1 ? 0 : static_cast<std::size_t>(rank) - 1;
  return lat[std::min(idx, lat.size() - 1)];
}

double cold_hit_rate(std::span<const InvocationRecord> records) {
  if (records.empty()) return 0.0;
  auto cold = std::count_if(records.begin(), records.end(), [](const InvocationRecord& r) {
    return r.start_state == StartState::Cold;
  });
  return static_cast<double>(cold) / static_cast<double>(records.size());
}

std::vector<PoolCurvePoint> cold_hit_curve(
    const std::vector<std::pair<int, std::vector<InvocationRecord>>>& runs) {
  std::vector<PoolCurvePoint> out;
  for (const auto& [size, recs] : runs) out.push_back({size, 100.0 * cold_hit_rate(recs)});
  std::sort(out.begin(), out.end(),
            [](const PoolCurvePoint& a, const PoolCurvePoint& b) { return a.pool_size < b.pool_size; });
  return out;
}

namespace {

struct Timeline {
  std::vector<double> times;
  std::vector<bool> states;

  // State after the last sample at or before t.
  bool at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return false;
    return states[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  bool throughout(double start, double end) const {
    if (!at(start)) return false;
    auto lo = std::upper_bound(times.begin(), times.end(), start);
    auto hi = std::lower_bound(times.begin(), times.end(), end);
    for (auto it = lo; it != hi; ++it)
      if (!states[static_cast<std::size_t>(it - times.begin())]) return false;
    return true;
  }
};

int concurrency_max(const std::vector<ConcurrencySample>& samples, double start, double end) {
  std::map<int, int> current;
  for (const auto& s : samples)
    if (s.time <= start) current[s.device] = s.effective_d;
  auto total = [&current] {
    int sum = 0;
    for (const auto& [d, v] : current) sum += v;
    return sum;
  };
  int best = total();
  for (const auto& s : samples) {
    if (s.time <= start || s.time >= end) continue;
    current[s.device] = s.effective_d;
    best = std::max(best, total());
  }
  return std::max(best, 1);
}

}  // namespace

std::vector<ServiceWindow> service_gap_report(std::span<const InvocationRecord> records,
                                              const SimAudit& audit, double makespan_s,
                                              const SchedulerConfig& cfg, double window_s) {
  if (!(window_s > 0)) throw ValidationError("service window must be > 0");
  std::map<std::string, Timeline> timelines;
  for (const auto& s : audit.backlog) {
    auto& tl = timelines[s.function];
    tl.times.push_back(s.time);
    tl.states.push_back(s.backlogged);
  }
  std::map<std::string, std::pair<double, std::size_t>> overall_exec;
  for (const auto& r : records) {
    auto& [sum, n] = overall_exec[r.function];
    sum += r.gpu_exec_s;
    ++n;
  }

  std::vector<ServiceWindow> out;
  for (std::size_t k = 0; static_cast<double>(k) * window_s < makespan_s; ++k) {
    ServiceWindow w;
    w.window_start_s = static_cast<double>(k) * window_s;
    w.window_s = window_s;
    const double end = w.window_start_s + window_s;

    std::map<std::string, std::pair<double, std::size_t>> window_exec;
    for (const auto& r : records) {
      double overlap = std::min(r.complete_s, end) - std::max(r.gpu_start_s(), w.window_start_s);
      if (overlap <= 0) continue;
      w.service_s[r.function] += overlap;
      auto& [sum, n] = window_exec[r.function];
      sum += r.gpu_exec_s;
      ++n;
    }
    for (const auto& [name, tl] : timelines)
      if (tl.throughout(w.window_start_s, end)) w.backlogged.push_back(name);

    if (w.backlogged.size() >= 2) {
      w.compared = true;
      auto normalized = [&](const std::string& f) {
        auto it = w.service_s.find(f);
        double s = it == w.service_s.end() ? 0.0 : it->second;
        return s / cfg.weight_of(f);
      };
      w.max_function = w.backlogged.front();
      w.min_function = w.backlogged.front();
      for (const auto& f : w.backlogged) {
        if (normalized(f) > normalized(w.max_function)) w.max_function = f;
        if (normalized(f) < normalized(w.min_function)) w.min_function = f;
      }
      auto tau = [&](const std::string& f) {
        if (auto it = window_exec.find(f); it != window_exec.end())
          return it->second.first / static_cast<double>(it->second.second);
        if (auto it = overall_exec.find(f); it != overall_exec.end())
          return it->second.first / static_cast<double>(it->second.second);
        return 0.0;
      };
      w.D = concurrency_max(audit.concurrency, w.window_start_s, end);
      w.max_gap = normalized(w.max_function) - normalized(w.min_function);
      double wi = cfg.weight_of(w.max_function);
      double wj = cfg.weight_of(w.min_function);
      w.bound = fairness_bound(w.D, cfg.T, tau(w.max_function), tau(w.min_function), wi, wj);
      w.bound_conservative =
          fairness_bound_conservative(w.D, cfg.T, tau(w.max_function), tau(w.min_function), wi, wj);
      // Absorb floating-point residue from summing overlaps.
      constexpr double kSlack = 1e-9;
      w.violated = w.max_gap > w.bound + kSlack;
      w.violated_conservative = w.max_gap > w.bound_conservative + kSlack;
    }
    out.push_back(std::move(w));
  }
  return out;
}

Summary summarize(PolicyKind policy, std::span<const InvocationRecord> records,
                  const std::vector<ServiceWindow>& windows, double mean_util,
                  std::uint64_t seed, std::vector<std::pair<std::string, std::string>> config) {
  Summary s;
  s.policy = std::string(to_string(policy));
  s.seed = seed;
  s.invocations = records.size();
  if (!records.empty()) {
    s.weighted_avg_latency_s = weighted_avg_latency(records);
    s.p50_latency_s = latency_percentile(records, 50);
    s.p99_latency_s = latency_percentile(records, 99);
  }
  s.cold_hit_pct = 100.0 * cold_hit_rate(records);
  s.mean_util = mean_util;
  for (const auto& w : windows) {
    if (!w.compared) continue;
    ++s.windows_compared;
    if (w.violated) ++s.violations;
    if (w.violated_conservative) ++s.violations_conservative;
    s.max_gap_worst_window = std::max(s.max_gap_worst_window, w.max_gap);
  }
  s.per_function = per_function_stats(records);
  s.config = std::move(config);
  return s;
}

void write_invocations_csv(std::ostream& out, std::span<const InvocationRecord> records) {
  using detail::fixed6;
  out << "function,arrival_s,dispatch_s,complete_s,start_state,device,queue_latency_s,exec_s,"
         "latency_s\n";
  for (const auto& r : records) {
    out << r.function << ',' << fixed6(r.arrival_s) << ',' << fixed6(r.dispatch_s) << ','
        << fixed6(r.complete_s) << ',' << to_string(r.start_state) << ',' << r.device << ','
        << fixed6(r.queue_latency_s()) << ',' << fixed6(r.exec_s()) << ','
        << fixed6(r.latency_s()) << '\n';
  }
}

void write_windows_csv(std::ostream& out, const std::vector<ServiceWindow>& windows) {
  using detail::fixed6;
  out << "window_start_s,max_gap,bound,violated\n";
  for (const auto& w : windows) {
    out << fixed6(w.window_start_s) << ',' << fixed6(w.max_gap) << ',' << fixed6(w.bound) << ','
        << (w.compared ? (w.violated ? "true" : "false") : "no_comparison") << '\n';
  }
}

namespace {
// Round to the microsecond like the CSV files so JSON output is stable.
double us(double v) { return std::round(v * 1e6) / 1e6; }
}  // namespace

std::string summary_json(const Summary& s) {
  nlohmann::ordered_json j;
  j["policy"] = s.policy;
  j["seed"] = s.seed;
  j["invocations"] = s.invocations;
  j["weighted_avg_latency_s"] = us(s.weighted_avg_latency_s);
  j["p50_latency_s"] = us(s.p50_latency_s);
  j["p99_latency_s"] = us(s.p99_latency_s);
  j["cold_hit_pct"] = us(s.cold_hit_pct);
  j["mean_util"] = us(s.mean_util);
  j["windows_compared"] = s.windows_compared;
  j["bound_violations"] = s.violations;
  j["bound_violations_conservative"] = s.violations_conservative;
  j["max_gap_worst_window"] = us(s.max_gap_worst_window);
  auto& pf = j["per_function"] = nlohmann::ordered_json::object();
  for (const auto& [name, st] : s.per_function) {
    pf[name] = {{"mean_latency_s", us(st.mean_latency_s)},
                {"var_latency_s", us(st.var_latency_s)},
                {"count", st.count},
                {"cold_hit_pct", us(st.cold_hit_pct)}};
  }
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.config) cfg[k] = v;
  return j.dump(2) + "\n";
}

void export_results(std::span<const InvocationRecord> records,
                    const std::vector<ServiceWindow>& windows, const Summary& summary,
                    const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  std::ostringstream inv;
  write_invocations_csv(inv, records);
  detail::write_file_atomic(out_dir + "/invocations.csv", inv.str());
  std::ostringstream win;
  write_windows_csv(win, windows);
  detail::write_file_atomic(out_dir + "/windows.csv", win.str());
  detail::write_file_atomic(out_dir + "/summary.json", summary_json(summary));
}

std::vector<InvocationRecord> parse_invocations_csv(std::istream& in, const std::string& source) {
  static constexpr std::string_view kHeader =
      "function,arrival_s,dispatch_s,complete_s,start_state,device,queue_latency_s,exec_s,"
      "latency_s";
  std::vector<InvocationRecord> out;
  std::string raw;
  std::size_t lineno = 0;
  if (!std::getline(in, raw) || detail::strip_cr(raw) != kHeader)
    throw LoadError(source, 1, "bad invocations header");
  ++lineno;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = detail::strip_cr(raw);
    if (line.empty()) continue;
    auto f = detail::split_fields(line);
    if (f.size() != 9) throw LoadError(source, lineno, "expected 9 columns");
    InvocationRecord r;
    r.id = out.size();
    r.function = std::string(f[0]);
    auto a = parse_decimal(f[1]);
    auto d = parse_decimal(f[2]);
    auto c = parse_decimal(f[3]);
    auto st = parse_start_state(f[4]);
    auto dev = parse_decimal(f[5]);
    if (!a || !d || !c || !st || !dev) throw LoadError(source, lineno, "malformed row");
    r.arrival_s = *a;
    r.dispatch_s = *d;
    r.complete_s = *c;
    r.gpu_exec_s = r.exec_s();
    r.start_state = *st;
    r.device = static_cast<int>(*dev);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace gpufairq
