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

#include "gpufairq/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "csv.hpp"
#include "gpufairq/error.hpp"

namespace gpufairq {

std::string_view to_string(StartState s) {
  switch (s) {
    case StartState::GpuWarm: return "gpu_warm";
    case StartState::HostWarm: return "host_warm";
    case StartState::Cold: return "cold";
  }
  return "cold";
}

std::optional<StartState> parse_start_state(std::string_view s) {
  if (s == "gpu_warm") return StartState::GpuWarm;
  if (s == "host_warm") return StartState::HostWarm;
  if (s == "cold") return StartState::Cold;
  return std::nullopt;
}

std::string_view to_string(QueueState s) {
  switch (s) {
    case QueueState::Active: return "active";
    case QueueState::Throttled: return "throttled";
    case QueueState::Inactive: return "inactive";
  }
  return "inactive";
}

void FunctionProfile::validate() const {
  auto fail = [this](const std::string& what) {
    throw ValidationError("profile '" + name + "': " + what);
  };
  if (name.empty()) throw ValidationError("profile with empty name");
  if (!(warm_exec_s > 0)) fail("warm_s must be > 0");
  if (!(cold_exec_s >= warm_exec_s)) fail("cold_s must be >= warm_s");
  if (!(mem_mb > 0)) fail("mem_mb must be > 0");
  if (!(compute_share > 0 && compute_share <= 1)) fail("compute_share must be in (0,1]");
  if (!(weight > 0)) fail("weight must be > 0");
}

void RunningMean::record(double x) {
  if (!(x >= 0)) throw ValidationError("running mean sample must be non-negative");
  ++count_;
  mean_ += (x - mean_) / static_cast<double>(count_);
}

RunningMean record_sample(RunningMean est, double x) {
  est.record(x);
  return est;
}

void enqueue(FlowQueue& q, Invocation inv, double global_vt, double now) {
  if (q.state == QueueState::Inactive) {
    q.vt = std::max(q.vt, global_vt);
    q.state = QueueState::Active;
  }
  inv.start_tag = q.vt + static_cast<double>(q.pending.size()) * q.tau.mean();
  if (q.last_arrival_s) q.iat.record(std::max(0.0, now - *q.last_arrival_s));
  q.last_arrival_s = now;
  q.pending.push_back(std::move(inv));
}

double ttl_of(const FlowQueue& q, double alpha, double default_ttl_s) {
  if (alpha == 0.0) return 0.0;
  if (q.iat.count() >= 1) return alpha * q.iat.mean();
  return default_ttl_s;
}

std::optional<double> parse_decimal(std::string_view text) {
  text = detail::trim(text);
  if (text.empty()) return std::nullopt;
  // from_chars accepts "inf"/"nan"; the file formats do not.
  for (char c : text) {
    bool ok = (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+' || c == 'e' ||
              c == 'E';
    if (!ok) return std::nullopt;
  }
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

namespace {
constexpr std::string_view kProfilesHeader = "name,warm_s,cold_s,mem_mb,compute_share,weight";
}

std::vector<FunctionProfile> parse_profiles(std::istream& in, const std::string& source) {
  std::vector<FunctionProfile> out;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw LoadError(source, 0, "empty profiles file");
  ++lineno;
  if (detail::strip_cr(line) != kProfilesHeader)
    throw LoadError(source, lineno,
                    "header must be exactly '" + std::string(kProfilesHeader) + "'");
  while (std::getline(in, line)) {
    ++lineno;
    auto row = detail::strip_cr(line);
    if (detail::trim(row).empty()) continue;
    auto fields = detail::split_fields(row);
    if (fields.size() != 6)
      throw LoadError(source, lineno,
                      "expected 6 columns, got " + std::to_string(fields.size()));
    FunctionProfile p;
    p.name = std::string(detail::trim(fields[0]));
    double* targets[] = {&p.warm_exec_s, &p.cold_exec_s, &p.mem_mb, &p.compute_share,
                         &p.weight};
    static constexpr std::string_view names[] = {"warm_s", "cold_s", "mem_mb",
                                                 "compute_share", "weight"};
    for (std::size_t i = 0; i < 5; ++i) {
      auto v = parse_decimal(fields[i + 1]);
      if (!v)
        throw LoadError(source, lineno,
                        "column " + std::string(names[i]) + ": invalid number '" +
                            std::string(fields[i + 1]) + "'");
      *targets[i] = *v;
    }
    try {
      p.validate();
    } catch (const ValidationError& e) {
      throw LoadError(source, lineno, e.what());
    }
    for (const auto& existing : out)
      if (existing.name == p.name)
        throw LoadError(source, lineno, "duplicate profile '" + p.name + "'");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<FunctionProfile> load_profiles(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open profiles file");
  return parse_profiles(in, path);
}

void write_profiles(std::ostream& out, const std::vector<FunctionProfile>& profiles) {
  out << kProfilesHeader << '\n';
  for (const auto& p : profiles) {
    out << p.name << ',' << detail::shortest(p.warm_exec_s) << ','
        << detail::shortest(p.cold_exec_s) << ',' << detail::shortest(p.mem_mb) << ','
        << detail::shortest(p.compute_share) << ',' << detail::shortest(p.weight) << '\n';
  }
}

}  // namespace gpufairq
