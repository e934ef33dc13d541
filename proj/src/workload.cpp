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

#include "gpufairq/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "fs_util.hpp"
#include "gpufairq/error.hpp"

namespace gpufairq {

std::vector<FunctionProfile> default_profiles() {
  // name, GPU warm s, GPU cold s, mem MB, compute share, weight. Shares read
  // as the fraction of time a kernel is running while the function executes;
  // ffmpeg leans on the fixed-function encoder.
  return {
      {"imagenet", 2.253, 11.286, 1500.0, 0.85, 1.0},
      {"roberta", 0.268, 15.481, 1500.0, 0.80, 1.0},
      {"ffmpeg", 4.483, 4.612, 1500.0, 0.55, 1.0},
      {"fft", 0.897, 3.322, 1500.0, 0.90, 1.0},
      {"isoneural", 0.026, 9.963, 1500.0, 0.70, 1.0},
      {"lud", 2.050, 2.359, 1500.0, 0.95, 1.0},
      {"needle", 1.979, 2.177, 1500.0, 0.90, 1.0},
      {"pathfinder", 1.472, 1.797, 1500.0, 0.85, 1.0},
  };
}

std::vector<FunctionProfile> expand_profiles(const std::vector<FunctionProfile>& base,
                                             std::size_t n) {
  if (base.empty()) throw ValidationError("expand_profiles: empty base profile set");
  const bool copies = n > base.size();
  std::vector<FunctionProfile> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FunctionProfile p = base[i % base.size()];
    if (copies) p.name += "-" + std::to_string(i / base.size());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> zipf_rates(std::size_t n_functions, double s, double total_rate_rps) {
  if (n_functions < 1) throw ValidationError("zipf: n_functions must be >= 1");
  if (!(s > 0)) throw ValidationError("zipf: s must be > 0");
  if (!(total_rate_rps > 0)) throw ValidationError("zipf: rate must be > 0");
  std::vector<double> rates(n_functions);
  double norm = 0.0;
  for (std::size_t k = 0; k < n_functions; ++k) {
    rates[k] = std::pow(static_cast<double>(k + 1), -s);
    norm += rates[k];
  }
  for (auto& r : rates) r *= total_rate_rps / norm;
  return rates;
}

namespace {

// Uniform in [0,1) from the top 53 bits; mt19937_64 output is fixed by the
// standard, so this stays identical across standard libraries.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double round_us(double t) { return std::round(t * 1e6) / 1e6; }

}  // namespace

Trace gen_zipf(const std::vector<std::string>& functions, double s, double total_rate_rps,
               double duration_s, std::uint64_t seed) {
  if (!(duration_s >= 0)) throw ValidationError("zipf: duration must be >= 0");
  auto rates = zipf_rates(functions.size(), s, total_rate_rps);
  Trace t;
  t.duration_s = duration_s;
  t.seed = seed;
  for (std::size_t k = 0; k < functions.size(); ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k), 0x9e3779b9u};
    std::mt19937_64 rng(seq);
    double now = 0.0;
    while (true) {
      now += -std::log1p(-unit_uniform(rng)) / rates[k];
      if (now >= duration_s) break;
      t.entries.push_back(TraceEntry{round_us(now), functions[k]});
    }
  }
  std::stable_sort(t.entries.begin(), t.entries.end(),
                   [](const TraceEntry& a, const TraceEntry& b) {
                     return a.arrival_s < b.arrival_s;
                   });
  return t;
}

Trace gen_zipf(std::size_t n_functions, double s, double total_rate_rps, double duration_s,
               std::uint64_t seed) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < n_functions; ++k) names.push_back("f" + std::to_string(k));
  return gen_zipf(names, s, total_rate_rps, duration_s, seed);
}

void write_trace(std::ostream& out, const Trace& t) {
  out << "# duration_s=" << detail::shortest(t.duration_s) << '\n';
  out << "# seed=" << t.seed << '\n';
  out << "arrival_s,function\n";
  for (const auto& e : t.entries) out << detail::shortest(e.arrival_s) << ',' << e.function << '\n';
}

void write_trace_file(const std::string& path, const Trace& t) {
  std::ostringstream body;
  write_trace(body, t);
  detail::write_file_atomic(path, body.str());
}

Trace parse_trace(std::istream& in, const std::string& source,
                  const std::vector<std::string>& known_functions) {
  const std::set<std::string> known(known_functions.begin(), known_functions.end());
  Trace t;
  std::string raw;
  std::size_t lineno = 0;
  bool header = false;
  bool explicit_duration = false;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = detail::strip_cr(raw);
    if (!header) {
      if (line.rfind("#", 0) == 0) {
        std::string_view meta = detail::trim(line.substr(1));
        if (meta.rfind("duration_s=", 0) == 0) {
          auto v = parse_decimal(meta.substr(11));
          if (!v || *v < 0) throw LoadError(source, lineno, "invalid duration_s metadata");
          t.duration_s = *v;
          explicit_duration = true;
        } else if (meta.rfind("seed=", 0) == 0) {
          std::string digits(meta.substr(5));
          try {
            std::size_t used = 0;
            t.seed = std::stoull(digits, &used);
            if (used != digits.size()) throw std::invalid_argument("seed");
          } catch (const std::exception&) {
            throw LoadError(source, lineno, "invalid seed metadata");
          }
        }
        continue;
      }
      if (line != "arrival_s,function")
        throw LoadError(source, lineno, "header must be exactly 'arrival_s,function'");
      header = true;
      continue;
    }
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_fields(line);
    if (fields.size() != 2)
      throw LoadError(source, lineno, "expected 2 columns, got " + std::to_string(fields.size()));
    auto arrival = parse_decimal(fields[0]);
    if (!arrival || *arrival < 0)
      throw LoadError(source, lineno, "invalid arrival_s '" + std::string(fields[0]) + "'");
    std::string name(detail::trim(fields[1]));
    if (name.empty()) throw LoadError(source, lineno, "empty function name");
    if (!known.empty() && !known.count(name))
      throw LoadError(source, lineno, "unknown function '" + name + "'");
    if (!t.entries.empty() && *arrival < t.entries.back().arrival_s)
      throw LoadError(source, lineno, "arrival times decrease (" +
                                          detail::shortest(*arrival) + " after " +
                                          detail::shortest(t.entries.back().arrival_s) + ")");
    t.entries.push_back(TraceEntry{*arrival, std::move(name)});
  }
  if (!header) throw LoadError(source, 0, "missing header 'arrival_s,function'");
  if (!explicit_duration && !t.entries.empty()) t.duration_s = t.entries.back().arrival_s;
  return t;
}

Trace load_trace(const std::string& path, const std::vector<std::string>& known_functions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open trace file");
  return parse_trace(in, path, known_functions);
}

Trace scale_trace(const Trace& t, double factor) {
  if (!(factor > 0)) throw ValidationError("scale factor must be > 0");
  Trace out = t;
  for (auto& e : out.entries) e.arrival_s /= factor;
  out.duration_s /= factor;
  return out;
}

}  // namespace gpufairq
