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

// Workload sources: the built-in profile registry, synthetic Zipfian
// open-loop traces, and the trace CSV format.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpufairq/model.hpp"

namespace gpufairq {

struct TraceEntry {
  double arrival_s = 0.0;
  std::string function;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct Trace {
  std::vector<TraceEntry> entries;
  double duration_s = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const Trace&, const Trace&) = default;
};

// The eight GPU functions with their measured V100 warm/cold seconds.
// Memory footprints and compute shares are modelling defaults.
std::vector<FunctionProfile> default_profiles();

// n functions drawn round-robin from base. When n exceeds base.size() every
// function is a named copy "<name>-<copy>" sharing its base profile.
std::vector<FunctionProfile> expand_profiles(const std::vector<FunctionProfile>& base,
                                             std::size_t n);

// Per-function rates proportional to rank^-s, normalized to total_rate_rps.
std::vector<double> zipf_rates(std::size_t n_functions, double s, double total_rate_rps);

// Open-loop trace: function k (rank k+1) gets exponential inter-arrival
// times at its Zipf rate, drawn from its own seeded substream. Arrival times
// are rounded to the microsecond.
Trace gen_zipf(const std::vector<std::string>& functions, double s, double total_rate_rps,
               double duration_s, std::uint64_t seed);
// Same with generic names f0..f{n-1}.
Trace gen_zipf(std::size_t n_functions, double s, double total_rate_rps, double duration_s,
               std::uint64_t seed);

// Trace CSV: optional "# duration_s=" / "# seed=" lines, then the header
// "arrival_s,function" and one row per arrival.
void write_trace(std::ostream& out, const Trace& t);
void write_trace_file(const std::string& path, const Trace& t);
// When known_functions is non-empty every row must name one of them.
Trace parse_trace(std::istream& in, const std::string& source,
                  const std::vector<std::string>& known_functions = {});
Trace load_trace(const std::string& path, const std::vector<std::string>& known_functions = {});

// Divides every arrival time by factor (a factor of 2 doubles the rate).
Trace scale_trace(const Trace& t, double factor);

}  // namespace gpufairq
