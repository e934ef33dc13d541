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

// Experiment configuration (line-oriented "key = value" with [section]
// headers) and the one-call runner used by the C API and the CLI.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gpufairq/metrics.hpp"
#include "gpufairq/sim.hpp"
#include "gpufairq/workload.hpp"

namespace gpufairq {

struct WorkloadSpec {
  std::string profiles_path;  // empty: built-in registry
  std::string trace_path;     // empty: Zipf generator below
  std::size_t n_functions = 24;
  double zipf_s = 1.5;
  double rate_rps = 2.69;
  double duration_s = 600.0;
  std::size_t copies = 0;  // 0: derived from n_functions
  double scale = 1.0;
};

struct ExperimentConfig {
  SimConfig sim;
  WorkloadSpec workload;
  std::uint64_t seed = 1;
  std::string out_dir;  // empty: chosen by the caller
  double window_s = 30.0;

  // Sets "section.key" from its textual value. Throws ValidationError naming
  // the key on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void validate() const;
  // Every key with its current value, in documentation order.
  std::vector<std::pair<std::string, std::string>> echo() const;

  // Generator keys explicitly given (conflict check against trace_path).
  std::set<std::string> generator_keys_set;
};

struct ConfigKey {
  const char* name;
  const char* help;
};
const std::vector<ConfigKey>& config_keys();

// Relative paths inside the file are resolved against the file's directory.
ExperimentConfig parse_config(std::istream& in, const std::string& source,
                              const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);

struct PreparedWorkload {
  std::vector<FunctionProfile> profiles;
  Trace trace;
};

PreparedWorkload prepare_workload(const ExperimentConfig& cfg);

struct ExperimentResult {
  SimResult sim;
  std::vector<ServiceWindow> windows;
  Summary summary;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg, const PreparedWorkload& workload);

}  // namespace gpufairq
