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

// Rows and logs produced by a simulation run; the input of every analysis.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpufairq/device.hpp"
#include "gpufairq/model.hpp"
#include "gpufairq/policy.hpp"

namespace gpufairq {

struct InvocationRecord {
  InvocationId id = 0;
  std::string function;
  double arrival_s = 0.0;
  double dispatch_s = 0.0;
  double complete_s = 0.0;
  StartState start_state = StartState::Cold;
  int device = 0;
  // Time spent executing on the GPU: the tail of [dispatch, complete] after
  // container start-up and data transfer.
  double gpu_exec_s = 0.0;

  double queue_latency_s() const { return dispatch_s - arrival_s; }
  double exec_s() const { return complete_s - dispatch_s; }
  double latency_s() const { return complete_s - arrival_s; }
  double gpu_start_s() const { return complete_s - gpu_exec_s; }
};

// Backlog (pending or in flight) of one function after an event changed it.
struct BacklogSample {
  double time = 0.0;
  std::string function;
  bool backlogged = false;
};

struct ConcurrencySample {
  double time = 0.0;
  int device = 0;
  int effective_d = 0;
};

struct SimAudit {
  std::vector<DispatchAudit> dispatches;
  std::vector<BacklogSample> backlog;
  std::vector<ConcurrencySample> concurrency;
  std::vector<Eviction> evictions;
  std::uint64_t events = 0;
};

}  // namespace gpufairq
