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

// Deterministic discrete-event engine wiring a trace, a policy and the
// device model together.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "gpufairq/device.hpp"
#include "gpufairq/mqfq.hpp"
#include "gpufairq/policy.hpp"
#include "gpufairq/records.hpp"
#include "gpufairq/workload.hpp"

namespace gpufairq {

// scheduler.d_max and scheduler.allow_dynamic_d are authoritative; they are
// copied into the device configuration. FcfsNaive disables the pool.
struct SimConfig {
  PolicyKind policy = PolicyKind::MqfqSticky;
  SchedulerConfig scheduler;
  DeviceConfig device;
};

enum class EventKind { Arrival, Completion, MonitorTick, QueueExpiryCheck };

struct Event {
  double time_s = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Arrival;
  InvocationId invocation = 0;
  int device = 0;
  std::uint64_t token = 0;
  std::string function;
};

struct SimResult {
  PolicyKind policy = PolicyKind::MqfqSticky;
  std::vector<InvocationRecord> records;  // in arrival order
  SimAudit audit;
  double makespan_s = 0.0;
  double mean_util = 0.0;
};

class Simulation {
 public:
  // Throws ValidationError when the trace is not monotone or
  // names a function without a profile.
  Simulation(Trace trace, std::vector<FunctionProfile> profiles, SimConfig cfg);

  // Processes the earliest pending event; nullopt once everything is done.
  std::optional<Event> step();
  void run_to_end();
  SimResult take_result();

  double now() const noexcept { return now_; }
  const Policy& policy() const noexcept { return *policy_; }
  const DeviceSet& devices() const noexcept { return devices_; }
  const SimConfig& config() const noexcept { return cfg_; }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time_s != b.time_s) return a.time_s > b.time_s;
      return a.seq > b.seq;
    }
  };

  struct Running {
    Invocation invocation;
    double tau_sample = 0.0;
  };

  void schedule(Event ev);
  void schedule_next_arrival();
  void ensure_monitoring();
  bool work_remains() const;
  void dispatch_all(std::set<std::string>& touched);
  void note_backlog(const std::set<std::string>& touched);

  Trace trace_;
  SimConfig cfg_;
  std::unique_ptr<Policy> policy_;
  DeviceSet devices_;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t next_seq_ = 0;
  std::size_t next_arrival_ = 0;
  double now_ = 0.0;
  std::vector<bool> ticking_;
  std::vector<int> last_d_;
  std::map<InvocationId, Running> running_;
  std::map<std::string, int> backlog_count_;
  std::map<std::string, bool> backlogged_;
  std::vector<InvocationRecord> records_;
  std::vector<bool> completed_;
  SimAudit audit_;
};

SimResult run(const Trace& trace, const std::vector<FunctionProfile>& profiles,
              const SimConfig& cfg);

}  // namespace gpufairq
