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

// The common interface every queueing policy implements, and the token
// source abstraction policies use to reach the device layer.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpufairq/model.hpp"

namespace gpufairq {

enum class PolicyKind { MqfqSticky, Fcfs, Batch, Sjf, FcfsNaive };

std::string_view to_string(PolicyKind k);
// Accepts the config spellings: mqfq, fcfs, batch, sjf, fcfs_naive.
std::optional<PolicyKind> parse_policy(std::string_view s);

// A concurrency token granted by a device for one invocation.
struct Grant {
  int device = 0;
  std::uint64_t token = 0;
  StartState start_state = StartState::Cold;
};

// What policies see of the devices: token acquisition with sticky device
// choice, plus a hook for queue-state driven memory release.
class TokenSource {
 public:
  virtual ~TokenSource() = default;

  virtual std::optional<Grant> acquire(const std::string& function, double now) = 0;

  // Total concurrent invocations currently allowed across devices.
  virtual int concurrency_limit() const = 0;

  // The function's queue went throttled or inactive; its idle device-resident
  // containers may be swapped out.
  virtual void on_queue_idle(const std::string& /*function*/, double /*now*/) {}
  // The function's queue is active again.
  virtual void on_queue_active(const std::string& /*function*/, double /*now*/) {}
};

struct DispatchDecision {
  Invocation invocation;
  int device = 0;
  std::uint64_t token = 0;
  StartState start_state = StartState::Cold;
};

// One line of the dispatch audit log.
struct DispatchAudit {
  double now = 0.0;
  std::string function;
  InvocationId invocation = 0;
  double vt_before = 0.0;
  double global_vt = 0.0;
  std::size_t queue_len = 0;
  int in_flight = 0;
  int device = 0;
  StartState start_state = StartState::Cold;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual PolicyKind kind() const = 0;
  virtual void enqueue(Invocation inv, double now) = 0;
  // Returns at most one decision; callers loop until nothing is returned.
  virtual std::optional<DispatchDecision> dispatch(TokenSource& tokens, double now) = 0;
  // exec_s is the execution time the policy's estimators should learn from.
  virtual void on_completion(const Invocation& inv, double exec_s, double now) = 0;
  // Time at which an idle function's queue should be re-examined, if any.
  virtual std::optional<double> expiry_deadline(const std::string& /*function*/) const {
    return std::nullopt;
  }
  virtual std::size_t pending_count() const = 0;

  const std::vector<DispatchAudit>& audit() const noexcept { return audit_; }

 protected:
  std::vector<DispatchAudit> audit_;
};

struct SchedulerConfig;
std::unique_ptr<Policy> make_policy(PolicyKind kind, const SchedulerConfig& cfg);

}  // namespace gpufairq
