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

// Domain types shared by every scheduling policy: function profiles,
// invocations, running-average estimators and per-function flow queues.

#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gpufairq {

// Thermal state of the container an invocation started in.
enum class StartState { GpuWarm, HostWarm, Cold };

std::string_view to_string(StartState s);
std::optional<StartState> parse_start_state(std::string_view s);

// Static performance model of one function.
struct FunctionProfile {
  std::string name;
  double warm_exec_s = 0.0;
  double cold_exec_s = 0.0;
  double mem_mb = 0.0;
  double compute_share = 1.0;
  double weight = 1.0;

  // Throws ValidationError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const FunctionProfile&, const FunctionProfile&) = default;
};

using InvocationId = std::uint64_t;

struct Invocation {
  InvocationId id = 0;
  std::string function;
  double arrival_s = 0.0;
  double start_tag = 0.0;
  std::optional<double> dispatch_s;
  std::optional<double> complete_s;
  StartState start_state = StartState::Cold;
};

// All-history arithmetic mean, updated incrementally.
class RunningMean {
 public:
  RunningMean() = default;

  // Throws ValidationError on a negative sample.
  void record(double x);

  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
};

RunningMean record_sample(RunningMean est, double x);

enum class QueueState { Active, Throttled, Inactive };

std::string_view to_string(QueueState s);

// Per-function dispatch queue. vt is the service (seconds of GPU time,
// weight-normalized) charged to the queue so far.
struct FlowQueue {
  std::string function;
  double weight = 1.0;
  double vt = 0.0;
  QueueState state = QueueState::Inactive;
  std::deque<Invocation> pending;
  int in_flight = 0;
  double last_exec_s = 0.0;
  RunningMean tau;
  RunningMean iat;
  std::optional<double> last_arrival_s;

  bool backlogged() const noexcept { return !pending.empty() || in_flight > 0; }
};

// Appends inv to q. An Inactive queue is reactivated with its vt clamped up
// to global_vt so it cannot replay service it did not use while away.
// Assigns inv.start_tag = q.vt + position * tau.
void enqueue(FlowQueue& q, Invocation inv, double global_vt, double now);

// Anticipation grace period for an empty queue: alpha * mean IAT, or
// default_ttl_s before the first inter-arrival sample exists.
double ttl_of(const FlowQueue& q, double alpha, double default_ttl_s);

// Profiles CSV: name,warm_s,cold_s,mem_mb,compute_share,weight
std::vector<FunctionProfile> parse_profiles(std::istream& in, const std::string& source);
std::vector<FunctionProfile> load_profiles(const std::string& path);
void write_profiles(std::ostream& out, const std::vector<FunctionProfile>& profiles);

// Strict decimal parser shared by the file readers: digits, optional sign,
// '.' as decimal separator, optional exponent. Rejects trailing garbage.
std::optional<double> parse_decimal(std::string_view text);

}  // namespace gpufairq
