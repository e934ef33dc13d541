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

// MQFQ-Sticky: multi-queue fair queueing with queue over-run, anticipatory
// keep-alive and longest-queue-first preferential dispatch.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "gpufairq/model.hpp"
#include "gpufairq/policy.hpp"

namespace gpufairq {

struct SchedulerConfig {
  // Queue over-run: how far a queue's vt may run ahead of global_vt.
  double T = 10.0;
  int d_max = 2;
  // Anticipation TTL multiplier on the mean inter-arrival time.
  double alpha = 2.0;
  bool allow_dynamic_d = false;
  double default_ttl_s = 2.0;
  // Learn tau from the full duration (init and transfer included) instead of
  // the pure execution component.
  bool tau_includes_overhead = false;
  std::map<std::string, double> weights;

  double weight_of(const std::string& function) const;
  void validate() const;
};

struct SchedulerState {
  std::map<std::string, FlowQueue> queues;
  double global_vt = 0.0;
};

// Minimum vt over backlogged, non-inactive queues. Keeps the previous value
// when nothing is backlogged and never moves backwards.
double recompute_global_vt(SchedulerState& state);

// expired -> Inactive, over-run (vt - global_vt > T) -> Throttled, else Active.
QueueState update_state(FlowQueue& q, double global_vt, double now,
                        const SchedulerConfig& cfg);

// Pairwise service-gap bound (D - 1) * (2T + tau_i/w_i - tau_j/w_j), where i
// is the flow with the larger normalized service.
double fairness_bound(int D, double T, double tau_i, double tau_j, double w_i, double w_j);
// Same with both tau terms added.
double fairness_bound_conservative(int D, double T, double tau_i, double tau_j, double w_i,
                                   double w_j);

// Liveness guard: raises global_vt to the minimum backlogged vt when work is
// pending, nothing is in flight and no queue is a candidate. Returns whether
// global_vt changed.
bool unstall(SchedulerState& state, const SchedulerConfig& cfg);

class MqfqScheduler final : public Policy {
 public:
  explicit MqfqScheduler(SchedulerConfig cfg);

  PolicyKind kind() const override { return PolicyKind::MqfqSticky; }
  void enqueue(Invocation inv, double now) override;
  std::optional<DispatchDecision> dispatch(TokenSource& tokens, double now) override;
  void on_completion(const Invocation& inv, double exec_s, double now) override;
  std::optional<double> expiry_deadline(const std::string& function) const override;
  std::size_t pending_count() const override { return pending_; }

  // Applies to the function's queue from now on; w must be > 0.
  void set_weight(const std::string& function, double w);

  const SchedulerState& state() const noexcept { return state_; }
  SchedulerState& mutable_state() noexcept { return state_; }
  const SchedulerConfig& config() const noexcept { return cfg_; }

 private:
  FlowQueue& queue_for(const std::string& function);
  void refresh_states(TokenSource& tokens, double now);

  SchedulerConfig cfg_;
  SchedulerState state_;
  std::set<InvocationId> in_flight_ids_;
  std::size_t pending_ = 0;
};

}  // namespace gpufairq
