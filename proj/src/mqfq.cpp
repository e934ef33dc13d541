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

#include "gpufairq/mqfq.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gpufairq/error.hpp"

namespace gpufairq {

namespace {
// Expiry checks are scheduled at exactly last_exec + TTL; absorb the rounding
// of that sum so the check fires on time.
constexpr double kTimeSlack = 1e-9;
}  // namespace

double SchedulerConfig::weight_of(const std::string& function) const {
  auto it = weights.find(function);
  return it == weights.end() ? 1.0 : it->second;
}

void SchedulerConfig::validate() const {
  if (!(T >= 0)) throw ValidationError("scheduler.T must be >= 0");
  if (d_max < 1) throw ValidationError("scheduler.d_max must be >= 1");
  if (!(alpha >= 0)) throw ValidationError("scheduler.alpha must be >= 0");
  if (!(default_ttl_s >= 0)) throw ValidationError("scheduler.default_ttl_s must be >= 0");
  for (const auto& [name, w] : weights)
    if (!(w > 0)) throw ValidationError("weight for '" + name + "' must be > 0");
}

double recompute_global_vt(SchedulerState& state) {
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& [name, q] : state.queues) {
    if (q.state == QueueState::Inactive || !q.backlogged()) continue;
    lowest = std::min(lowest, q.vt);
  }
  if (lowest != std::numeric_limits<double>::infinity())
    state.global_vt = std::max(state.global_vt, lowest);
  return state.global_vt;
}

QueueState update_state(FlowQueue& q, double global_vt, double now,
                        const SchedulerConfig& cfg) {
  if (q.pending.empty() && q.in_flight == 0 &&
      now - q.last_exec_s + kTimeSlack >= ttl_of(q, cfg.alpha, cfg.default_ttl_s)) {
    q.state = QueueState::Inactive;
  } else if (q.vt - global_vt > cfg.T) {
    q.state = QueueState::Throttled;
  } else {
    q.state = QueueState::Active;
  }
  return q.state;
}

double fairness_bound(int D, double T, double tau_i, double tau_j, double w_i, double w_j) {
  if (D < 1) throw ValidationError("fairness_bound: D must be >= 1");
  if (!(w_i > 0) || !(w_j > 0)) throw ValidationError("fairness_bound: weights must be > 0");
  return static_cast<double>(D - 1) * (2.0 * T + tau_i / w_i - tau_j / w_j);
}

double fairness_bound_conservative(int D, double T, double tau_i, double tau_j, double w_i,
                                   double w_j) {
  if (D < 1) throw ValidationError("fairness_bound: D must be >= 1");
  if (!(w_i > 0) || !(w_j > 0)) throw ValidationError("fairness_bound: weights must be > 0");
  return static_cast<double>(D - 1) * (2.0 * T + tau_i / w_i + tau_j / w_j);
}

bool unstall(SchedulerState& state, const SchedulerConfig& cfg) {
  bool any_in_flight = false;
  bool any_candidate = false;
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& [name, q] : state.queues) {
    if (q.in_flight > 0) any_in_flight = true;
    if (q.pending.empty()) continue;
    lowest = std::min(lowest, q.vt);
    if (q.state == QueueState::Active && q.vt - state.global_vt <= cfg.T) any_candidate = true;
  }
  if (any_in_flight || any_candidate || lowest == std::numeric_limits<double>::infinity())
    return false;
  if (lowest <= state.global_vt) return false;
  state.global_vt = lowest;
  return true;
}

MqfqScheduler::MqfqScheduler(SchedulerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

FlowQueue& MqfqScheduler::queue_for(const std::string& function) {
  auto [it, inserted] = state_.queues.try_emplace(function);
  if (inserted) {
    it->second.function = function;
    it->second.weight = cfg_.weight_of(function);
  }
  return it->second;
}

void MqfqScheduler::set_weight(const std::string& function, double w) {
  if (!(w > 0)) throw ValidationError("weight for '" + function + "' must be > 0");
  cfg_.weights[function] = w;
  if (auto it = state_.queues.find(function); it != state_.queues.end()) it->second.weight = w;
}

void MqfqScheduler::enqueue(Invocation inv, double now) {
  auto& q = queue_for(inv.function);
  gpufairq::enqueue(q, std::move(inv), state_.global_vt, now);
  ++pending_;
}

void MqfqScheduler::refresh_states(TokenSource& tokens, double now) {
  for (auto& [name, q] : state_.queues) {
    QueueState before = q.state;
    QueueState after = update_state(q, state_.global_vt, now, cfg_);
    if (after == before) continue;
    if (after == QueueState::Active)
      tokens.on_queue_active(name, now);
    else
      tokens.on_queue_idle(name, now);
  }
}

std::optional<DispatchDecision> MqfqScheduler::dispatch(TokenSource& tokens, double now) {
  recompute_global_vt(state_);
  refresh_states(tokens, now);

  auto collect = [this] {
    std::vector<FlowQueue*> cand;
    for (auto& [name, q] : state_.queues) {
      if (q.state == QueueState::Active && !q.pending.empty() &&
          q.vt - state_.global_vt <= cfg_.T)
        cand.push_back(&q);
    }
    return cand;
  };

  auto cand = collect();
  if (cand.empty() && unstall(state_, cfg_)) {
    refresh_states(tokens, now);
    cand = collect();
  }
  if (cand.empty()) return std::nullopt;

  const bool by_in_flight = tokens.concurrency_limit() != 1;
  std::sort(cand.begin(), cand.end(), [by_in_flight](const FlowQueue* a, const FlowQueue* b) {
    if (a->pending.size() != b->pending.size()) return a->pending.size() > b->pending.size();
    if (by_in_flight && a->in_flight != b->in_flight) return a->in_flight < b->in_flight;
    return a->function < b->function;
  });

  FlowQueue& chosen = *cand.front();
  auto grant = tokens.acquire(chosen.function, now);
  if (!grant) return std::nullopt;

  DispatchAudit audit{now,
                      chosen.function,
                      chosen.pending.front().id,
                      chosen.vt,
                      state_.global_vt,
                      chosen.pending.size(),
                      chosen.in_flight,
                      grant->device,
                      grant->start_state};

  Invocation inv = std::move(chosen.pending.front());
  chosen.pending.pop_front();
  --pending_;
  inv.dispatch_s = now;
  inv.start_state = grant->start_state;
  chosen.vt += chosen.tau.mean() / chosen.weight;
  ++chosen.in_flight;
  chosen.last_exec_s = now;
  in_flight_ids_.insert(inv.id);
  recompute_global_vt(state_);

  audit_.push_back(std::move(audit));
  return DispatchDecision{std::move(inv), grant->device, grant->token, grant->start_state};
}

void MqfqScheduler::on_completion(const Invocation& inv, double exec_s, double now) {
  auto it = state_.queues.find(inv.function);
  if (it == state_.queues.end() || in_flight_ids_.erase(inv.id) == 0)
    throw std::logic_error("completion for unknown or already completed invocation " +
                           std::to_string(inv.id));
  FlowQueue& q = it->second;
  --q.in_flight;
  q.tau.record(exec_s);
  q.last_exec_s = now;
}

std::optional<double> MqfqScheduler::expiry_deadline(const std::string& function) const {
  auto it = state_.queues.find(function);
  if (it == state_.queues.end()) return std::nullopt;
  const FlowQueue& q = it->second;
  if (!q.pending.empty() || q.in_flight > 0 || q.state == QueueState::Inactive)
    return std::nullopt;
  return q.last_exec_s + ttl_of(q, cfg_.alpha, cfg_.default_ttl_s);
}

}  // namespace gpufairq
