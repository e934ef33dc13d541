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

#include "gpufairq/baselines.hpp"

#include <stdexcept>

namespace gpufairq {

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::MqfqSticky: return "mqfq";
    case PolicyKind::Fcfs: return "fcfs";
    case PolicyKind::Batch: return "batch";
    case PolicyKind::Sjf: return "sjf";
    case PolicyKind::FcfsNaive: return "fcfs_naive";
  }
  return "mqfq";
}

std::optional<PolicyKind> parse_policy(std::string_view s) {
  if (s == "mqfq") return PolicyKind::MqfqSticky;
  if (s == "fcfs") return PolicyKind::Fcfs;
  if (s == "batch") return PolicyKind::Batch;
  if (s == "sjf") return PolicyKind::Sjf;
  if (s == "fcfs_naive") return PolicyKind::FcfsNaive;
  return std::nullopt;
}

std::unique_ptr<Policy> make_policy(PolicyKind kind, const SchedulerConfig& cfg) {
  switch (kind) {
    case PolicyKind::MqfqSticky: return std::make_unique<MqfqScheduler>(cfg);
    case PolicyKind::Fcfs: return std::make_unique<FcfsPolicy>(false);
    case PolicyKind::FcfsNaive: return std::make_unique<FcfsPolicy>(true);
    case PolicyKind::Batch: return std::make_unique<BatchPolicy>();
    case PolicyKind::Sjf: return std::make_unique<SjfPolicy>(cfg);
  }
  throw std::logic_error("unhandled policy kind");
}

namespace {

void forget(std::set<InvocationId>& in_flight, const Invocation& inv) {
  if (in_flight.erase(inv.id) == 0)
    throw std::logic_error("completion for unknown or already completed invocation " +
                           std::to_string(inv.id));
}

DispatchDecision take(std::deque<Invocation>& q, const Grant& grant, double now,
                      std::vector<DispatchAudit>& audit, int in_flight) {
  audit.push_back(DispatchAudit{now, q.front().function, q.front().id, 0.0, 0.0, q.size(),
                                in_flight, grant.device, grant.start_state});
  Invocation inv = std::move(q.front());
  q.pop_front();
  inv.dispatch_s = now;
  inv.start_state = grant.start_state;
  return DispatchDecision{std::move(inv), grant.device, grant.token, grant.start_state};
}

}  // namespace

// FCFS

void FcfsPolicy::enqueue(Invocation inv, double /*now*/) { queue_.push_back(std::move(inv)); }

std::optional<DispatchDecision> FcfsPolicy::dispatch(TokenSource& tokens, double now) {
  if (queue_.empty()) return std::nullopt;
  auto grant = tokens.acquire(queue_.front().function, now);
  if (!grant) return std::nullopt;
  auto decision = take(queue_, *grant, now, audit_, static_cast<int>(in_flight_ids_.size()));
  in_flight_ids_.insert(decision.invocation.id);
  return decision;
}

void FcfsPolicy::on_completion(const Invocation& inv, double, double) {
  forget(in_flight_ids_, inv);
}

// Batch

void BatchPolicy::enqueue(Invocation inv, double /*now*/) {
  auto& q = queues_[inv.function];
  q.push_back(std::move(inv));
  ++pending_;
}

std::optional<DispatchDecision> BatchPolicy::dispatch(TokenSource& tokens, double now) {
  if (draining_ && queues_[*draining_].empty()) draining_.reset();
  if (!draining_) {
    const Invocation* oldest = nullptr;
    for (const auto& [name, q] : queues_) {
      if (q.empty()) continue;
      const Invocation& head = q.front();
      if (!oldest || head.arrival_s < oldest->arrival_s ||
          (head.arrival_s == oldest->arrival_s && head.id < oldest->id))
        oldest = &head;
    }
    if (!oldest) return std::nullopt;
    draining_ = oldest->function;
  }
  auto& q = queues_[*draining_];
  auto grant = tokens.acquire(*draining_, now);
  if (!grant) return std::nullopt;
  auto decision = take(q, *grant, now, audit_, static_cast<int>(in_flight_ids_.size()));
  --pending_;
  in_flight_ids_.insert(decision.invocation.id);
  return decision;
}

void BatchPolicy::on_completion(const Invocation& inv, double, double) {
  forget(in_flight_ids_, inv);
}

// SJF

void SjfPolicy::enqueue(Invocation inv, double now) {
  auto [it, inserted] = queues_.try_emplace(inv.function);
  if (inserted) {
    it->second.function = inv.function;
    it->second.weight = cfg_.weight_of(inv.function);
  }
  gpufairq::enqueue(it->second, std::move(inv), 0.0, now);
  ++pending_;
}

std::optional<DispatchDecision> SjfPolicy::dispatch(TokenSource& tokens, double now) {
  FlowQueue* best = nullptr;
  for (auto& [name, q] : queues_) {
    if (q.pending.empty()) continue;
    // Map iteration is by name, so strict '<' keeps the first name on ties.
    if (!best || q.tau.mean() < best->tau.mean()) best = &q;
  }
  if (!best) return std::nullopt;
  auto grant = tokens.acquire(best->function, now);
  if (!grant) return std::nullopt;
  auto decision = take(best->pending, *grant, now, audit_, best->in_flight);
  --pending_;
  ++best->in_flight;
  in_flight_ids_.insert(decision.invocation.id);
  return decision;
}

void SjfPolicy::on_completion(const Invocation& inv, double exec_s, double now) {
  forget(in_flight_ids_, inv);
  auto& q = queues_.at(inv.function);
  --q.in_flight;
  q.tau.record(exec_s);
  q.last_exec_s = now;
}

}  // namespace gpufairq
