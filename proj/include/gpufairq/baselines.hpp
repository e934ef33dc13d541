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

// Comparison policies sharing the Policy interface: FCFS (with and without
// the container pool), Batch and shortest-job-first.

#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "gpufairq/model.hpp"
#include "gpufairq/mqfq.hpp"
#include "gpufairq/policy.hpp"

namespace gpufairq {

// Strict arrival order with head-of-line blocking. The naive variant differs
// only in the device configuration (pool disabled), which the engine applies.
class FcfsPolicy final : public Policy {
 public:
  explicit FcfsPolicy(bool naive = false) : naive_(naive) {}

  PolicyKind kind() const override { return naive_ ? PolicyKind::FcfsNaive : PolicyKind::Fcfs; }
  void enqueue(Invocation inv, double now) override;
  std::optional<DispatchDecision> dispatch(TokenSource& tokens, double now) override;
  void on_completion(const Invocation& inv, double exec_s, double now) override;
  std::size_t pending_count() const override { return queue_.size(); }

 private:
  bool naive_;
  std::deque<Invocation> queue_;
  std::set<InvocationId> in_flight_ids_;
};

// Drains the whole per-function queue holding the oldest pending invocation
// before moving on; arrivals to the draining queue join the current drain.
class BatchPolicy final : public Policy {
 public:
  PolicyKind kind() const override { return PolicyKind::Batch; }
  void enqueue(Invocation inv, double now) override;
  std::optional<DispatchDecision> dispatch(TokenSource& tokens, double now) override;
  void on_completion(const Invocation& inv, double exec_s, double now) override;
  std::size_t pending_count() const override { return pending_; }

  const std::optional<std::string>& draining() const noexcept { return draining_; }

 private:
  std::map<std::string, std::deque<Invocation>> queues_;
  std::optional<std::string> draining_;
  std::set<InvocationId> in_flight_ids_;
  std::size_t pending_ = 0;
};

// Picks the backlogged function with the smallest running-mean execution
// time, ties by name, and runs its head invocation to completion.
class SjfPolicy final : public Policy {
 public:
  explicit SjfPolicy(SchedulerConfig cfg) : cfg_(std::move(cfg)) {}

  PolicyKind kind() const override { return PolicyKind::Sjf; }
  void enqueue(Invocation inv, double now) override;
  std::optional<DispatchDecision> dispatch(TokenSource& tokens, double now) override;
  void on_completion(const Invocation& inv, double exec_s, double now) override;
  std::size_t pending_count() const override { return pending_; }

  const std::map<std::string, FlowQueue>& queues() const noexcept { return queues_; }

 private:
  SchedulerConfig cfg_;
  std::map<std::string, FlowQueue> queues_;
  std::set<InvocationId> in_flight_ids_;
  std::size_t pending_ = 0;
};

}  // namespace gpufairq
