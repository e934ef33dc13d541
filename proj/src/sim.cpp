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

#include "gpufairq/sim.hpp"

#include <algorithm>
#include <stdexcept>

#include "gpufairq/error.hpp"

namespace gpufairq {

namespace {

SimConfig normalize(SimConfig cfg) {
  cfg.scheduler.validate();
  cfg.device.d_max = cfg.scheduler.d_max;
  cfg.device.dynamic_d = cfg.scheduler.allow_dynamic_d;
  if (cfg.policy == PolicyKind::FcfsNaive) cfg.device.pool_enabled = false;
  cfg.device.validate();
  return cfg;
}

void validate_trace(const Trace& trace, const std::vector<FunctionProfile>& profiles) {
  std::set<std::string> known;
  for (const auto& p : profiles) known.insert(p.name);
  double last = 0.0;
  for (std::size_t i = 0; i < trace.entries.size(); ++i) {
    const auto& e = trace.entries[i];
    if (!(e.arrival_s >= 0))
      throw ValidationError("trace entry " + std::to_string(i) + ": negative arrival time");
    if (e.arrival_s < last)
      throw ValidationError("trace entry " + std::to_string(i) + ": arrival times decrease");
    if (!known.count(e.function))
      throw ValidationError("trace entry " + std::to_string(i) + ": unknown function '" +
                            e.function + "'");
    last = e.arrival_s;
  }
}

}  // namespace

Simulation::Simulation(Trace trace, std::vector<FunctionProfile> profiles, SimConfig cfg)
    : trace_(std::move(trace)),
      cfg_(normalize(std::move(cfg))),
      policy_(make_policy(cfg_.policy, cfg_.scheduler)),
      devices_(cfg_.device, profiles) {
  validate_trace(trace_, profiles);
  ticking_.assign(static_cast<std::size_t>(devices_.size()), false);
  last_d_.assign(static_cast<std::size_t>(devices_.size()), cfg_.device.d_max);
  for (int d = 0; d < devices_.size(); ++d)
    audit_.concurrency.push_back(ConcurrencySample{0.0, d, devices_.device(d).effective_d()});
  records_.resize(trace_.entries.size());
  completed_.assign(trace_.entries.size(), false);
  schedule_next_arrival();
}

void Simulation::schedule(Event ev) {
  if (ev.time_s < now_) throw std::logic_error("event scheduled in the past");
  ev.seq = next_seq_++;
  events_.push(std::move(ev));
}

void Simulation::schedule_next_arrival() {
  if (next_arrival_ >= trace_.entries.size()) return;
  const auto& e = trace_.entries[next_arrival_];
  Event ev;
  ev.time_s = e.arrival_s;
  ev.kind = EventKind::Arrival;
  ev.invocation = next_arrival_;
  ev.function = e.function;
  schedule(std::move(ev));
  ++next_arrival_;
}

bool Simulation::work_remains() const {
  return policy_->pending_count() > 0 || devices_.total_outstanding() > 0;
}

void Simulation::ensure_monitoring() {
  for (int d = 0; d < devices_.size(); ++d) {
    if (ticking_[static_cast<std::size_t>(d)]) continue;
    ticking_[static_cast<std::size_t>(d)] = true;
    Event ev;
    ev.time_s = now_ + cfg_.device.monitor_period_s;
    ev.kind = EventKind::MonitorTick;
    ev.device = d;
    schedule(std::move(ev));
  }
}

void Simulation::dispatch_all(std::set<std::string>& touched) {
  while (auto decision = policy_->dispatch(devices_, now_)) {
    Grant grant{decision->device, decision->token, decision->start_state};
    const std::string function = decision->invocation.function;
    StartResult start = devices_.start(grant, function, now_);
    const InvocationId id = decision->invocation.id;

    auto& rec = records_[id];
    rec.dispatch_s = now_;
    rec.start_state = start.start_state;
    rec.device = decision->device;
    rec.gpu_exec_s = start.pure_exec_s;

    double tau = cfg_.scheduler.tau_includes_overhead ? start.duration_s : start.pure_exec_s;
    running_.emplace(id, Running{std::move(decision->invocation), tau});

    Event ev;
    ev.time_s = now_ + start.duration_s;
    ev.kind = EventKind::Completion;
    ev.invocation = id;
    ev.device = decision->device;
    ev.token = decision->token;
    ev.function = function;
    schedule(std::move(ev));
    touched.insert(function);
  }
}

void Simulation::note_backlog(const std::set<std::string>& touched) {
  for (const auto& f : touched) {
    bool now_backlogged = backlog_count_[f] > 0;
    auto [it, inserted] = backlogged_.try_emplace(f, false);
    if (inserted || it->second != now_backlogged) {
      if (!inserted || now_backlogged)
        audit_.backlog.push_back(BacklogSample{now_, f, now_backlogged});
      it->second = now_backlogged;
    }
  }
}

std::optional<Event> Simulation::step() {
  if (events_.empty()) {
    if (work_remains()) throw std::logic_error("simulation stalled with work outstanding");
    return std::nullopt;
  }
  Event ev = events_.top();
  events_.pop();
  if (ev.time_s < now_) throw std::logic_error("event processed out of order");
  now_ = ev.time_s;
  ++audit_.events;

  std::set<std::string> touched;
  switch (ev.kind) {
    case EventKind::Arrival: {
      const auto& entry = trace_.entries[ev.invocation];
      Invocation inv;
      inv.id = ev.invocation;
      inv.function = entry.function;
      inv.arrival_s = now_;
      auto& rec = records_[ev.invocation];
      rec.id = inv.id;
      rec.function = inv.function;
      rec.arrival_s = now_;
      policy_->enqueue(std::move(inv), now_);
      ++backlog_count_[entry.function];
      touched.insert(entry.function);
      schedule_next_arrival();
      ensure_monitoring();
      break;
    }
    case EventKind::Completion: {
      devices_.release(ev.device, ev.token, now_);
      auto it = running_.find(ev.invocation);
      if (it == running_.end()) throw std::logic_error("completion of an unknown invocation");
      Invocation inv = std::move(it->second.invocation);
      double tau = it->second.tau_sample;
      running_.erase(it);
      inv.complete_s = now_;
      records_[ev.invocation].complete_s = now_;
      completed_[ev.invocation] = true;
      policy_->on_completion(inv, tau, now_);
      --backlog_count_[ev.function];
      touched.insert(ev.function);
      if (auto deadline = policy_->expiry_deadline(ev.function)) {
        Event check;
        check.time_s = std::max(now_, *deadline);
        check.kind = EventKind::QueueExpiryCheck;
        check.function = ev.function;
        schedule(std::move(check));
      }
      break;
    }
    case EventKind::MonitorTick: {
      auto idx = static_cast<std::size_t>(ev.device);
      int d = devices_.device(ev.device).monitor_tick(now_);
      if (d != last_d_[idx]) {
        audit_.concurrency.push_back(ConcurrencySample{now_, ev.device, d});
        last_d_[idx] = d;
      }
      if (work_remains()) {
        Event next;
        next.time_s = now_ + cfg_.device.monitor_period_s;
        next.kind = EventKind::MonitorTick;
        next.device = ev.device;
        schedule(std::move(next));
      } else {
        ticking_[idx] = false;
      }
      break;
    }
    case EventKind::QueueExpiryCheck:
      break;
  }

  dispatch_all(touched);
  note_backlog(touched);
  return ev;
}

void Simulation::run_to_end() {
  while (step()) {
  }
}

SimResult Simulation::take_result() {
  for (std::size_t i = 0; i < completed_.size(); ++i)
    if (!completed_[i]) throw std::logic_error("simulation result requested before completion");
  SimResult out;
  out.policy = cfg_.policy;
  out.records = std::move(records_);
  out.audit = std::move(audit_);
  out.audit.dispatches = policy_->audit();
  for (int d = 0; d < devices_.size(); ++d) {
    const auto& ev = devices_.device(d).evictions();
    out.audit.evictions.insert(out.audit.evictions.end(), ev.begin(), ev.end());
  }
  for (const auto& r : out.records) out.makespan_s = std::max(out.makespan_s, r.complete_s);
  if (out.makespan_s > 0) {
    double sum = 0.0;
    for (int d = 0; d < devices_.size(); ++d)
      sum += devices_.device(d).util_integral(out.makespan_s) / out.makespan_s;
    out.mean_util = sum / devices_.size();
  }
  return out;
}

SimResult run(const Trace& trace, const std::vector<FunctionProfile>& profiles,
              const SimConfig& cfg) {
  Simulation sim(trace, profiles, cfg);
  sim.run_to_end();
  return sim.take_result();
}

}  // namespace gpufairq
