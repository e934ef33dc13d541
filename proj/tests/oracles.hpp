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

// Independent reference schedulers and a scripted single-server driver used
// by the acceptance suite to check dispatch order of the library scheduler.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "gpufairq/mqfq.hpp"

namespace gpufairq::oracle {

struct Job {
  double arrival = 0;
  std::string function;
  double exec = 0;  // scripted service time
};

struct Instance {
  std::vector<Job> jobs;  // sorted by arrival
  std::vector<double> probes;  // extra dispatch attempts
  std::map<std::string, double> weights;
  double T = 10;
  int D = 2;
  double alpha = 2;
  double default_ttl = 2;
};

struct Dispatched {
  double time;
  std::uint64_t id;
  std::string function;
  bool operator==(const Dispatched&) const = default;
};

// Times on a half-second grid so arrivals, completions and probes collide.
inline Instance random_instance(std::mt19937_64& rng, int max_queues, int max_jobs) {
  static const char* names[] = {"a", "b", "c", "d", "e", "f"};
  Instance in;
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  int queues = pick(1, max_queues);
  int jobs = pick(1, max_jobs);
  const double Ts[] = {0, 0.5, 1, 2, 5, 10};
  in.T = Ts[pick(0, 5)];
  in.D = pick(1, 3);
  in.alpha = pick(0, 3);
  in.default_ttl = pick(0, 4) * 0.5;
  for (int q = 0; q < queues; ++q)
    if (pick(0, 2) == 0) in.weights[names[q]] = pick(1, 3);
  for (int j = 0; j < jobs; ++j)
    in.jobs.push_back({pick(0, 20) * 0.5, names[pick(0, queues - 1)], pick(1, 8) * 0.5});
  std::stable_sort(in.jobs.begin(), in.jobs.end(),
                   [](const Job& x, const Job& y) { return x.arrival < y.arrival; });
  int probes = pick(0, 6);
  for (int p = 0; p < probes; ++p) in.probes.push_back(pick(0, 40) * 0.5);
  return in;
}

// Replays an instance against a scheduler exposing
//   enqueue(id, fn, now), dispatch(now) -> optional<pair<id, fn>>,
//   complete(id, fn, exec, now).
// Events at equal times: completions, then arrivals, then probes. Every event
// is followed by dispatch attempts until one fails.
template <class S>
std::vector<Dispatched> replay(const Instance& in, S& sched) {
  enum Kind { Completion = 0, Arrival = 1, Probe = 2 };
  using Ev = std::tuple<double, int, std::uint64_t, std::uint64_t>;  // time, kind, seq, id
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> events;
  std::uint64_t seq = 0;
  for (std::uint64_t i = 0; i < in.jobs.size(); ++i)
    events.emplace(in.jobs[i].arrival, Arrival, seq++, i);
  for (double p : in.probes) events.emplace(p, Probe, seq++, 0);
  std::vector<Dispatched> out;
  while (!events.empty()) {
    auto [t, kind, s, id] = events.top();
    events.pop();
    const Job& job = in.jobs[id];
    if (kind == Arrival) sched.enqueue(id, job.function, t);
    if (kind == Completion) sched.complete(id, job.function, job.exec, t);
    while (auto d = sched.dispatch(t)) {
      out.push_back({t, d->first, d->second});
      events.emplace(t + in.jobs[d->first].exec, Completion, seq++, d->first);
    }
  }
  return out;
}

// The library scheduler behind a fixed pool of D slots.
class LibraryAdapter {
 public:
  explicit LibraryAdapter(const Instance& in) : sched_(config(in)), slots_(in.D) {}

  void enqueue(std::uint64_t id, const std::string& fn, double now) {
    Invocation inv;
    inv.id = id;
    inv.function = fn;
    inv.arrival_s = now;
    sched_.enqueue(inv, now);
  }
  std::optional<std::pair<std::uint64_t, std::string>> dispatch(double now) {
    auto d = sched_.dispatch(slots_, now);
    if (!d) return std::nullopt;
    running_[d->invocation.id] = d->invocation;
    return std::pair{d->invocation.id, d->invocation.function};
  }
  void complete(std::uint64_t id, const std::string&, double exec, double now) {
    sched_.on_completion(running_.at(id), exec, now);
    running_.erase(id);
    slots_.release();
  }

 private:
  struct Slots final : TokenSource {
    explicit Slots(int d) : d(d) {}
    std::optional<Grant> acquire(const std::string&, double) override {
      if (used >= d) return std::nullopt;
      ++used;
      return Grant{0, next++, StartState::GpuWarm};
    }
    int concurrency_limit() const override { return d; }
    void release() { --used; }
    int d;
    int used = 0;
    std::uint64_t next = 1;
  };

  static SchedulerConfig config(const Instance& in) {
    SchedulerConfig c;
    c.T = in.T;
    c.d_max = in.D;
    c.alpha = in.alpha;
    c.default_ttl_s = in.default_ttl;
    c.weights = in.weights;
    return c;
  }

  MqfqScheduler sched_;
  Slots slots_;
  std::map<std::uint64_t, Invocation> running_;
};

// Straight-line transcription of the MQFQ-Sticky dispatch procedure:
//  - Global_VT is the minimum VT over queues that hold or run work and are
//    not inactive, and never decreases;
//  - UPDATE_STATE: expired (empty, idle, past TTL) -> Inactive, VT more than
//    T ahead -> Throttled, otherwise Active;
//  - candidates are active, non-empty queues within T of Global_VT, taken
//    longest first, then fewest in flight when D != 1, then by name;
//  - the chosen queue's VT grows by its mean execution time over its weight;
//  - an inactive queue that receives work restarts at Global_VT;
//  - if work is pending, nothing runs and no queue qualifies, Global_VT is
//    lifted to the lowest pending VT.
class DispatchReference {
 public:
  explicit DispatchReference(const Instance& in) : in_(in) {}

  void enqueue(std::uint64_t id, const std::string& fn, double now) {
    Q& q = queue(fn);
    if (q.state == Inactive) {
      if (q.vt < gvt_) q.vt = gvt_;
      q.state = Active;
    }
    if (q.has_arrival) {
      q.iat_sum += now - q.last_arrival;
      q.iat_n += 1;
    }
    q.has_arrival = true;
    q.last_arrival = now;
    q.items.push_back(id);
  }

  std::optional<std::pair<std::uint64_t, std::string>> dispatch(double now) {
    update_global_vt();
    for (auto& [name, q] : queues_) q.state = update_state(q, now);

    std::vector<std::string> cand = candidates();
    if (cand.empty()) {
      bool running = false;
      double lowest = std::numeric_limits<double>::infinity();
      for (auto& [name, q] : queues_) {
        if (q.in_flight > 0) running = true;
        if (!q.items.empty() && q.vt < lowest) lowest = q.vt;
      }
      if (!running && lowest != std::numeric_limits<double>::infinity() && lowest > gvt_) {
        gvt_ = lowest;
        for (auto& [name, q] : queues_) q.state = update_state(q, now);
        cand = candidates();
      }
    }
    if (cand.empty()) return std::nullopt;

    // Sort: longest queue first; among equals fewer in flight (D != 1); then name.
    std::string chosen = cand[0];
    for (const auto& name : cand) {
      const Q& a = queues_[name];
      const Q& b = queues_[chosen];
      bool better = false;
      if (a.items.size() != b.items.size()) {
        better = a.items.size() > b.items.size();
      } else if (in_.D != 1 && a.in_flight != b.in_flight) {
        better = a.in_flight < b.in_flight;
      } else {
        better = name < chosen;
      }
      if (better) chosen = name;
    }

    if (outstanding_ >= in_.D) return std::nullopt;  // get_D_token
    ++outstanding_;

    Q& q = queues_[chosen];
    std::uint64_t id = q.items.front();
    q.items.erase(q.items.begin());
    q.vt += (q.tau_n ? q.tau_sum / q.tau_n : 0.0) / weight(chosen);
    q.in_flight += 1;
    q.last_exec = now;
    update_global_vt();
    return std::pair{id, chosen};
  }

  void complete(std::uint64_t, const std::string& fn, double exec, double now) {
    Q& q = queues_[fn];
    q.in_flight -= 1;
    q.tau_sum += exec;
    q.tau_n += 1;
    q.last_exec = now;
    --outstanding_;
  }

 private:
  enum State { Active, Throttled, Inactive };
  struct Q {
    double vt = 0;
    State state = Inactive;
    std::vector<std::uint64_t> items;
    int in_flight = 0;
    double last_exec = 0;
    double tau_sum = 0;
    int tau_n = 0;
    double iat_sum = 0;
    int iat_n = 0;
    bool has_arrival = false;
    double last_arrival = 0;
  };

  Q& queue(const std::string& fn) { return queues_[fn]; }

  double weight(const std::string& fn) const {
    auto it = in_.weights.find(fn);
    return it == in_.weights.end() ? 1.0 : it->second;
  }

  double ttl(const Q& q) const {
    if (in_.alpha == 0) return 0;
    if (q.iat_n == 0) return in_.default_ttl;
    return in_.alpha * (q.iat_sum / q.iat_n);
  }

  State update_state(const Q& q, double now) const {
    if (q.items.empty() && q.in_flight == 0 && now - q.last_exec + 1e-9 >= ttl(q))
      return Inactive;
    if (q.vt - gvt_ > in_.T) return Throttled;
    return Active;
  }

  void update_global_vt() {
    double lowest = std::numeric_limits<double>::infinity();
    for (auto& [name, q] : queues_)
      if (q.state != Inactive && (!q.items.empty() || q.in_flight > 0))
        lowest = std::min(lowest, q.vt);
    if (lowest != std::numeric_limits<double>::infinity() && lowest > gvt_) gvt_ = lowest;
  }

  std::vector<std::string> candidates() const {
    std::vector<std::string> out;
    for (const auto& [name, q] : queues_)
      if (q.state == Active && !q.items.empty() && q.vt - gvt_ <= in_.T) out.push_back(name);
    return out;
  }

  const Instance& in_;
  std::map<std::string, Q> queues_;
  double gvt_ = 0;
  int outstanding_ = 0;
};

// Start-time fair queueing on one server. Each flow's next request carries a
// start tag; a flow that was idle rejoins at the system virtual time, the
// smallest start tag among flows with work. The server takes the smallest
// start tag and the tag advances by the flow's mean observed service time
// over its weight. Ties, which SFQ leaves open, go to the longer backlog and
// then the name.
class SfqReference {
 public:
  explicit SfqReference(const Instance& in) : weights_(in.weights) {}

  void enqueue(std::uint64_t id, const std::string& fn, double) {
    Flow& f = flows_[fn];
    if (f.queue.empty() && !f.busy) f.tag = std::max(f.tag, system_vt());
    f.queue.push_back(id);
  }

  std::optional<std::pair<std::uint64_t, std::string>> dispatch(double) {
    if (busy_) return std::nullopt;
    system_vt();
    const std::string* best = nullptr;
    for (const auto& [name, f] : flows_) {
      if (f.queue.empty()) continue;
      if (!best) {
        best = &name;
        continue;
      }
      const Flow& b = flows_.at(*best);
      if (f.tag < b.tag || (f.tag == b.tag && f.queue.size() > b.queue.size())) best = &name;
    }
    if (!best) return std::nullopt;
    Flow& f = flows_[*best];
    std::uint64_t id = f.queue.front();
    f.queue.erase(f.queue.begin());
    f.tag += (f.served ? f.service / f.served : 0.0) / weight(*best);
    f.busy = true;
    busy_ = true;
    system_vt();
    return std::pair{id, *best};
  }

  void complete(std::uint64_t, const std::string& fn, double exec, double) {
    Flow& f = flows_[fn];
    f.busy = false;
    f.service += exec;
    f.served += 1;
    busy_ = false;
  }

 private:
  struct Flow {
    double tag = 0;
    std::vector<std::uint64_t> queue;
    bool busy = false;
    double service = 0;
    int served = 0;
  };

  double weight(const std::string& fn) const {
    auto it = weights_.find(fn);
    return it == weights_.end() ? 1.0 : it->second;
  }

  // Smallest start tag among flows with work, held when all are idle and
  // never decreasing.
  double system_vt() {
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& [name, f] : flows_)
      if (!f.queue.empty() || f.busy) lowest = std::min(lowest, f.tag);
    if (lowest != std::numeric_limits<double>::infinity()) vt_ = std::max(vt_, lowest);
    return vt_;
  }

  std::map<std::string, double> weights_;
  std::map<std::string, Flow> flows_;
  double vt_ = 0;
  bool busy_ = false;
};

}  // namespace gpufairq::oracle
