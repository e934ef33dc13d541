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

// Capacity model of one or more GPUs: device memory with an LRU container
// pool, concurrency tokens, an execution-time model with interference, a
// utilization monitor driving dynamic concurrency, and sticky placement.

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gpufairq/model.hpp"
#include "gpufairq/policy.hpp"

namespace gpufairq {

struct DeviceConfig {
  int count = 1;
  double mem_capacity_mb = 16384.0;
  int d_max = 2;
  double util_threshold = 0.90;
  double pcie_mb_per_s = 12000.0;
  double interference_beta = 0.10;
  double monitor_period_s = 0.2;
  double util_window_s = 1.0;
  int pool_max_containers = 32;
  bool pool_enabled = true;
  bool dynamic_d = false;
  // Portion of the host-to-device transfer hidden behind dispatch work.
  double prefetch_overlap_s = 0.0;

  void validate() const;
};

enum class Thermal { GpuWarm, HostWarm };

struct ContainerEntry {
  std::uint64_t id = 0;
  std::string function;
  Thermal thermal = Thermal::GpuWarm;
  double mem_mb = 0.0;
  double last_used_s = 0.0;
  bool busy = false;
};

struct DToken {
  int device = 0;
  std::uint64_t id = 0;
  std::uint64_t container = 0;
  std::string function;
  StartState start_state = StartState::Cold;
};

enum class EvictionReason { Lru, QueueIdle, PoolLimit };

struct Eviction {
  double time = 0.0;
  std::uint64_t container = 0;
  std::string function;
  double last_used_s = 0.0;
  EvictionReason reason = EvictionReason::Lru;
};

struct StartResult {
  double duration_s = 0.0;
  // Execution component alone (no container init or data transfer).
  double pure_exec_s = 0.0;
  StartState start_state = StartState::Cold;
};

class Device {
 public:
  Device(int index, DeviceConfig cfg);

  int index() const noexcept { return index_; }
  const DeviceConfig& config() const noexcept { return cfg_; }

  // Grants a token iff a concurrency slot is free, the utilization headroom
  // allows one more invocation (checked only while something is running) and
  // the function's container fits in memory after LRU swap-outs.
  std::optional<DToken> try_acquire_token(const FunctionProfile& f, double now);

  // Makes room for f's memory by swapping idle device-resident containers to
  // host in least-recently-used order. No-op if f already has an idle
  // device-resident container. nullopt when f cannot fit even after swapping
  // every idle container; nothing is changed in that case.
  std::optional<std::vector<Eviction>> admit_memory(const FunctionProfile& f, double now);

  // Computes the duration of the invocation holding token and records it as
  // running. The container is device-resident from here on.
  StartResult start_invocation(const DToken& token, const FunctionProfile& f, double now);

  // Returns the token; the container stays warm with last_used_s = now
  // (destroyed instead when the pool is disabled).
  void release(const DToken& token, double now);

  // Samples utilization, updates its moving average and, if enabled, steps
  // the effective concurrency. Returns the effective concurrency.
  int monitor_tick(double now);

  // Marks function's containers for eviction and swaps every idle
  // device-resident one to host memory. Containers of a marked function that
  // finish later are swapped out on release.
  void swap_out(const std::string& function, double now);
  void unmark(const std::string& function) { marked_.erase(function); }
  bool marked(const std::string& function) const { return marked_.count(function) > 0; }

  int outstanding() const noexcept { return outstanding_; }
  int effective_d() const noexcept { return effective_d_; }
  double resident_mb() const noexcept { return resident_mb_; }
  double util_average() const noexcept { return util_avg_; }
  double instantaneous_util() const;
  // Time integral of instantaneous utilization up to `now`.
  double util_integral(double now) const;
  const std::vector<ContainerEntry>& containers() const noexcept { return containers_; }
  const std::vector<Eviction>& evictions() const noexcept { return evictions_; }

  // Best idle thermal state available for function, if any container exists.
  std::optional<Thermal> idle_thermal(const std::string& function) const;

  // Test hook: seed the moving average directly.
  void set_util_average(double avg) { util_avg_ = avg; }

 private:
  struct Running {
    std::uint64_t token;
    double share;
  };

  ContainerEntry* find(std::uint64_t id);
  ContainerEntry* idle_container(const std::string& function, Thermal thermal);
  double idle_resident_mb() const;
  void evict_lru_until(double need_mb, double now);
  void destroy_lru_idle(double now);
  void erase_container(std::uint64_t id);
  void advance_util(double now);

  int index_;
  DeviceConfig cfg_;
  std::vector<ContainerEntry> containers_;
  std::vector<Eviction> evictions_;
  std::vector<Running> running_;
  std::set<std::string> marked_;
  std::deque<std::pair<double, double>> samples_;
  std::uint64_t next_container_ = 1;
  std::uint64_t next_token_ = 1;
  int outstanding_ = 0;
  int effective_d_;
  double resident_mb_ = 0.0;
  double util_avg_ = 0.0;
  double util_integral_ = 0.0;
  double util_since_ = 0.0;
};

// The devices of one server behind a single dispatcher, with sticky
// placement: an idle device-resident container wins, then a host-resident
// one, then the least loaded device (lowest index on ties).
class DeviceSet final : public TokenSource {
 public:
  DeviceSet(DeviceConfig cfg, const std::vector<FunctionProfile>& profiles);

  std::optional<Grant> acquire(const std::string& function, double now) override;
  int concurrency_limit() const override;
  void on_queue_idle(const std::string& function, double now) override;
  void on_queue_active(const std::string& function, double now) override;

  // Order in which devices are tried for function.
  std::vector<int> placement_order(const std::string& function) const;

  StartResult start(const Grant& grant, const std::string& function, double now);
  void release(int device, std::uint64_t token, double now);

  Device& device(int i) { return devices_.at(static_cast<std::size_t>(i)); }
  const Device& device(int i) const { return devices_.at(static_cast<std::size_t>(i)); }
  int size() const noexcept { return static_cast<int>(devices_.size()); }
  const FunctionProfile& profile(const std::string& function) const;
  int total_outstanding() const;

 private:
  std::vector<Device> devices_;
  std::map<std::string, FunctionProfile> profiles_;
  std::map<std::pair<int, std::uint64_t>, DToken> tokens_;
};

}  // namespace gpufairq
