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

#include "gpufairq/device.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "gpufairq/error.hpp"

namespace gpufairq {

namespace {
constexpr double kMemSlack = 1e-9;
constexpr double kUtilSlack = 1e-12;
}  // namespace

void DeviceConfig::validate() const {
  if (count < 1) throw ValidationError("device.count must be >= 1");
  if (!(mem_capacity_mb > 0)) throw ValidationError("device.mem_mb must be > 0");
  if (d_max < 1) throw ValidationError("device.d_max must be >= 1");
  if (!(util_threshold > 0 && util_threshold <= 1))
    throw ValidationError("device.util_threshold must be in (0,1]");
  if (!(pcie_mb_per_s > 0)) throw ValidationError("device.pcie_mb_per_s must be > 0");
  if (!(interference_beta >= 0)) throw ValidationError("device.interference_beta must be >= 0");
  if (!(monitor_period_s > 0)) throw ValidationError("device.monitor_period_s must be > 0");
  if (!(util_window_s > 0)) throw ValidationError("device.util_window_s must be > 0");
  if (pool_max_containers < 1) throw ValidationError("device.pool_max_containers must be >= 1");
  if (!(prefetch_overlap_s >= 0)) throw ValidationError("device.prefetch_overlap_s must be >= 0");
}

Device::Device(int index, DeviceConfig cfg)
    : index_(index), cfg_(std::move(cfg)), effective_d_(cfg_.d_max) {
  cfg_.validate();
}

ContainerEntry* Device::find(std::uint64_t id) {
  for (auto& c : containers_)
    if (c.id == id) return &c;
  return nullptr;
}

ContainerEntry* Device::idle_container(const std::string& function, Thermal thermal) {
  ContainerEntry* best = nullptr;
  for (auto& c : containers_) {
    if (c.busy || c.function != function || c.thermal != thermal) continue;
    if (!best || c.last_used_s > best->last_used_s) best = &c;
  }
  return best;
}

std::optional<Thermal> Device::idle_thermal(const std::string& function) const {
  std::optional<Thermal> best;
  for (const auto& c : containers_) {
    if (c.busy || c.function != function) continue;
    if (c.thermal == Thermal::GpuWarm) return Thermal::GpuWarm;
    best = Thermal::HostWarm;
  }
  return best;
}

double Device::idle_resident_mb() const {
  double sum = 0.0;
  for (const auto& c : containers_)
    if (!c.busy && c.thermal == Thermal::GpuWarm) sum += c.mem_mb;
  return sum;
}

void Device::evict_lru_until(double need_mb, double now) {
  while (cfg_.mem_capacity_mb - resident_mb_ + kMemSlack < need_mb) {
    ContainerEntry* victim = nullptr;
    for (auto& c : containers_) {
      if (c.busy || c.thermal != Thermal::GpuWarm) continue;
      if (!victim || c.last_used_s < victim->last_used_s ||
          (c.last_used_s == victim->last_used_s && c.id < victim->id))
        victim = &c;
    }
    if (!victim) throw std::logic_error("memory admission ran out of idle containers");
    victim->thermal = Thermal::HostWarm;
    resident_mb_ -= victim->mem_mb;
    evictions_.push_back(
        Eviction{now, victim->id, victim->function, victim->last_used_s, EvictionReason::Lru});
  }
}

void Device::erase_container(std::uint64_t id) {
  auto it = std::find_if(containers_.begin(), containers_.end(),
                         [id](const ContainerEntry& c) { return c.id == id; });
  if (it == containers_.end()) return;
  if (it->thermal == Thermal::GpuWarm) resident_mb_ -= it->mem_mb;
  containers_.erase(it);
}

void Device::destroy_lru_idle(double now) {
  const ContainerEntry* victim = nullptr;
  for (const auto& c : containers_) {
    if (c.busy) continue;
    if (!victim || c.last_used_s < victim->last_used_s ||
        (c.last_used_s == victim->last_used_s && c.id < victim->id))
      victim = &c;
  }
  if (!victim) throw std::logic_error("container pool has no idle container to destroy");
  evictions_.push_back(
      Eviction{now, victim->id, victim->function, victim->last_used_s, EvictionReason::PoolLimit});
  erase_container(victim->id);
}

std::optional<std::vector<Eviction>> Device::admit_memory(const FunctionProfile& f, double now) {
  if (f.mem_mb > cfg_.mem_capacity_mb)
    throw ValidationError("function '" + f.name + "' needs " + std::to_string(f.mem_mb) +
                          " MB, more than the device holds");
  if (idle_container(f.name, Thermal::GpuWarm)) return std::vector<Eviction>{};
  double free_mb = cfg_.mem_capacity_mb - resident_mb_;
  if (free_mb + idle_resident_mb() + kMemSlack < f.mem_mb) return std::nullopt;
  std::size_t before = evictions_.size();
  evict_lru_until(f.mem_mb, now);
  return std::vector<Eviction>(evictions_.begin() + static_cast<std::ptrdiff_t>(before),
                               evictions_.end());
}

std::optional<DToken> Device::try_acquire_token(const FunctionProfile& f, double now) {
  if (outstanding_ >= effective_d_) return std::nullopt;
  if (outstanding_ > 0 &&
      util_avg_ + 1.0 / static_cast<double>(cfg_.d_max) > cfg_.util_threshold + kUtilSlack)
    return std::nullopt;
  if (f.mem_mb > cfg_.mem_capacity_mb)
    throw ValidationError("function '" + f.name + "' does not fit in device memory");

  DToken token{index_, 0, 0, f.name, StartState::Cold};
  ContainerEntry* warm = cfg_.pool_enabled ? idle_container(f.name, Thermal::GpuWarm) : nullptr;
  ContainerEntry* host =
      (cfg_.pool_enabled && !warm) ? idle_container(f.name, Thermal::HostWarm) : nullptr;

  if (warm) {
    warm->busy = true;
    token.container = warm->id;
    token.start_state = StartState::GpuWarm;
  } else if (host) {
    std::uint64_t id = host->id;
    if (!admit_memory(f, now)) return std::nullopt;
    ContainerEntry* c = find(id);
    c->thermal = Thermal::GpuWarm;
    c->busy = true;
    resident_mb_ += c->mem_mb;
    token.container = id;
    token.start_state = StartState::HostWarm;
  } else {
    bool need_slot =
        cfg_.pool_enabled &&
        containers_.size() >= static_cast<std::size_t>(cfg_.pool_max_containers);
    bool any_idle = std::any_of(containers_.begin(), containers_.end(),
                                [](const ContainerEntry& c) { return !c.busy; });
    if (need_slot && !any_idle) return std::nullopt;
    double free_mb = cfg_.mem_capacity_mb - resident_mb_;
    if (free_mb + idle_resident_mb() + kMemSlack < f.mem_mb) return std::nullopt;
    if (need_slot) destroy_lru_idle(now);
    evict_lru_until(f.mem_mb, now);
    ContainerEntry c{next_container_++, f.name, Thermal::GpuWarm, f.mem_mb, now, true};
    resident_mb_ += c.mem_mb;
    token.container = c.id;
    token.start_state = StartState::Cold;
    containers_.push_back(std::move(c));
  }
  token.id = next_token_++;
  ++outstanding_;
  return token;
}

StartResult Device::start_invocation(const DToken& token, const FunctionProfile& f, double now) {
  advance_util(now);
  const double concurrent = static_cast<double>(std::max(outstanding_, 1));
  const double slowdown = 1.0 + cfg_.interference_beta * (concurrent - 1.0);
  double base = f.warm_exec_s;
  switch (token.start_state) {
    case StartState::GpuWarm: break;
    case StartState::HostWarm:
      base += std::max(0.0, f.mem_mb / cfg_.pcie_mb_per_s - cfg_.prefetch_overlap_s);
      break;
    case StartState::Cold: base = f.cold_exec_s; break;
  }
  running_.push_back(Running{token.id, f.compute_share});
  return StartResult{base * slowdown, f.warm_exec_s * slowdown, token.start_state};
}

void Device::release(const DToken& token, double now) {
  advance_util(now);
  auto it = std::find_if(running_.begin(), running_.end(),
                         [&](const Running& r) { return r.token == token.id; });
  if (it != running_.end()) running_.erase(it);
  ContainerEntry* c = find(token.container);
  if (!c || !c->busy) throw std::logic_error("release of a token without a busy container");
  c->busy = false;
  c->last_used_s = now;
  --outstanding_;
  if (!cfg_.pool_enabled) {
    erase_container(token.container);
  } else if (marked_.count(c->function) && c->thermal == Thermal::GpuWarm) {
    c->thermal = Thermal::HostWarm;
    resident_mb_ -= c->mem_mb;
    evictions_.push_back(Eviction{now, c->id, c->function, c->last_used_s, EvictionReason::QueueIdle});
  }
}

double Device::instantaneous_util() const {
  double sum = 0.0;
  for (const auto& r : running_) sum += r.share;
  return std::min(1.0, sum);
}

void Device::advance_util(double now) {
  if (now > util_since_) {
    util_integral_ += instantaneous_util() * (now - util_since_);
    util_since_ = now;
  }
}

double Device::util_integral(double now) const {
  double extra = now > util_since_ ? instantaneous_util() * (now - util_since_) : 0.0;
  return util_integral_ + extra;
}

int Device::monitor_tick(double now) {
  samples_.emplace_back(now, instantaneous_util());
  while (!samples_.empty() && samples_.front().first <= now - cfg_.util_window_s)
    samples_.pop_front();
  double sum = 0.0;
  for (const auto& s : samples_) sum += s.second;
  util_avg_ = samples_.empty() ? 0.0 : sum / static_cast<double>(samples_.size());

  if (!cfg_.dynamic_d) {
    effective_d_ = cfg_.d_max;
  } else if (util_avg_ > cfg_.util_threshold) {
    effective_d_ = std::max(1, effective_d_ - 1);
  } else if (util_avg_ < cfg_.util_threshold - 1.0 / static_cast<double>(cfg_.d_max)) {
    effective_d_ = std::min(cfg_.d_max, effective_d_ + 1);
  }
  return effective_d_;
}

void Device::swap_out(const std::string& function, double now) {
  marked_.insert(function);
  for (auto& c : containers_) {
    if (c.busy || c.function != function || c.thermal != Thermal::GpuWarm) continue;
    c.thermal = Thermal::HostWarm;
    resident_mb_ -= c.mem_mb;
    evictions_.push_back(Eviction{now, c.id, c.function, c.last_used_s, EvictionReason::QueueIdle});
  }
}

// DeviceSet

DeviceSet::DeviceSet(DeviceConfig cfg, const std::vector<FunctionProfile>& profiles) {
  cfg.validate();
  for (int i = 0; i < cfg.count; ++i) devices_.emplace_back(i, cfg);
  for (const auto& p : profiles) {
    p.validate();
    if (p.mem_mb > cfg.mem_capacity_mb)
      throw ValidationError("profile '" + p.name + "' needs more memory than a device has");
    profiles_.emplace(p.name, p);
  }
}

const FunctionProfile& DeviceSet::profile(const std::string& function) const {
  auto it = profiles_.find(function);
  if (it == profiles_.end()) throw ValidationError("no profile for function '" + function + "'");
  return it->second;
}

std::vector<int> DeviceSet::placement_order(const std::string& function) const {
  std::vector<int> warm, host, rest;
  for (const auto& d : devices_) {
    auto t = d.idle_thermal(function);
    if (t == Thermal::GpuWarm)
      warm.push_back(d.index());
    else if (t == Thermal::HostWarm)
      host.push_back(d.index());
    else
      rest.push_back(d.index());
  }
  std::stable_sort(rest.begin(), rest.end(), [this](int a, int b) {
    return devices_[static_cast<std::size_t>(a)].outstanding() <
           devices_[static_cast<std::size_t>(b)].outstanding();
  });
  warm.insert(warm.end(), host.begin(), host.end());
  warm.insert(warm.end(), rest.begin(), rest.end());
  return warm;
}

std::optional<Grant> DeviceSet::acquire(const std::string& function, double now) {
  const FunctionProfile& f = profile(function);
  for (int i : placement_order(function)) {
    auto token = devices_[static_cast<std::size_t>(i)].try_acquire_token(f, now);
    if (!token) continue;
    Grant g{i, token->id, token->start_state};
    tokens_.emplace(std::pair{i, token->id}, std::move(*token));
    return g;
  }
  return std::nullopt;
}

int DeviceSet::concurrency_limit() const {
  int sum = 0;
  for (const auto& d : devices_) sum += d.effective_d();
  return sum;
}

void DeviceSet::on_queue_idle(const std::string& function, double now) {
  for (auto& d : devices_) d.swap_out(function, now);
}

void DeviceSet::on_queue_active(const std::string& function, double) {
  for (auto& d : devices_) d.unmark(function);
}

StartResult DeviceSet::start(const Grant& grant, const std::string& function, double now) {
  auto it = tokens_.find(std::pair{grant.device, grant.token});
  if (it == tokens_.end()) throw std::logic_error("start with an unknown token");
  return devices_[static_cast<std::size_t>(grant.device)].start_invocation(it->second,
                                                                           profile(function), now);
}

void DeviceSet::release(int device, std::uint64_t token, double now) {
  auto it = tokens_.find(std::pair{device, token});
  if (it == tokens_.end()) throw std::logic_error("token released twice or never granted");
  devices_[static_cast<std::size_t>(device)].release(it->second, now);
  tokens_.erase(it);
}

int DeviceSet::total_outstanding() const {
  int sum = 0;
  for (const auto& d : devices_) sum += d.outstanding();
  return sum;
}

}  // namespace gpufairq
