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

#include "gpufairq/gpufairq.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <ios>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "gpufairq/error.hpp"
#include "gpufairq/experiment.hpp"
#include "gpufairq/mqfq.hpp"
#include "gpufairq/workload.hpp"

struct gfq_config {
  gpufairq::ExperimentConfig cfg;
};

struct gfq_result {
  gpufairq::ExperimentResult res;
  std::string policy;
};

namespace {

// Fixed pool of d_max slots standing in for a device.
class SlotTokens final : public gpufairq::TokenSource {
 public:
  explicit SlotTokens(int slots) : slots_(slots) {}
  std::optional<gpufairq::Grant> acquire(const std::string&, double) override {
    if (used_ >= slots_) return std::nullopt;
    ++used_;
    return gpufairq::Grant{0, next_++, gpufairq::StartState::GpuWarm};
  }
  int concurrency_limit() const override { return slots_; }
  void release() { --used_; }

 private:
  int slots_;
  int used_ = 0;
  std::uint64_t next_ = 1;
};

}  // namespace

struct gfq_scheduler {
  gfq_scheduler(gpufairq::SchedulerConfig c) : sched(c), tokens(c.d_max) {}
  gpufairq::MqfqScheduler sched;
  SlotTokens tokens;
  std::map<std::uint64_t, gpufairq::Invocation> running;
  std::uint64_t next_id = 1;
};

namespace {

thread_local std::string g_last_error;

gfq_status fail(gfq_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
gfq_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const gpufairq::LoadError& e) {
    // A bad key inside a config file is still a key error, with file context.
    std::string msg = e.what();
    if (msg.find(": unknown config key") != std::string::npos)
      return fail(GFQ_ERR_UNKNOWN_KEY, msg);
    return fail(GFQ_ERR_IO, msg);
  } catch (const gpufairq::ValidationError& e) {
    std::string msg = e.what();
    if (msg.rfind("unknown config key", 0) == 0) return fail(GFQ_ERR_UNKNOWN_KEY, msg);
    return fail(GFQ_ERR_INVALID, msg);
  } catch (const std::bad_alloc&) {
    return fail(GFQ_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(GFQ_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GFQ_ERR_INTERNAL, "unknown error");
  }
}

gfq_status copy_out(const std::string& s, char* buf, size_t len, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return needed ? GFQ_OK : fail(GFQ_ERR_NULL_ARG, "buf is NULL");
  if (len < s.size() + 1) return fail(GFQ_ERR_BUFFER, "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return GFQ_OK;
}

#define GFQ_REQUIRE(p) \
  if (!(p)) return fail(GFQ_ERR_NULL_ARG, #p " is NULL")

}  // namespace

extern "C" {

const char* gfq_version(void) { return "0.1.0"; }

const char* gfq_last_error(void) { return g_last_error.c_str(); }

const char* gfq_status_string(gfq_status s) {
  switch (s) {
    case GFQ_OK: return "ok";
    case GFQ_ERR_NULL_ARG: return "null argument";
    case GFQ_ERR_INVALID: return "invalid value";
    case GFQ_ERR_IO: return "input/output error";
    case GFQ_ERR_UNKNOWN_KEY: return "unknown key";
    case GFQ_ERR_BUFFER: return "buffer too small";
    case GFQ_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

gfq_status gfq_config_new(gfq_config** out) {
  GFQ_REQUIRE(out);
  return guarded([&] {
    *out = new gfq_config{};
    return GFQ_OK;
  });
}

gfq_status gfq_config_load(const char* path, gfq_config** out) {
  GFQ_REQUIRE(path);
  GFQ_REQUIRE(out);
  return guarded([&] {
    auto c = std::make_unique<gfq_config>();
    c->cfg = gpufairq::load_config(path);
    *out = c.release();
    return GFQ_OK;
  });
}

gfq_status gfq_config_clone(const gfq_config* cfg, gfq_config** out) {
  GFQ_REQUIRE(cfg);
  GFQ_REQUIRE(out);
  return guarded([&] {
    *out = new gfq_config{*cfg};
    return GFQ_OK;
  });
}

gfq_status gfq_config_set(gfq_config* cfg, const char* key, const char* value) {
  GFQ_REQUIRE(cfg);
  GFQ_REQUIRE(key);
  GFQ_REQUIRE(value);
  return guarded([&] {
    cfg->cfg.set(key, value);
    return GFQ_OK;
  });
}

gfq_status gfq_config_get(const gfq_config* cfg, const char* key, char* buf, size_t len,
                          size_t* needed) {
  GFQ_REQUIRE(cfg);
  GFQ_REQUIRE(key);
  return guarded([&] { return copy_out(cfg->cfg.get(key), buf, len, needed); });
}

gfq_status gfq_config_validate(const gfq_config* cfg) {
  GFQ_REQUIRE(cfg);
  return guarded([&] {
    cfg->cfg.validate();
    return GFQ_OK;
  });
}

gfq_status gfq_config_materialize_trace(gfq_config* cfg, const char* path) {
  GFQ_REQUIRE(cfg);
  GFQ_REQUIRE(path);
  return guarded([&] {
    auto& c = cfg->cfg;
    if (!c.workload.trace_path.empty()) return GFQ_OK;
    auto w = gpufairq::prepare_workload(c);
    // The scale is folded into the written arrivals.
    gpufairq::write_trace_file(path, w.trace);
    std::size_t n = w.profiles.size();
    std::size_t base = c.workload.profiles_path.empty()
                           ? gpufairq::default_profiles().size()
                           : gpufairq::load_profiles(c.workload.profiles_path).size();
    c.workload.trace_path = path;
    c.workload.scale = 1.0;
    c.workload.copies = n > base ? (n + base - 1) / base : 0;
    c.generator_keys_set.clear();
    return GFQ_OK;
  });
}

void gfq_config_free(gfq_config* cfg) { delete cfg; }

size_t gfq_config_key_count(void) { return gpufairq::config_keys().size(); }

const char* gfq_config_key_name(size_t i) {
  const auto& k = gpufairq::config_keys();
  return i < k.size() ? k[i].name : nullptr;
}

const char* gfq_config_key_help(size_t i) {
  const auto& k = gpufairq::config_keys();
  return i < k.size() ? k[i].help : nullptr;
}

gfq_status gfq_run(const gfq_config* cfg, gfq_result** out) {
  GFQ_REQUIRE(cfg);
  GFQ_REQUIRE(out);
  return guarded([&] {
    auto r = std::make_unique<gfq_result>();
    r->res = gpufairq::run_experiment(cfg->cfg);
    r->policy = r->res.summary.policy;
    *out = r.release();
    return GFQ_OK;
  });
}

gfq_status gfq_result_summary(const gfq_result* r, gfq_summary* out) {
  GFQ_REQUIRE(r);
  GFQ_REQUIRE(out);
  const auto& s = r->res.summary;
  *out = gfq_summary{};
  out->invocations = s.invocations;
  out->weighted_avg_latency_s = s.weighted_avg_latency_s;
  out->p50_latency_s = s.p50_latency_s;
  out->p99_latency_s = s.p99_latency_s;
  out->cold_hit_pct = s.cold_hit_pct;
  out->mean_util = s.mean_util;
  out->makespan_s = r->res.sim.makespan_s;
  out->windows_compared = s.windows_compared;
  out->bound_violations = s.violations;
  out->bound_violations_conservative = s.violations_conservative;
  out->max_gap_worst_window = s.max_gap_worst_window;
  return GFQ_OK;
}

const char* gfq_result_policy(const gfq_result* r) { return r ? r->policy.c_str() : nullptr; }

gfq_status gfq_result_export(const gfq_result* r, const char* out_dir) {
  GFQ_REQUIRE(r);
  GFQ_REQUIRE(out_dir);
  return guarded([&] {
    try {
      gpufairq::export_results(r->res.sim.records, r->res.windows, r->res.summary, out_dir);
    } catch (const std::filesystem::filesystem_error& e) {
      return fail(GFQ_ERR_IO, e.what());
    } catch (const std::ios_base::failure& e) {
      return fail(GFQ_ERR_IO, e.what());
    }
    return GFQ_OK;
  });
}

void gfq_result_free(gfq_result* r) { delete r; }

gfq_status gfq_generate_trace(uint32_t n_functions, double zipf_s, double rate_rps,
                              double duration_s, uint64_t seed, const char* profiles_path,
                              const char* out_path) {
  GFQ_REQUIRE(out_path);
  return guarded([&] {
    gpufairq::ExperimentConfig c;
    if (profiles_path) c.set("workload.profiles_path", profiles_path);
    c.set("workload.n_functions", std::to_string(n_functions));
    c.workload.zipf_s = zipf_s;
    c.workload.rate_rps = rate_rps;
    c.workload.duration_s = duration_s;
    c.seed = seed;
    gpufairq::write_trace_file(out_path, gpufairq::prepare_workload(c).trace);
    return GFQ_OK;
  });
}

gfq_status gfq_fairness_bound(int D, double T, double tau_i, double tau_j, double w_i,
                              double w_j, double* out) {
  GFQ_REQUIRE(out);
  return guarded([&] {
    *out = gpufairq::fairness_bound(D, T, tau_i, tau_j, w_i, w_j);
    return GFQ_OK;
  });
}

gfq_status gfq_scheduler_new(double T, int d_max, double alpha, double default_ttl_s,
                             gfq_scheduler** out) {
  GFQ_REQUIRE(out);
  return guarded([&] {
    gpufairq::SchedulerConfig c;
    c.T = T;
    c.d_max = d_max;
    c.alpha = alpha;
    c.default_ttl_s = default_ttl_s;
    c.validate();
    *out = new gfq_scheduler(c);
    return GFQ_OK;
  });
}

gfq_status gfq_scheduler_set_weight(gfq_scheduler* s, const char* function, double w) {
  GFQ_REQUIRE(s);
  GFQ_REQUIRE(function);
  return guarded([&] {
    s->sched.set_weight(function, w);
    return GFQ_OK;
  });
}

gfq_status gfq_scheduler_enqueue(gfq_scheduler* s, const char* function, double now,
                                 uint64_t* id_out) {
  GFQ_REQUIRE(s);
  GFQ_REQUIRE(function);
  return guarded([&] {
    if (!*function) throw gpufairq::ValidationError("function name is empty");
    gpufairq::Invocation inv;
    inv.id = s->next_id++;
    inv.function = function;
    inv.arrival_s = now;
    s->sched.enqueue(std::move(inv), now);
    if (id_out) *id_out = s->next_id - 1;
    return GFQ_OK;
  });
}

gfq_status gfq_scheduler_dispatch(gfq_scheduler* s, double now, int* dispatched,
                                  uint64_t* id_out, char* fn_buf, size_t fn_len) {
  GFQ_REQUIRE(s);
  GFQ_REQUIRE(dispatched);
  return guarded([&] {
    *dispatched = 0;
    auto d = s->sched.dispatch(s->tokens, now);
    if (!d) return GFQ_OK;
    *dispatched = 1;
    if (id_out) *id_out = d->invocation.id;
    std::string fn = d->invocation.function;
    s->running.emplace(d->invocation.id, std::move(d->invocation));
    if (fn_buf) return copy_out(fn, fn_buf, fn_len, nullptr);
    return GFQ_OK;
  });
}

gfq_status gfq_scheduler_complete(gfq_scheduler* s, uint64_t id, double exec_s, double now) {
  GFQ_REQUIRE(s);
  return guarded([&] {
    auto it = s->running.find(id);
    if (it == s->running.end())
      throw gpufairq::ValidationError("invocation " + std::to_string(id) + " is not running");
    s->sched.on_completion(it->second, exec_s, now);
    s->running.erase(it);
    s->tokens.release();
    return GFQ_OK;
  });
}

gfq_status gfq_scheduler_global_vt(const gfq_scheduler* s, double* out) {
  GFQ_REQUIRE(s);
  GFQ_REQUIRE(out);
  *out = s->sched.state().global_vt;
  return GFQ_OK;
}

gfq_status gfq_scheduler_queue_vt(const gfq_scheduler* s, const char* function, double* out) {
  GFQ_REQUIRE(s);
  GFQ_REQUIRE(function);
  GFQ_REQUIRE(out);
  auto it = s->sched.state().queues.find(function);
  if (it == s->sched.state().queues.end())
    return fail(GFQ_ERR_INVALID, std::string("no queue for function '") + function + "'");
  *out = it->second.vt;
  return GFQ_OK;
}

void gfq_scheduler_free(gfq_scheduler* s) { delete s; }

}  // extern "C"
