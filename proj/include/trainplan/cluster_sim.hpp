// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic trace-driven simulator of synchronous data-parallel training
// steps. Each step replays one batch: optionally rebalance it, charge every
// rank group the runtime of its samples, wait for the slowest group, pay the
// planner latency that could not be overlapped, then the gradient all-reduce.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "trainplan/balance.hpp"
#include "trainplan/digest.hpp"
#include "trainplan/error.hpp"
#include "trainplan/runtime_model.hpp"
#include "trainplan/train_state.hpp"

namespace trainplan {

enum class BalancingMode { kNone, kSeqlen, kFlops, kRuntime };

inline constexpr std::array<BalancingMode, 4> kAllModes = {
    BalancingMode::kNone, BalancingMode::kSeqlen, BalancingMode::kFlops,
    BalancingMode::kRuntime};

constexpr std::string_view to_string(BalancingMode mode) {
  switch (mode) {
    case BalancingMode::kNone: return "none";
    case BalancingMode::kSeqlen: return "seqlen";
    case BalancingMode::kFlops: return "flops";
    case BalancingMode::kRuntime: return "runtime";
  }
  return "none";
}

inline BalancingMode parse_mode(std::string_view text) {
  for (auto m : kAllModes) {
    if (to_string(m) == text) return m;
  }
  fail(ErrorCode::kInvalidConfig, "unknown balancing mode '" + std::string(text) + "'");
}

struct PlannerLatency {
  double fixed_ms = 0.0;
  double per_sample_ms = 0.0;

  double for_batch(std::size_t samples) const {
    return fixed_ms + per_sample_ms * static_cast<double>(samples);
  }
  friend bool operator==(const PlannerLatency&, const PlannerLatency&) = default;
};

struct NoiseConfig {
  bool enabled = false;
  std::uint64_t seed = 0;
  double amplitude = 0.0;  // relative, in [0, 0.5]
  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct ClusterConfig {
  int num_ranks = 1;
  BalancingMode balancing_mode = BalancingMode::kRuntime;
  bool async_planning = false;
  PlannerLatency planner_latency;
  int cp_size = 1;
  double all2all_ms_per_token = 0.0;
  double allreduce_ms = 0.0;
  FlopsCoeffs flops_coeffs;
  double peak_flops_per_rank_ms = 1.0;  // flops per millisecond
  NoiseConfig noise;

  void validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorCode::kInvalidConfig, msg); };
    if (num_ranks < 1) bad("num_ranks must be >= 1");
    if (cp_size < 1 || num_ranks % cp_size != 0) bad("cp_size must be >= 1 and divide num_ranks");
    if (!(noise.amplitude >= 0.0 && noise.amplitude <= 0.5)) {
      bad("noise amplitude must lie in [0, 0.5]");
    }
    if (!(planner_latency.fixed_ms >= 0.0) || !(planner_latency.per_sample_ms >= 0.0)) {
      bad("planner latency terms must be >= 0");
    }
    if (!(all2all_ms_per_token >= 0.0)) bad("all2all cost must be >= 0");
    if (!(allreduce_ms >= 0.0)) bad("allreduce_ms must be >= 0");
    if (!(peak_flops_per_rank_ms > 0.0)) bad("peak_flops_per_rank must be > 0");
    try {
      flops_coeffs.validate();
    } catch (const Error& e) {
      bad(e.what());
    }
  }
  friend bool operator==(const ClusterConfig&, const ClusterConfig&) = default;
};

struct TraceBatch {
  std::int64_t batch_id = 0;
  std::vector<SampleSpec> samples;
  friend bool operator==(const TraceBatch&, const TraceBatch&) = default;
};

struct BatchTrace {
  std::vector<TraceBatch> batches;

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.samples.size();
    return n;
  }
  friend bool operator==(const BatchTrace&, const BatchTrace&) = default;
};

struct StepRecord {
  std::int64_t batch_id = 0;
  double makespan_ms = 0.0;
  double idle_fraction = 0.0;
  double imbalance_ratio = 1.0;
  double planning_stall_ms = 0.0;
  std::size_t moves = 0;

  double cost_ms(double allreduce_ms) const {
    return makespan_ms + planning_stall_ms + allreduce_ms;
  }

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

// Filled in only by runs with failure injection.
struct RecoveryStats {
  std::size_t snapshots_taken = 0;
  std::size_t steps_executed = 0;
  std::size_t steps_redone = 0;
  std::size_t crashes = 0;
  double snapshot_ms = 0.0;
  double redo_ms = 0.0;
  std::vector<int> healthy_nodes;

  friend bool operator==(const RecoveryStats&, const RecoveryStats&) = default;
};

struct SimReport {
  BalancingMode mode = BalancingMode::kNone;
  std::vector<StepRecord> per_step;
  double wallclock_ms = 0.0;
  double mean_imbalance = 1.0;
  double throughput_samples_per_s = 0.0;
  double mfu_proxy = 0.0;
  std::uint64_t state_digest = 0;
  std::optional<RecoveryStats> recovery;

  friend bool operator==(const SimReport&, const SimReport&) = default;
};

inline void validate_trace(const BatchTrace& trace, const ClusterConfig& config) {
  if (trace.batches.empty()) fail(ErrorCode::kEmptyTrace, "trace has no batches");
  for (std::size_t k = 0; k < trace.batches.size(); ++k) {
    const auto& b = trace.batches[k];
    if (k > 0 && trace.batches[k - 1].batch_id >= b.batch_id) {
      fail(ErrorCode::kInvalidTrace, "batch ids must be strictly increasing");
    }
    std::unordered_set<SampleId> ids;
    for (const auto& s : b.samples) {
      std::ostringstream os;
      if (s.batch_id != b.batch_id) {
        os << "sample " << s.id << " carries batch id " << s.batch_id << " inside batch "
           << b.batch_id;
        fail(ErrorCode::kInvalidTrace, os.str());
      }
      if (s.origin_rank < 0 || s.origin_rank >= config.num_ranks) {
        os << "sample " << s.id << " originates on rank " << s.origin_rank
           << " but the cluster has " << config.num_ranks;
        fail(ErrorCode::kInvalidTrace, os.str());
      }
      if (s.seqlen < 1) fail(ErrorCode::kInvalidTrace, "sample seqlen must be >= 1");
      if (!ids.insert(s.id).second) {
        os << "sample id " << s.id << " repeats within batch " << b.batch_id;
        fail(ErrorCode::kInvalidTrace, os.str());
      }
    }
  }
}

/// Useful model FLOPs over peak FLOPs for the elapsed wallclock, in [0, 1].
inline double compute_mfu(const SimReport& report, const ClusterConfig& config,
                          const BatchTrace& trace) {
  double useful = 0.0;
  for (const auto& b : trace.batches) {
    for (const auto& s : b.samples) useful += estimate_flops(s.seqlen, config.flops_coeffs);
  }
  if (useful == 0.0) return 0.0;
  if (!(report.wallclock_ms > 0.0)) {
    fail(ErrorCode::kZeroWallclock, "MFU undefined for zero wallclock");
  }
  const double peak = static_cast<double>(config.num_ranks) * config.peak_flops_per_rank_ms *
                      report.wallclock_ms;
  return std::clamp(useful / peak, 0.0, 1.0);
}

/// Step-by-step driver. run_simulation() is the one-shot entry point; the
/// fault-tolerance harness drives the steps itself so it can rewind.
///
/// With context parallelism, ranks form num_ranks / cp_size groups; a sample
/// is processed by the group containing its rank, and balancing moves samples
/// between groups.
class Simulator {
 public:
  Simulator(ClusterConfig config, const BatchTrace& trace, const RuntimeTable& table)
      : config_(std::move(config)), trace_(trace), table_(table) {
    config_.validate();
    validate_trace(trace_, config_);
  }

  const ClusterConfig& config() const { return config_; }
  const BatchTrace& trace() const { return trace_; }
  std::size_t num_steps() const { return trace_.batches.size(); }
  int num_groups() const { return config_.num_ranks / config_.cp_size; }

  TrainState initial() const { return initial_state(config_.noise.seed); }

  /// Modeled runtime of one sample on its group, before noise.
  double modeled_runtime(const SampleSpec& s) const {
    const double cp = static_cast<double>(config_.cp_size);
    double t = estimate_runtime(table_, s.seqlen) / cp;
    if (config_.cp_size > 1) {
      t += config_.all2all_ms_per_token * static_cast<double>(s.seqlen) * (cp - 1.0) / cp;
    }
    return t;
  }

  double actual_runtime(const SampleSpec& s) const {
    double t = modeled_runtime(s);
    if (config_.noise.enabled && config_.noise.amplitude > 0.0) {
      const double u = unit_interval(mix(config_.noise.seed, s.id));
      t *= 1.0 + config_.noise.amplitude * (2.0 * u - 1.0);
    }
    return t;
  }

  double planner_latency(std::size_t batch_index) const {
    return config_.planner_latency.for_batch(trace_.batches.at(batch_index).samples.size());
  }

  /// Executes batch `index`. `previous_makespan` is the makespan of the step
  /// the planner could overlap with, or nullopt when the pipeline is cold.
  StepRecord run_step(std::size_t index, std::optional<double> previous_makespan) const {
    const auto& batch = trace_.batches.at(index);
    StepRecord rec;
    rec.batch_id = batch.batch_id;

    // Group-level view of the batch.
    std::vector<SampleSpec> grouped = batch.samples;
    for (auto& s : grouped) s.origin_rank /= config_.cp_size;
    const int groups = num_groups();

    std::vector<Rank> target(grouped.size());
    for (std::size_t i = 0; i < grouped.size(); ++i) target[i] = grouped[i].origin_rank;
    if (config_.balancing_mode != BalancingMode::kNone && !grouped.empty()) {
      const BalancePlan plan = plan_balance_by(grouped, groups, scorer());
      rec.moves = plan.exchange.moves.size();
      std::unordered_map<SampleId, Rank> moved;
      for (const auto& mv : plan.exchange.moves) moved.emplace(mv.sample_id, mv.to_rank);
      for (std::size_t i = 0; i < grouped.size(); ++i) {
        if (auto it = moved.find(grouped[i].id); it != moved.end()) target[i] = it->second;
      }
    }

    std::vector<std::size_t> by_id(grouped.size());
    for (std::size_t i = 0; i < by_id.size(); ++i) by_id[i] = i;
    std::sort(by_id.begin(), by_id.end(),
              [&](std::size_t a, std::size_t b) { return grouped[a].id < grouped[b].id; });
    std::vector<double> loads(static_cast<std::size_t>(groups), 0.0);
    for (std::size_t i : by_id) {
      loads[static_cast<std::size_t>(target[i])] += actual_runtime(grouped[i]);
    }
    double total = 0.0;
    for (double l : loads) total += l;
    const double mx = *std::max_element(loads.begin(), loads.end());
    const double mean = total / static_cast<double>(loads.size());
    rec.makespan_ms = mx;
    rec.idle_fraction = mx > 0.0 ? std::clamp(1.0 - mean / mx, 0.0, 1.0) : 0.0;
    rec.imbalance_ratio = total > 0.0 ? mx / mean : 1.0;

    if (config_.balancing_mode != BalancingMode::kNone) {
      const double latency = planner_latency(index);
      if (config_.async_planning && previous_makespan) {
        rec.planning_stall_ms = std::max(0.0, latency - *previous_makespan);
      } else {
        rec.planning_stall_ms = latency;
      }
    }
    return rec;
  }

  /// Logical state after training on batch `index` from `state`.
  TrainState advance(const TrainState& state, std::size_t index) const {
    const auto& batch = trace_.batches.at(index);
    std::vector<std::pair<SampleId, Tokens>> contents;
    contents.reserve(batch.samples.size());
    for (const auto& s : batch.samples) contents.emplace_back(s.id, s.seqlen);
    std::sort(contents.begin(), contents.end());

    std::uint64_t fingerprint = mix(kFnvOffset, static_cast<std::uint64_t>(batch.batch_id));
    for (const auto& [id, seqlen] : contents) {
      fingerprint = mix(fingerprint, id);
      fingerprint = mix(fingerprint, static_cast<std::uint64_t>(seqlen));
    }
    TrainState next = state;
    next.step = state.step + 1;
    next.model_digest = mix(state.model_digest, fingerprint);
    next.optimizer_digest = mix(state.optimizer_digest, next.model_digest);
    next.cursor = {index + 1, 0};
    next.rng_state = splitmix64(state.rng_state);
    return next;
  }

  /// Fills the aggregate fields of a report from its per-step records.
  SimReport finalize(std::vector<StepRecord> steps, double wallclock_ms,
                     const TrainState& final_state) const {
    SimReport r;
    r.mode = config_.balancing_mode;
    r.per_step = std::move(steps);
    r.wallclock_ms = wallclock_ms;
    double sum = 0.0;
    for (const auto& s : r.per_step) sum += s.imbalance_ratio;
    r.mean_imbalance = r.per_step.empty() ? 1.0 : sum / static_cast<double>(r.per_step.size());
    r.throughput_samples_per_s =
        wallclock_ms > 0.0 ? static_cast<double>(trace_.sample_count()) / (wallclock_ms / 1000.0)
                           : 0.0;
    r.state_digest = state_digest(final_state);
    r.mfu_proxy = compute_mfu(r, config_, trace_);
    return r;
  }

 private:
  std::function<double(const SampleSpec&)> scorer() const {
    switch (config_.balancing_mode) {
      case BalancingMode::kSeqlen:
        return [](const SampleSpec& s) { return static_cast<double>(s.seqlen); };
      case BalancingMode::kFlops:
        return [this](const SampleSpec& s) {
          return estimate_flops(s.seqlen, config_.flops_coeffs);
        };
      case BalancingMode::kRuntime:
      case BalancingMode::kNone:
        break;
    }
    return [this](const SampleSpec& s) { return modeled_runtime(s); };
  }

  ClusterConfig config_;
  const BatchTrace& trace_;
  const RuntimeTable& table_;
};

inline SimReport run_simulation(const ClusterConfig& config, const BatchTrace& trace,
                                const RuntimeTable& table) {
  Simulator sim(config, trace, table);
  TrainState state = sim.initial();
  std::vector<StepRecord> steps;
  steps.reserve(sim.num_steps());
  double wallclock = 0.0;
  std::optional<double> previous;
  for (std::size_t k = 0; k < sim.num_steps(); ++k) {
    StepRecord rec = sim.run_step(k, previous);
    wallclock += rec.cost_ms(config.allreduce_ms);
    previous = rec.makespan_ms;
    steps.push_back(rec);
    state = sim.advance(state, k);
  }
  return sim.finalize(std::move(steps), wallclock, state);
}

/// Runs every balancing mode on identical inputs, in kAllModes order.
inline std::vector<std::pair<BalancingMode, SimReport>> compare_modes(
    const ClusterConfig& config, const BatchTrace& trace, const RuntimeTable& table) {
  std::vector<std::pair<BalancingMode, SimReport>> out;
  for (auto mode : kAllModes) {
    ClusterConfig c = config;
    c.balancing_mode = mode;
    out.emplace_back(mode, run_simulation(c, trace, table));
  }
  return out;
}

}  // namespace trainplan
