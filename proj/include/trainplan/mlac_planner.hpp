// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Multi-level activation checkpointing planner.
//
// A model is a chain of checkpointed segments. For every segment input we
// decide whether it stays on the GPU or is offloaded to CPU or disk; for every
// interior activation we decide whether it is recomputed in backward or saved
// on one of the three tiers. The analytic cost model charges recomputation
// plus whatever transfer time is not hidden behind compute.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>
#include <vector>

#include "trainplan/error.hpp"

namespace trainplan {

using Bytes = std::uint64_t;

inline constexpr Bytes kUnboundedBytes = std::numeric_limits<Bytes>::max();

struct InteriorOp {
  double cost_ms = 0.0;
  Bytes act_bytes = 0;
  bool compute_bound = false;
  friend bool operator==(const InteriorOp&, const InteriorOp&) = default;
};

struct Segment {
  Bytes input_bytes = 0;
  double backward_ms = 0.0;
  std::vector<InteriorOp> interiors;
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Segment i's output is segment i+1's input.
struct SegmentGraph {
  std::vector<Segment> segments;
  friend bool operator==(const SegmentGraph&, const SegmentGraph&) = default;
};

struct TransferTier {
  Bytes capacity = 0;
  double offload_bytes_per_ms = 1.0;
  double prefetch_bytes_per_ms = 1.0;
  friend bool operator==(const TransferTier&, const TransferTier&) = default;
};

struct TierSpec {
  Bytes gpu_capacity = 0;  // activation budget; GPU residency is free
  TransferTier cpu;
  TransferTier disk;
  friend bool operator==(const TierSpec&, const TierSpec&) = default;
};

enum class InputPlacement : std::uint8_t { kKeepGpu, kOffloadCpu, kOffloadDisk };
enum class InteriorPlacement : std::uint8_t { kRecompute, kSaveGpu, kSaveCpu, kSaveDisk };

struct CheckpointPlan {
  std::vector<InputPlacement> input_placement;                  // per segment
  std::vector<std::vector<InteriorPlacement>> interior_placement;  // per segment, per op

  friend bool operator==(const CheckpointPlan&, const CheckpointPlan&) = default;
};

struct CostBreakdown {
  double recompute_ms = 0.0;
  double offload_stall_ms = 0.0;
  double prefetch_stall_ms = 0.0;
  double total_overhead_ms = 0.0;
  Bytes persistent_gpu_bytes = 0;
  Bytes transient_gpu_bytes = 0;
  Bytes cpu_bytes = 0;
  Bytes disk_bytes = 0;
};

inline void validate(const SegmentGraph& graph) {
  for (const auto& seg : graph.segments) {
    if (!(seg.backward_ms >= 0.0)) {
      fail(ErrorCode::kInvalidArgument, "segment backward cost must be >= 0");
    }
    for (const auto& op : seg.interiors) {
      if (!(op.cost_ms >= 0.0)) fail(ErrorCode::kInvalidArgument, "interior cost must be >= 0");
    }
  }
}

inline void validate(const TierSpec& tiers) {
  for (const auto* t : {&tiers.cpu, &tiers.disk}) {
    if (!(t->offload_bytes_per_ms > 0.0) || !(t->prefetch_bytes_per_ms > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "CPU and disk bandwidths must be > 0");
    }
  }
}

inline std::size_t count_slots(const SegmentGraph& graph) {
  std::size_t n = graph.segments.size();
  for (const auto& seg : graph.segments) n += seg.interiors.size();
  return n;
}

inline void check_shape(const SegmentGraph& graph, const CheckpointPlan& plan) {
  bool ok = plan.input_placement.size() == graph.segments.size() &&
            plan.interior_placement.size() == graph.segments.size();
  for (std::size_t i = 0; ok && i < graph.segments.size(); ++i) {
    ok = plan.interior_placement[i].size() == graph.segments[i].interiors.size();
  }
  if (!ok) fail(ErrorCode::kShapeMismatch, "checkpoint plan does not match the segment graph");
}

// Largest per-segment sum of interior activations: the working set needed
// while one segment is rematerialized in backward.
inline Bytes transient_floor(const SegmentGraph& graph) {
  Bytes peak = 0;
  for (const auto& seg : graph.segments) {
    Bytes sum = 0;
    for (const auto& op : seg.interiors) sum += op.act_bytes;
    peak = std::max(peak, sum);
  }
  return peak;
}

namespace detail {

inline double forward_ms(const Segment& seg) {
  double sum = 0.0;
  for (const auto& op : seg.interiors) sum += op.cost_ms;
  return sum;
}

inline double transfer_stall(Bytes size, double bytes_per_ms, double window_ms) {
  return std::max(0.0, static_cast<double>(size) / bytes_per_ms - window_ms);
}

}  // namespace detail

inline CostBreakdown evaluate_plan(const SegmentGraph& graph, const TierSpec& tiers,
                                   const CheckpointPlan& plan) {
  check_shape(graph, plan);
  const std::size_t n = graph.segments.size();

  std::vector<double> recompute(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ops = graph.segments[i].interiors;
    for (std::size_t j = 0; j < ops.size(); ++j) {
      if (plan.interior_placement[i][j] == InteriorPlacement::kRecompute) {
        recompute[i] += ops[j].cost_ms;
      }
    }
  }
  // Offload from segment i overlaps the forward of every later segment;
  // prefetch for segment i overlaps the backward (and recompute) of every
  // later segment, since backward walks the chain in reverse.
  std::vector<double> offload_window(n, 0.0);
  std::vector<double> prefetch_window(n, 0.0);
  for (std::size_t i = n; i-- > 1;) {
    offload_window[i - 1] = offload_window[i] + detail::forward_ms(graph.segments[i]);
    prefetch_window[i - 1] =
        prefetch_window[i] + graph.segments[i].backward_ms + recompute[i];
  }

  CostBreakdown c;
  c.transient_gpu_bytes = transient_floor(graph);
  auto charge = [&](Bytes size, const TransferTier& tier, std::size_t seg) {
    c.offload_stall_ms +=
        detail::transfer_stall(size, tier.offload_bytes_per_ms, offload_window[seg]);
    c.prefetch_stall_ms +=
        detail::transfer_stall(size, tier.prefetch_bytes_per_ms, prefetch_window[seg]);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto& seg = graph.segments[i];
    switch (plan.input_placement[i]) {
      case InputPlacement::kKeepGpu:
        c.persistent_gpu_bytes += seg.input_bytes;
        break;
      case InputPlacement::kOffloadCpu:
        c.cpu_bytes += seg.input_bytes;
        charge(seg.input_bytes, tiers.cpu, i);
        break;
      case InputPlacement::kOffloadDisk:
        c.disk_bytes += seg.input_bytes;
        charge(seg.input_bytes, tiers.disk, i);
        break;
    }
    for (std::size_t j = 0; j < seg.interiors.size(); ++j) {
      const Bytes size = seg.interiors[j].act_bytes;
      switch (plan.interior_placement[i][j]) {
        case InteriorPlacement::kRecompute:
          break;
        case InteriorPlacement::kSaveGpu:
          c.persistent_gpu_bytes += size;
          break;
        case InteriorPlacement::kSaveCpu:
          c.cpu_bytes += size;
          charge(size, tiers.cpu, i);
          break;
        case InteriorPlacement::kSaveDisk:
          c.disk_bytes += size;
          charge(size, tiers.disk, i);
          break;
      }
    }
    c.recompute_ms += recompute[i];
  }
  c.total_overhead_ms = c.recompute_ms + c.offload_stall_ms + c.prefetch_stall_ms;
  return c;
}

inline bool fits(const CostBreakdown& c, const TierSpec& tiers) {
  // persistent + transient may overflow only if both are near the type max.
  const bool gpu_ok = c.persistent_gpu_bytes <= tiers.gpu_capacity &&
                      c.transient_gpu_bytes <= tiers.gpu_capacity - c.persistent_gpu_bytes;
  return gpu_ok && c.cpu_bytes <= tiers.cpu.capacity && c.disk_bytes <= tiers.disk.capacity;
}

inline CheckpointPlan vanilla_ac_plan(const SegmentGraph& graph) {
  CheckpointPlan plan;
  plan.input_placement.assign(graph.segments.size(), InputPlacement::kKeepGpu);
  for (const auto& seg : graph.segments) {
    plan.interior_placement.emplace_back(seg.interiors.size(), InteriorPlacement::kRecompute);
  }
  return plan;
}

// Every input offloaded to CPU, every interior recomputed: no activation
// stays resident on the GPU between forward and backward.
inline CheckpointPlan zero_activation_plan(const SegmentGraph& graph) {
  CheckpointPlan plan = vanilla_ac_plan(graph);
  std::fill(plan.input_placement.begin(), plan.input_placement.end(),
            InputPlacement::kOffloadCpu);
  return plan;
}

/// Lexicographic order over the flattened decision vector
/// (input 0, interiors of 0, input 1, interiors of 1, ...).
inline bool plan_less(const CheckpointPlan& a, const CheckpointPlan& b) {
  for (std::size_t i = 0; i < a.input_placement.size(); ++i) {
    if (a.input_placement[i] != b.input_placement[i]) {
      return a.input_placement[i] < b.input_placement[i];
    }
    const auto& ia = a.interior_placement[i];
    const auto& ib = b.interior_placement[i];
    for (std::size_t j = 0; j < ia.size(); ++j) {
      if (ia[j] != ib[j]) return ia[j] < ib[j];
    }
  }
  return false;
}

// Strict "a is preferred over b": lower overhead, then lower persistent GPU
// bytes, then lexicographically smaller plan.
inline bool plan_preferred(const CostBreakdown& ca, const CheckpointPlan& a,
                           const CostBreakdown& cb, const CheckpointPlan& b) {
  if (ca.total_overhead_ms != cb.total_overhead_ms) {
    return ca.total_overhead_ms < cb.total_overhead_ms;
  }
  if (ca.persistent_gpu_bytes != cb.persistent_gpu_bytes) {
    return ca.persistent_gpu_bytes < cb.persistent_gpu_bytes;
  }
  return plan_less(a, b);
}

inline constexpr std::size_t kDefaultExactSlotCap = 12;

namespace detail {

// Depth-first search over decisions, walking segments from last to first so
// that every prefetch window is known when an item's placement is chosen.
// Partial overheads are exact lower bounds of the final overhead; leaves are
// re-scored with evaluate_plan so ties are resolved on identical numbers.
class ExactSearch {
 public:
  ExactSearch(const SegmentGraph& graph, const TierSpec& tiers)
      : graph_(graph), tiers_(tiers), plan_(vanilla_ac_plan(graph)) {
    const std::size_t n = graph.segments.size();
    offload_window_.assign(n, 0.0);
    for (std::size_t i = n; i-- > 1;) {
      offload_window_[i - 1] = offload_window_[i] + forward_ms(graph.segments[i]);
    }
    transient_ = transient_floor(graph);
  }

  bool run() {
    if (transient_ > tiers_.gpu_capacity) return false;
    later_backward_ = 0.0;
    segment(graph_.segments.size(), 0.0);
    return found_;
  }

  const CheckpointPlan& best_plan() const { return best_plan_; }
  const CostBreakdown& best_cost() const { return best_cost_; }

 private:
  struct Usage {
    Bytes gpu = 0, cpu = 0, disk = 0;
  };

  bool admissible(const Usage& u) const {
    return u.gpu <= tiers_.gpu_capacity - transient_ && u.cpu <= tiers_.cpu.capacity &&
           u.disk <= tiers_.disk.capacity;
  }

  bool prunable(double partial) const {
    return found_ && partial > best_cost_.total_overhead_ms * (1.0 + 1e-12) + 1e-12;
  }

  double transfer(Bytes size, const TransferTier& tier, std::size_t seg) const {
    return transfer_stall(size, tier.offload_bytes_per_ms, offload_window_[seg]) +
           transfer_stall(size, tier.prefetch_bytes_per_ms, later_backward_);
  }

  // Enter segment `remaining - 1` (or record a leaf when none remain).
  void segment(std::size_t remaining, double partial) {
    if (remaining == 0) {
      leaf();
      return;
    }
    interior(remaining - 1, 0, partial, 0.0);
  }

  void interior(std::size_t seg, std::size_t j, double partial, double seg_recompute) {
    if (prunable(partial)) return;
    const auto& s = graph_.segments[seg];
    if (j == s.interiors.size()) {
      input(seg, partial, seg_recompute);
      return;
    }
    const auto& op = s.interiors[j];
    auto& slot = plan_.interior_placement[seg][j];
    for (auto choice : {InteriorPlacement::kRecompute, InteriorPlacement::kSaveGpu,
                        InteriorPlacement::kSaveCpu, InteriorPlacement::kSaveDisk}) {
      Usage saved = usage_;
      double extra = 0.0;
      double rec = 0.0;
      switch (choice) {
        case InteriorPlacement::kRecompute: rec = op.cost_ms; break;
        case InteriorPlacement::kSaveGpu: usage_.gpu += op.act_bytes; break;
        case InteriorPlacement::kSaveCpu:
          usage_.cpu += op.act_bytes;
          extra = transfer(op.act_bytes, tiers_.cpu, seg);
          break;
        case InteriorPlacement::kSaveDisk:
          usage_.disk += op.act_bytes;
          extra = transfer(op.act_bytes, tiers_.disk, seg);
          break;
      }
      if (admissible(usage_)) {
        slot = choice;
        interior(seg, j + 1, partial + extra + rec, seg_recompute + rec);
      }
      usage_ = saved;
    }
    slot = InteriorPlacement::kRecompute;
  }

  void input(std::size_t seg, double partial, double seg_recompute) {
    if (prunable(partial)) return;
    const Bytes size = graph_.segments[seg].input_bytes;
    auto& slot = plan_.input_placement[seg];
    for (auto choice : {InputPlacement::kKeepGpu, InputPlacement::kOffloadCpu,
                        InputPlacement::kOffloadDisk}) {
      Usage saved = usage_;
      double extra = 0.0;
      switch (choice) {
        case InputPlacement::kKeepGpu: usage_.gpu += size; break;
        case InputPlacement::kOffloadCpu:
          usage_.cpu += size;
          extra = transfer(size, tiers_.cpu, seg);
          break;
        case InputPlacement::kOffloadDisk:
          usage_.disk += size;
          extra = transfer(size, tiers_.disk, seg);
          break;
      }
      if (admissible(usage_)) {
        slot = choice;
        const double saved_backward = later_backward_;
        later_backward_ += graph_.segments[seg].backward_ms + seg_recompute;
        segment(seg, partial + extra);
        later_backward_ = saved_backward;
      }
      usage_ = saved;
    }
    slot = InputPlacement::kKeepGpu;
  }

  void leaf() {
    CostBreakdown cost = evaluate_plan(graph_, tiers_, plan_);
    if (!fits(cost, tiers_)) return;
    if (!found_ || plan_preferred(cost, plan_, best_cost_, best_plan_)) {
      found_ = true;
      best_cost_ = cost;
      best_plan_ = plan_;
    }
  }

  const SegmentGraph& graph_;
  const TierSpec& tiers_;
  CheckpointPlan plan_;
  std::vector<double> offload_window_;
  Bytes transient_ = 0;
  double later_backward_ = 0.0;
  Usage usage_;
  bool found_ = false;
  CheckpointPlan best_plan_;
  CostBreakdown best_cost_;
};

}  // namespace detail

/// Optimal plan under the tier budgets, by exhaustive branch and bound.
inline CheckpointPlan plan_exact(const SegmentGraph& graph, const TierSpec& tiers,
                                 std::size_t slot_cap = kDefaultExactSlotCap) {
  validate(graph);
  validate(tiers);
  const std::size_t slots = count_slots(graph);
  if (slots > slot_cap) {
    std::ostringstream os;
    os << "graph has " << slots << " decision slots, exact planner cap is " << slot_cap;
    fail(ErrorCode::kTooManySlots, os.str());
  }
  detail::ExactSearch search(graph, tiers);
  if (!search.run()) fail(ErrorCode::kInfeasible, "no checkpoint plan fits the tier budgets");
  return search.best_plan();
}

struct InteriorRef {
  std::size_t segment = 0;
  std::size_t index = 0;

  friend bool operator==(const InteriorRef&, const InteriorRef&) = default;
};

/// Order in which the greedy planner considers interior activations: highest
/// recompute cost per byte first, compute-bound ops before io-bound ones on
/// ties, then graph order.
inline std::vector<InteriorRef> greedy_upgrade_order(const SegmentGraph& graph) {
  struct Entry {
    InteriorRef ref;
    double density;
    bool compute_bound;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < graph.segments.size(); ++i) {
    const auto& ops = graph.segments[i].interiors;
    for (std::size_t j = 0; j < ops.size(); ++j) {
      const double density =
          ops[j].act_bytes == 0
              ? std::numeric_limits<double>::infinity()
              : ops[j].cost_ms / static_cast<double>(ops[j].act_bytes);
      entries.push_back({{i, j}, density, ops[j].compute_bound});
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.density != b.density) return a.density > b.density;
    return a.compute_bound && !b.compute_bound;
  });
  std::vector<InteriorRef> order;
  order.reserve(entries.size());
  for (const auto& e : entries) order.push_back(e.ref);
  return order;
}

namespace detail {

// Inputs go to CPU while it has room, then to disk.
inline bool spill_inputs(const SegmentGraph& graph, const TierSpec& tiers,
                         CheckpointPlan& plan) {
  Bytes cpu = 0, disk = 0;
  for (std::size_t i = 0; i < graph.segments.size(); ++i) {
    const Bytes size = graph.segments[i].input_bytes;
    if (size <= tiers.cpu.capacity - cpu) {
      cpu += size;
      plan.input_placement[i] = InputPlacement::kOffloadCpu;
    } else if (size <= tiers.disk.capacity - disk) {
      disk += size;
      plan.input_placement[i] = InputPlacement::kOffloadDisk;
    } else {
      return false;
    }
  }
  return true;
}

inline void greedy_improve(const SegmentGraph& graph, const TierSpec& tiers,
                           CheckpointPlan& plan) {
  CostBreakdown current = evaluate_plan(graph, tiers, plan);
  for (const auto& ref : greedy_upgrade_order(graph)) {
    auto& slot = plan.interior_placement[ref.segment][ref.index];
    if (slot != InteriorPlacement::kRecompute) continue;
    InteriorPlacement best = InteriorPlacement::kRecompute;
    CostBreakdown best_cost = current;
    for (auto tier : {InteriorPlacement::kSaveGpu, InteriorPlacement::kSaveCpu,
                      InteriorPlacement::kSaveDisk}) {
      slot = tier;
      CostBreakdown c = evaluate_plan(graph, tiers, plan);
      if (fits(c, tiers) && c.total_overhead_ms < best_cost.total_overhead_ms) {
        best = tier;
        best_cost = c;
      }
    }
    slot = best;
    current = best_cost;
  }

  std::vector<std::size_t> inputs(graph.segments.size());
  std::iota(inputs.begin(), inputs.end(), 0);
  std::stable_sort(inputs.begin(), inputs.end(), [&](std::size_t a, std::size_t b) {
    return graph.segments[a].input_bytes < graph.segments[b].input_bytes;
  });
  for (std::size_t i : inputs) {
    auto& slot = plan.input_placement[i];
    if (slot == InputPlacement::kKeepGpu) continue;
    const InputPlacement previous = slot;
    slot = InputPlacement::kKeepGpu;
    CostBreakdown c = evaluate_plan(graph, tiers, plan);
    if (fits(c, tiers) && c.total_overhead_ms <= current.total_overhead_ms) {
      current = c;
    } else {
      slot = previous;
    }
  }
}

}  // namespace detail

/// Greedy planner.
///
/// Starts from the zero-activation plan (inputs spilled to CPU, then disk),
/// upgrades interiors in greedy_upgrade_order to whichever tier lowers the
/// overhead most while budgets hold, then pulls inputs back onto the GPU in
/// ascending size while that does not raise the overhead. The same pass is
/// also run from the vanilla plan when vanilla fits, and the better result is
/// returned, so the answer never loses to vanilla checkpointing.
inline CheckpointPlan plan_greedy(const SegmentGraph& graph, const TierSpec& tiers) {
  validate(graph);
  validate(tiers);
  std::vector<CheckpointPlan> candidates;

  CheckpointPlan zero = vanilla_ac_plan(graph);
  if (detail::spill_inputs(graph, tiers, zero) &&
      fits(evaluate_plan(graph, tiers, zero), tiers)) {
    detail::greedy_improve(graph, tiers, zero);
    candidates.push_back(std::move(zero));
  }
  CheckpointPlan vanilla = vanilla_ac_plan(graph);
  if (fits(evaluate_plan(graph, tiers, vanilla), tiers)) {
    detail::greedy_improve(graph, tiers, vanilla);
    candidates.push_back(std::move(vanilla));
  }
  if (candidates.empty()) {
    fail(ErrorCode::kInfeasible,
         "neither the zero-activation nor the vanilla plan fits the tier budgets");
  }
  std::size_t best = 0;
  CostBreakdown best_cost = evaluate_plan(graph, tiers, candidates[0]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    CostBreakdown c = evaluate_plan(graph, tiers, candidates[k]);
    if (c.total_overhead_ms < best_cost.total_overhead_ms ||
        (c.total_overhead_ms == best_cost.total_overhead_ms &&
         c.persistent_gpu_bytes < best_cost.persistent_gpu_bytes)) {
      best = k;
      best_cost = c;
    }
  }
  return candidates[best];
}

}  // namespace trainplan
