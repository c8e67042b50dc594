// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <optional>
#include <random>
#include <vector>

#include "trainplan/mlac_planner.hpp"

namespace trainplan {
namespace {

constexpr Bytes kMB = 1'000'000;

using IP = InputPlacement;
using XP = InteriorPlacement;

// seg1: input 100 MB, A(10 ms, 200 MB, compute), B(2 ms, 200 MB, io); bwd 12 ms
// seg2: input 100 MB, C(8 ms, 150 MB, compute); bwd 8 ms
SegmentGraph two_segment_graph() {
  SegmentGraph g;
  g.segments.push_back({100 * kMB, 12.0, {{10.0, 200 * kMB, true}, {2.0, 200 * kMB, false}}});
  g.segments.push_back({100 * kMB, 8.0, {{8.0, 150 * kMB, true}}});
  return g;
}

TierSpec tiers(Bytes gpu, Bytes cpu, Bytes disk, double cpu_bw = 1.0 * kMB,
               double disk_bw = 0.2 * kMB) {
  TierSpec t;
  t.gpu_capacity = gpu;
  t.cpu = {cpu, cpu_bw, cpu_bw};
  t.disk = {disk, disk_bw, disk_bw};
  return t;
}

TierSpec unbounded() { return tiers(kUnboundedBytes, kUnboundedBytes, kUnboundedBytes); }

// Independent oracle: decode every index in [0, 3^inputs * 4^interiors) into
// a plan, score it with evaluate_plan, and keep the preferred feasible one.
struct OracleResult {
  std::optional<CheckpointPlan> plan;
  CostBreakdown cost;
  std::size_t feasible = 0;
};

OracleResult enumerate_all(const SegmentGraph& g, const TierSpec& t) {
  std::size_t inputs = g.segments.size();
  std::size_t interiors = 0;
  for (const auto& s : g.segments) interiors += s.interiors.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < inputs; ++i) total *= 3;
  for (std::size_t i = 0; i < interiors; ++i) total *= 4;

  OracleResult best;
  CheckpointPlan plan = vanilla_ac_plan(g);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < inputs; ++i) {
      plan.input_placement[i] = static_cast<IP>(c % 3);
      c /= 3;
    }
    for (auto& seg : plan.interior_placement) {
      for (auto& x : seg) {
        x = static_cast<XP>(c % 4);
        c /= 4;
      }
    }
    const CostBreakdown cost = evaluate_plan(g, t, plan);
    const bool ok = cost.persistent_gpu_bytes + cost.transient_gpu_bytes <= t.gpu_capacity &&
                    cost.cpu_bytes <= t.cpu.capacity && cost.disk_bytes <= t.disk.capacity;
    if (!ok) continue;
    ++best.feasible;
    if (!best.plan || plan_preferred(cost, plan, best.cost, *best.plan)) {
      best.plan = plan;
      best.cost = cost;
    }
  }
  return best;
}

SegmentGraph random_graph(std::mt19937_64& rng, std::size_t max_slots) {
  SegmentGraph g;
  std::size_t slots = 0;
  const std::size_t segments = 1 + rng() % 3;
  for (std::size_t i = 0; i < segments && slots < max_slots; ++i) {
    Segment s;
    s.input_bytes = (1 + rng() % 8) * 10 * kMB;
    s.backward_ms = static_cast<double>(rng() % 20);
    ++slots;
    const std::size_t ops = rng() % 4;
    for (std::size_t j = 0; j < ops && slots < max_slots; ++j, ++slots) {
      s.interiors.push_back({static_cast<double>(rng() % 16), (rng() % 10) * 20 * kMB,
                             rng() % 2 == 0});
    }
    g.segments.push_back(std::move(s));
  }
  return g;
}

TierSpec random_tiers(std::mt19937_64& rng, const SegmentGraph& g) {
  const Bytes floor = transient_floor(g);
  auto pick = [&](Bytes unit) -> Bytes {
    switch (rng() % 4) {
      case 0: return 0;
      case 1: return kUnboundedBytes;
      default: return (rng() % 20) * unit;
    }
  };
  TierSpec t;
  t.gpu_capacity = rng() % 5 == 0 ? kUnboundedBytes : floor + (rng() % 10) * 50 * kMB;
  const double cpu_bw = static_cast<double>(1 + rng() % 100) * kMB / 10.0;
  const double disk_bw = static_cast<double>(1 + rng() % 20) * kMB / 10.0;
  t.cpu = {pick(50 * kMB), cpu_bw, cpu_bw * 1.5};
  t.disk = {pick(100 * kMB), disk_bw, disk_bw};
  return t;
}

TEST(EvaluatePlan, VanillaWorkedExample) {
  const auto c = evaluate_plan(two_segment_graph(), unbounded(),
                               vanilla_ac_plan(two_segment_graph()));
  EXPECT_EQ(c.recompute_ms, 10.0 + 2.0 + 8.0);
  EXPECT_EQ(c.persistent_gpu_bytes, 200 * kMB);
  EXPECT_EQ(c.transient_gpu_bytes, 400 * kMB);
  EXPECT_EQ(c.offload_stall_ms, 0.0);
  EXPECT_EQ(c.prefetch_stall_ms, 0.0);
  EXPECT_EQ(c.total_overhead_ms, 20.0);
}

TEST(EvaluatePlan, ZeroActivationHasNoResidentBytes) {
  const auto g = two_segment_graph();
  const auto c = evaluate_plan(g, unbounded(), zero_activation_plan(g));
  EXPECT_EQ(c.persistent_gpu_bytes, 0u);
  EXPECT_EQ(c.cpu_bytes, 200 * kMB);
}

TEST(EvaluatePlan, SavingAToGpu) {
  const auto g = two_segment_graph();
  auto plan = vanilla_ac_plan(g);
  plan.interior_placement[0][0] = XP::kSaveGpu;
  const auto c = evaluate_plan(g, unbounded(), plan);
  EXPECT_EQ(c.recompute_ms, 2.0 + 8.0);
  EXPECT_EQ(c.persistent_gpu_bytes, 200 * kMB + 200 * kMB);
}

TEST(EvaluatePlan, StallWindows) {
  // Offloading A to CPU at 1 MB/ms: 200 ms of transfer, offload hidden behind
  // seg2's 8 ms forward, prefetch behind seg2's 8 ms backward + 8 ms recompute.
  const auto g = two_segment_graph();
  auto plan = vanilla_ac_plan(g);
  plan.interior_placement[0][0] = XP::kSaveCpu;
  const auto c = evaluate_plan(g, unbounded(), plan);
  EXPECT_DOUBLE_EQ(c.offload_stall_ms, 200.0 - 8.0);
  EXPECT_DOUBLE_EQ(c.prefetch_stall_ms, 200.0 - (8.0 + 8.0));
  EXPECT_DOUBLE_EQ(c.total_overhead_ms, c.recompute_ms + c.offload_stall_ms + c.prefetch_stall_ms);
}

TEST(EvaluatePlan, ShapeMismatch) {
  auto plan = vanilla_ac_plan(two_segment_graph());
  plan.interior_placement[1].push_back(XP::kRecompute);
  try {
    evaluate_plan(two_segment_graph(), unbounded(), plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(VanillaPlan, EmptyInteriorsRecomputeNothing) {
  SegmentGraph g;
  g.segments.push_back({10 * kMB, 3.0, {}});
  g.segments.push_back({10 * kMB, 3.0, {}});
  const auto plan = vanilla_ac_plan(g);
  for (auto p : plan.input_placement) EXPECT_EQ(p, IP::kKeepGpu);
  EXPECT_EQ(evaluate_plan(g, unbounded(), plan).recompute_ms, 0.0);
}

TEST(PlanExact, UnboundedSavesEverythingOnGpu) {
  const auto g = two_segment_graph();
  const auto plan = plan_exact(g, unbounded());
  const auto c = evaluate_plan(g, unbounded(), plan);
  EXPECT_EQ(c.total_overhead_ms, 0.0);
  for (const auto& seg : plan.interior_placement) {
    for (auto x : seg) EXPECT_EQ(x, XP::kSaveGpu);
  }
}

TEST(PlanExact, NoPersistentGpuRoomMatchesEnumeration) {
  const auto g = two_segment_graph();
  // GPU holds exactly the transient working set; fast CPU, slow disk.
  const auto t = tiers(400 * kMB, kUnboundedBytes, kUnboundedBytes, 100.0 * kMB, 1.0 * kMB);
  const auto plan = plan_exact(g, t);
  const auto oracle = enumerate_all(g, t);
  ASSERT_TRUE(oracle.plan);
  EXPECT_EQ(plan, *oracle.plan);
  EXPECT_EQ(plan.input_placement, (std::vector<IP>{IP::kOffloadCpu, IP::kOffloadCpu}));
  EXPECT_EQ(evaluate_plan(g, t, plan).persistent_gpu_bytes, 0u);
  // A and B hide fully behind seg2; C stalls 1.5 ms each way; seg2's input 1 ms each way.
  EXPECT_DOUBLE_EQ(evaluate_plan(g, t, plan).total_overhead_ms, 5.0);
}

TEST(PlanExact, TransientAboveBudgetIsInfeasible) {
  const auto t = tiers(399 * kMB, kUnboundedBytes, kUnboundedBytes);
  try {
    plan_exact(two_segment_graph(), t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(PlanExact, RefusesOversizedGraphs) {
  SegmentGraph g;
  for (int i = 0; i < 5; ++i) {
    g.segments.push_back({kMB, 1.0, {{1.0, kMB, true}, {1.0, kMB, true}}});
  }
  try {
    plan_exact(g, unbounded());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooManySlots);
  }
}

TEST(PlanExact, MatchesEnumerationOnRandomGraphs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_graph(rng, 7);
    const auto t = random_tiers(rng, g);
    const auto oracle = enumerate_all(g, t);
    if (!oracle.plan) {
      EXPECT_THROW(plan_exact(g, t), Error);
      continue;
    }
    const auto plan = plan_exact(g, t);
    EXPECT_EQ(plan, *oracle.plan);
    EXPECT_EQ(evaluate_plan(g, t, plan).total_overhead_ms, oracle.cost.total_overhead_ms);
  }
}

TEST(PlanExact, LargerCapacityNeverHurts) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 150; ++trial) {
    const auto g = random_graph(rng, 7);
    auto t = random_tiers(rng, g);
    double before;
    try {
      before = evaluate_plan(g, t, plan_exact(g, t)).total_overhead_ms;
    } catch (const Error&) {
      continue;
    }
    auto grow = [](Bytes b) { return b > kUnboundedBytes / 2 ? b : b * 2 + 10 * kMB; };
    switch (trial % 3) {
      case 0: t.gpu_capacity = grow(t.gpu_capacity); break;
      case 1: t.cpu.capacity = grow(t.cpu.capacity); break;
      default: t.disk.capacity = grow(t.disk.capacity); break;
    }
    EXPECT_LE(evaluate_plan(g, t, plan_exact(g, t)).total_overhead_ms, before);
  }
}

TEST(PlanGreedy, UpgradeOrderFollowsDensity) {
  // C: 8/150, A: 10/200, B: 2/200.
  const auto order = greedy_upgrade_order(two_segment_graph());
  EXPECT_EQ(order, (std::vector<InteriorRef>{{1, 0}, {0, 0}, {0, 1}}));
}

TEST(PlanGreedy, DensityTiePrefersComputeBound) {
  SegmentGraph g;
  g.segments.push_back({kMB, 1.0, {{4.0, 2 * kMB, false}, {2.0, kMB, true}}});
  EXPECT_EQ(greedy_upgrade_order(g), (std::vector<InteriorRef>{{0, 1}, {0, 0}}));
}

TEST(PlanGreedy, UnboundedBudgetsReachZeroOverhead) {
  const auto g = two_segment_graph();
  const auto c = evaluate_plan(g, unbounded(), plan_greedy(g, unbounded()));
  EXPECT_EQ(c.total_overhead_ms, 0.0);
}

TEST(PlanGreedy, OnlyZeroActivationFits) {
  const auto g = two_segment_graph();
  const auto t = tiers(400 * kMB, 200 * kMB, 0);
  const auto plan = plan_greedy(g, t);
  EXPECT_EQ(plan, zero_activation_plan(g));
}

TEST(PlanGreedy, HugeCheapIoActivationStaysRecomputed) {
  SegmentGraph g;
  g.segments.push_back({kMB, 1.0, {{0.1, 1000 * kMB, false}}});
  const auto t = tiers(1001 * kMB, kUnboundedBytes, kUnboundedBytes);
  const auto plan = plan_greedy(g, t);
  EXPECT_EQ(plan.interior_placement[0][0], XP::kRecompute);
}

TEST(PlanGreedy, InfeasibleWhenNothingFits) {
  try {
    plan_greedy(two_segment_graph(), tiers(100 * kMB, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(PlanGreedy, FeasibleAndNoWorseThanVanilla) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const auto g = random_graph(rng, 12);
    const auto t = random_tiers(rng, g);
    const auto vanilla = evaluate_plan(g, t, vanilla_ac_plan(g));
    CheckpointPlan plan;
    try {
      plan = plan_greedy(g, t);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
      EXPECT_FALSE(fits(vanilla, t));
      continue;
    }
    const auto c = evaluate_plan(g, t, plan);
    EXPECT_TRUE(fits(c, t));
    if (fits(vanilla, t)) {
      EXPECT_LE(c.total_overhead_ms, vanilla.total_overhead_ms);
    }
  }
}

TEST(EvaluatePlan, VanillaInvariantsOnRandomGraphs) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_graph(rng, 12);
    const auto t = random_tiers(rng, g);
    const auto c = evaluate_plan(g, t, vanilla_ac_plan(g));
    double all = 0.0;
    for (const auto& s : g.segments) {
      for (const auto& op : s.interiors) all += op.cost_ms;
    }
    EXPECT_EQ(c.offload_stall_ms, 0.0);
    EXPECT_EQ(c.prefetch_stall_ms, 0.0);
    EXPECT_DOUBLE_EQ(c.recompute_ms, all);
    EXPECT_EQ(evaluate_plan(g, t, zero_activation_plan(g)).persistent_gpu_bytes, 0u);
  }
}

}  // namespace
}  // namespace trainplan
