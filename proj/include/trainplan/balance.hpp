// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Batch-local workload balancing across ranks.
//
// Samples of one batch are scored (by table runtime, or by a proxy such as
// seqlen or FLOPs), then placed with the Longest-Processing-Time greedy: the
// heaviest remaining sample goes to the least-loaded rank. A zero-cost
// relabelling pass afterwards keeps as many samples on their origin rank as
// possible, and the resulting exchange plan lists only the samples that move.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trainplan/error.hpp"
#include "trainplan/runtime_model.hpp"

namespace trainplan {

using SampleId = std::uint64_t;
using Rank = int;

struct SampleSpec {
  SampleId id = 0;
  Tokens seqlen = 1;
  Rank origin_rank = 0;
  std::int64_t batch_id = 0;

  friend bool operator==(const SampleSpec&, const SampleSpec&) = default;
};

// per_rank[r] holds sample ids sorted ascending.
struct RankAssignment {
  std::vector<std::vector<SampleId>> per_rank;
  std::vector<double> estimated_load;

  friend bool operator==(const RankAssignment&, const RankAssignment&) = default;
};

struct Move {
  SampleId sample_id = 0;
  Rank from_rank = 0;
  Rank to_rank = 0;

  friend bool operator==(const Move&, const Move&) = default;
};

struct ExchangePlan {
  std::vector<Move> moves;  // sorted by sample id

  friend bool operator==(const ExchangePlan&, const ExchangePlan&) = default;
};

struct BalancePlan {
  RankAssignment assignment;
  ExchangePlan exchange;
  std::int64_t batch_id = 0;

  friend bool operator==(const BalancePlan&, const BalancePlan&) = default;
};

using Layout = std::vector<std::vector<SampleId>>;

namespace detail {

inline void validate_batch(std::span<const SampleSpec> batch, int num_ranks) {
  if (batch.empty()) fail(ErrorCode::kEmptyBatch, "batch has no samples");
  if (num_ranks < 1) fail(ErrorCode::kInvalidArgument, "num_ranks must be >= 1");
  std::unordered_set<SampleId> seen;
  for (const auto& s : batch) {
    if (s.batch_id != batch.front().batch_id) {
      std::ostringstream os;
      os << "sample " << s.id << " belongs to batch " << s.batch_id
         << ", expected " << batch.front().batch_id;
      fail(ErrorCode::kMixedBatchIds, os.str());
    }
    if (s.origin_rank < 0 || s.origin_rank >= num_ranks) {
      std::ostringstream os;
      os << "sample " << s.id << " has origin rank " << s.origin_rank
         << " outside [0, " << num_ranks << ")";
      fail(ErrorCode::kInvalidRank, os.str());
    }
    if (s.seqlen < 1) fail(ErrorCode::kInvalidArgument, "sample seqlen must be >= 1");
    if (!seen.insert(s.id).second) {
      std::ostringstream os;
      os << "sample id " << s.id << " appears twice in the batch";
      fail(ErrorCode::kDuplicateSample, os.str());
    }
  }
}

inline double max_load(std::span<const double> loads) {
  return loads.empty() ? 0.0 : *std::max_element(loads.begin(), loads.end());
}

}  // namespace detail

inline double makespan(const RankAssignment& assignment) {
  return detail::max_load(assignment.estimated_load);
}

inline double imbalance_ratio(const RankAssignment& assignment) {
  const auto& loads = assignment.estimated_load;
  const double total = std::accumulate(loads.begin(), loads.end(), 0.0);
  if (loads.empty() || !(total > 0.0)) {
    fail(ErrorCode::kZeroTotalLoad, "imbalance ratio undefined for zero total load");
  }
  return detail::max_load(loads) / (total / static_cast<double>(loads.size()));
}

/// The layout the batch arrives in, before any exchange.
inline Layout origin_layout(std::span<const SampleSpec> batch, int num_ranks) {
  Layout layout(static_cast<std::size_t>(num_ranks));
  for (const auto& s : batch) {
    layout.at(static_cast<std::size_t>(s.origin_rank)).push_back(s.id);
  }
  return layout;
}

/// Scores each sample once, then builds the loads of a layout.
template <typename ScoreFn>
RankAssignment assignment_from_layout(std::span<const SampleSpec> batch,
                                      const Layout& layout, ScoreFn&& score) {
  std::unordered_map<SampleId, double> by_id;
  for (const auto& s : batch) by_id.emplace(s.id, score(s));
  RankAssignment a;
  a.per_rank = layout;
  a.estimated_load.assign(layout.size(), 0.0);
  for (std::size_t r = 0; r < layout.size(); ++r) {
    std::sort(a.per_rank[r].begin(), a.per_rank[r].end());
    for (SampleId id : a.per_rank[r]) a.estimated_load[r] += by_id.at(id);
  }
  return a;
}

/// LPT placement under an arbitrary per-sample score.
///
/// Samples are taken by score descending (ties: smaller id first) and each is
/// put on the rank with the smallest accumulated score (ties: smallest rank).
/// If the resulting makespan is not strictly better than the origin layout's,
/// the origin layout is kept and no sample moves.
template <typename ScoreFn>
BalancePlan plan_balance_by(std::span<const SampleSpec> batch, int num_ranks,
                            ScoreFn&& score) {
  detail::validate_batch(batch, num_ranks);
  const auto n = batch.size();
  const auto ranks = static_cast<std::size_t>(num_ranks);

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = score(batch[i]);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return batch[a].id < batch[b].id;
  });

  std::vector<double> loads(ranks, 0.0);
  std::vector<Rank> target(n, 0);
  for (std::size_t idx : order) {
    const auto r = static_cast<std::size_t>(
        std::min_element(loads.begin(), loads.end()) - loads.begin());
    loads[r] += scores[idx];
    target[idx] = static_cast<Rank>(r);
  }

  // Samples with bit-identical scores are interchangeable: within each such
  // group, hand the group's rank slots to samples already sitting on that
  // rank first. Loads are unchanged and the move count is minimal.
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[scores[i]].push_back(i);
  for (auto& [value, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) { return batch[a].id < batch[b].id; });
    std::vector<std::size_t> slots(ranks, 0);
    for (std::size_t i : members) ++slots[static_cast<std::size_t>(target[i])];
    std::vector<bool> placed(members.size(), false);
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto origin = static_cast<std::size_t>(batch[members[m]].origin_rank);
      if (slots[origin] > 0) {
        --slots[origin];
        target[members[m]] = static_cast<Rank>(origin);
        placed[m] = true;
      }
    }
    std::size_t r = 0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      if (placed[m]) continue;
      while (slots[r] == 0) ++r;
      --slots[r];
      target[members[m]] = static_cast<Rank>(r);
    }
  }

  // Loads are summed in sample-id order so that every consumer that re-sums
  // a layout gets bit-identical totals.
  std::vector<std::size_t> by_id(n);
  std::iota(by_id.begin(), by_id.end(), 0);
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return batch[a].id < batch[b].id; });
  auto loads_of = [&](auto rank_of) {
    std::vector<double> out(ranks, 0.0);
    for (std::size_t i : by_id) out[static_cast<std::size_t>(rank_of(i))] += scores[i];
    return out;
  };
  const auto origin_loads = loads_of([&](std::size_t i) { return batch[i].origin_rank; });
  const auto balanced_loads = loads_of([&](std::size_t i) { return target[i]; });
  if (detail::max_load(origin_loads) <= detail::max_load(balanced_loads)) {
    for (std::size_t i = 0; i < n; ++i) target[i] = batch[i].origin_rank;
  }

  BalancePlan plan;
  plan.batch_id = batch.front().batch_id;
  plan.assignment.per_rank.assign(ranks, {});
  plan.assignment.estimated_load.assign(ranks, 0.0);
  for (std::size_t i : by_id) {
    const auto r = static_cast<std::size_t>(target[i]);
    plan.assignment.per_rank[r].push_back(batch[i].id);
    plan.assignment.estimated_load[r] += scores[i];
    if (target[i] != batch[i].origin_rank) {
      plan.exchange.moves.push_back({batch[i].id, batch[i].origin_rank, target[i]});
    }
  }
  return plan;
}

/// Runtime Balance: LPT over table-estimated runtimes.
inline BalancePlan plan_balance(std::span<const SampleSpec> batch,
                                const RuntimeTable& table, int num_ranks) {
  return plan_balance_by(batch, num_ranks, [&](const SampleSpec& s) {
    return estimate_runtime(table, s.seqlen);
  });
}

inline Layout apply_exchange(Layout layout, const ExchangePlan& plan) {
  for (const auto& mv : plan.moves) {
    const auto rank_count = static_cast<Rank>(layout.size());
    if (mv.from_rank < 0 || mv.from_rank >= rank_count || mv.to_rank < 0 ||
        mv.to_rank >= rank_count) {
      fail(ErrorCode::kInvalidRank, "exchange move references a rank outside the layout");
    }
    bool known = false;
    for (const auto& rank : layout) {
      if (std::find(rank.begin(), rank.end(), mv.sample_id) != rank.end()) {
        known = true;
        break;
      }
    }
    std::ostringstream os;
    if (!known) {
      os << "sample " << mv.sample_id << " is not in the layout";
      fail(ErrorCode::kUnknownSample, os.str());
    }
    auto& from = layout[static_cast<std::size_t>(mv.from_rank)];
    auto it = std::find(from.begin(), from.end(), mv.sample_id);
    if (it == from.end()) {
      os << "sample " << mv.sample_id << " is not on rank " << mv.from_rank;
      fail(ErrorCode::kSampleNotOnFromRank, os.str());
    }
    from.erase(it);
    layout[static_cast<std::size_t>(mv.to_rank)].push_back(mv.sample_id);
  }
  return layout;
}

inline constexpr std::size_t kDefaultOracleCap = 14;

namespace detail {

class MakespanSearch {
 public:
  MakespanSearch(std::vector<double> jobs, std::size_t ranks, double upper)
      : jobs_(std::move(jobs)), loads_(ranks, 0.0), best_(upper) {
    suffix_.assign(jobs_.size() + 1, 0.0);
    for (std::size_t i = jobs_.size(); i-- > 0;) suffix_[i] = suffix_[i + 1] + jobs_[i];
  }

  double run() {
    descend(0, 0.0);
    return best_;
  }

 private:
  void descend(std::size_t next, double current_max) {
    if (current_max >= best_) return;
    if (next == jobs_.size()) {
      best_ = current_max;
      return;
    }
    // Remaining work cannot fit below the average of what's left.
    double total = suffix_[next];
    for (double l : loads_) total += l;
    if (total / static_cast<double>(loads_.size()) >= best_) return;

    std::set<double> tried;
    for (std::size_t r = 0; r < loads_.size(); ++r) {
      // Ranks with equal load are symmetric.
      if (!tried.insert(loads_[r]).second) continue;
      loads_[r] += jobs_[next];
      descend(next + 1, std::max(current_max, loads_[r]));
      loads_[r] -= jobs_[next];
    }
  }

  std::vector<double> jobs_;
  std::vector<double> suffix_;
  std::vector<double> loads_;
  double best_;
};

}  // namespace detail

/// Exact minimum makespan by branch and bound. Intended as a test oracle.
template <typename ScoreFn>
double optimal_makespan_by(std::span<const SampleSpec> batch, int num_ranks,
                           ScoreFn&& score, std::size_t cap = kDefaultOracleCap) {
  if (batch.empty()) return 0.0;
  if (num_ranks < 1) fail(ErrorCode::kInvalidArgument, "num_ranks must be >= 1");
  if (batch.size() > cap) {
    std::ostringstream os;
    os << "batch of " << batch.size() << " samples exceeds oracle cap " << cap;
    fail(ErrorCode::kBatchTooLargeForOracle, os.str());
  }
  std::vector<double> jobs;
  jobs.reserve(batch.size());
  for (const auto& s : batch) jobs.push_back(score(s));
  std::sort(jobs.begin(), jobs.end(), std::greater<>());
  // Every job on one rank is a valid upper bound; nudge it so the search
  // records at least one leaf.
  const double upper = std::nextafter(
      std::accumulate(jobs.begin(), jobs.end(), 0.0) * 2.0 + 1.0, HUGE_VAL);
  detail::MakespanSearch search(std::move(jobs), static_cast<std::size_t>(num_ranks), upper);
  return search.run();
}

inline double optimal_makespan(std::span<const SampleSpec> batch, const RuntimeTable& table,
                               int num_ranks, std::size_t cap = kDefaultOracleCap) {
  return optimal_makespan_by(
      batch, num_ranks, [&](const SampleSpec& s) { return estimate_runtime(table, s.seqlen); },
      cap);
}

}  // namespace trainplan
