// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Sequence-length to runtime lookup table, the FLOPs proxy it replaces, and
// a global-memory traffic model for fused elementwise kernel chains.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "trainplan/error.hpp"

namespace trainplan {

using Tokens = std::int64_t;

struct Measurement {
  Tokens seqlen = 0;
  double runtime_ms = 0.0;
};

struct Breakpoint {
  Tokens seqlen = 0;
  double runtime_ms = 0.0;

  friend bool operator==(const Breakpoint&, const Breakpoint&) = default;
};

/// Piecewise-linear seqlen -> runtime table.
///
/// Breakpoints are kept sorted with strictly increasing seqlens and strictly
/// positive runtimes; the constructor rejects anything else.
class RuntimeTable {
 public:
  explicit RuntimeTable(std::vector<Breakpoint> breakpoints)
      : breakpoints_(std::move(breakpoints)) {
    if (breakpoints_.empty()) {
      fail(ErrorCode::kEmptyMeasurements, "runtime table has no breakpoints");
    }
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      const auto& bp = breakpoints_[i];
      if (bp.seqlen < 1 || !(bp.runtime_ms > 0.0)) {
        std::ostringstream os;
        os << "breakpoint " << i << " has non-positive seqlen or runtime";
        fail(ErrorCode::kNonPositiveValue, os.str());
      }
      if (i > 0 && breakpoints_[i - 1].seqlen >= bp.seqlen) {
        fail(ErrorCode::kInvalidArgument,
             "runtime table seqlens must be strictly increasing");
      }
    }
  }

  std::span<const Breakpoint> breakpoints() const { return breakpoints_; }
  std::size_t size() const { return breakpoints_.size(); }

  friend bool operator==(const RuntimeTable&, const RuntimeTable&) = default;

 private:
  std::vector<Breakpoint> breakpoints_;
};

/// Sorts measurements by seqlen and averages repeated seqlens.
inline RuntimeTable build_table(std::span<const Measurement> measurements) {
  if (measurements.empty()) {
    fail(ErrorCode::kEmptyMeasurements, "no calibration measurements given");
  }
  std::map<Tokens, std::pair<double, int>> grouped;
  for (const auto& m : measurements) {
    if (m.seqlen < 1) {
      fail(ErrorCode::kNonPositiveValue, "measurement seqlen must be >= 1");
    }
    if (!(m.runtime_ms > 0.0)) {
      fail(ErrorCode::kNonPositiveValue, "measurement runtime must be > 0");
    }
    auto& [sum, count] = grouped[m.seqlen];
    sum += m.runtime_ms;
    ++count;
  }
  std::vector<Breakpoint> bps;
  bps.reserve(grouped.size());
  for (const auto& [seqlen, acc] : grouped) {
    bps.push_back({seqlen, acc.first / acc.second});
  }
  return RuntimeTable(std::move(bps));
}

// Floor applied to extrapolated runtimes so that an estimate is never zero
// or negative.
inline constexpr double kDefaultMinRuntimeMs = 1e-6;

/// Exact at breakpoints, linear in between, and extended past either end with
/// the slope of the nearest segment. A single-breakpoint table is constant.
inline double estimate_runtime(const RuntimeTable& table, Tokens seqlen,
                               double min_runtime_ms = kDefaultMinRuntimeMs) {
  if (seqlen < 1) {
    fail(ErrorCode::kInvalidArgument, "seqlen must be >= 1");
  }
  const auto bps = table.breakpoints();
  if (bps.size() == 1) return bps.front().runtime_ms;

  auto it = std::lower_bound(
      bps.begin(), bps.end(), seqlen,
      [](const Breakpoint& bp, Tokens s) { return bp.seqlen < s; });
  if (it != bps.end() && it->seqlen == seqlen) return it->runtime_ms;

  std::size_t hi;
  if (it == bps.begin()) {
    hi = 1;
  } else if (it == bps.end()) {
    hi = bps.size() - 1;
  } else {
    hi = static_cast<std::size_t>(it - bps.begin());
  }
  const Breakpoint& a = bps[hi - 1];
  const Breakpoint& b = bps[hi];
  const double slope =
      (b.runtime_ms - a.runtime_ms) / static_cast<double>(b.seqlen - a.seqlen);
  const double value = a.runtime_ms + slope * static_cast<double>(seqlen - a.seqlen);
  return std::max(value, min_runtime_ms);
}

struct FlopsCoeffs {
  double alpha = 1.0;  // per token
  double beta = 0.0;   // per token squared

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0)) {
      fail(ErrorCode::kInvalidArgument,
           "FLOPs coefficients must be non-negative and not both zero");
    }
  }
  friend bool operator==(const FlopsCoeffs&, const FlopsCoeffs&) = default;
};

inline double estimate_flops(Tokens seqlen, const FlopsCoeffs& coeffs) {
  const double s = static_cast<double>(seqlen);
  return coeffs.alpha * s + coeffs.beta * s * s;
}

// One operator in a chain. Operator k consumes operator k-1's output in
// addition to its own external inputs.
struct KernelOp {
  double external_input_bytes = 0.0;
  double output_bytes = 0.0;
};

struct KernelChain {
  std::vector<KernelOp> ops;
};

struct TrafficEstimate {
  double naive_bytes = 0.0;
  double fused_bytes = 0.0;

  double ratio() const { return naive_bytes > 0.0 ? fused_bytes / naive_bytes : 1.0; }
};

// Unfused: every operator reads all of its inputs from global memory and
// writes its output back. Fused: only external inputs are read and only the
// last output is written; intermediates never leave on-chip storage.
inline TrafficEstimate fused_traffic(const KernelChain& chain) {
  if (chain.ops.empty()) {
    fail(ErrorCode::kInvalidArgument, "kernel chain is empty");
  }
  TrafficEstimate t;
  double previous_output = 0.0;
  for (std::size_t k = 0; k < chain.ops.size(); ++k) {
    const auto& op = chain.ops[k];
    if (op.external_input_bytes < 0.0 || op.output_bytes < 0.0) {
      fail(ErrorCode::kInvalidArgument, "kernel byte counts must be >= 0");
    }
    const double reads = op.external_input_bytes + (k > 0 ? previous_output : 0.0);
    t.naive_bytes += reads + op.output_bytes;
    t.fused_bytes += op.external_input_bytes;
    previous_output = op.output_bytes;
  }
  t.fused_bytes += chain.ops.back().output_bytes;
  return t;
}

}  // namespace trainplan
