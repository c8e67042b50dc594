// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Snapshot store, pre-launch health gating and crash/resume replay on top of
// the cluster simulator.
//
// On disk a snapshot is two files in the store directory:
//   snap_<step>.bin  payload (magic + little-endian u64 fields)
//   snap_<step>.sum  16 lowercase hex digits of the FNV-1a 64 payload hash
// Both are written under a ".tmp" suffix and renamed into place, payload
// first, so a record is visible only once its checksum file exists.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "trainplan/cluster_sim.hpp"
#include "trainplan/digest.hpp"
#include "trainplan/error.hpp"
#include "trainplan/train_state.hpp"

namespace trainplan {

struct SnapshotRecord {
  std::uint64_t step = 0;
  std::vector<std::uint8_t> payload;
  std::uint64_t checksum = 0;
  std::uint64_t created_at = 0;
};

// Thrown by the test hook that simulates a process dying mid-publish.
class InjectedCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PublishFault { kNone, kCrashBeforeRename };

namespace detail {

inline constexpr std::array<std::uint8_t, 8> kSnapshotMagic = {'T', 'P', 'S', 'N',
                                                               'A', 'P', '0', '1'};
inline constexpr std::size_t kSnapshotWords = 7;

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::vector<std::uint8_t> encode(const TrainState& s, std::uint64_t created_at) {
  std::vector<std::uint8_t> out(kSnapshotMagic.begin(), kSnapshotMagic.end());
  for (std::uint64_t w : {created_at, s.step, s.model_digest, s.optimizer_digest,
                          s.cursor.batch_index, s.cursor.offset, s.rng_state}) {
    put_u64(out, w);
  }
  return out;
}

inline std::optional<std::pair<TrainState, std::uint64_t>> decode(
    const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != kSnapshotMagic.size() + 8 * kSnapshotWords ||
      !std::equal(kSnapshotMagic.begin(), kSnapshotMagic.end(), bytes.begin())) {
    return std::nullopt;
  }
  const std::uint8_t* p = bytes.data() + kSnapshotMagic.size();
  TrainState s;
  const std::uint64_t created_at = get_u64(p);
  s.step = get_u64(p + 8);
  s.model_digest = get_u64(p + 16);
  s.optimizer_digest = get_u64(p + 24);
  s.cursor.batch_index = get_u64(p + 32);
  s.cursor.offset = get_u64(p + 40);
  s.rng_state = get_u64(p + 48);
  return std::make_pair(s, created_at);
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return out;
}

inline std::optional<std::vector<std::uint8_t>> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& p, const std::uint8_t* data,
                       std::size_t size) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  out.flush();
  if (!out) fail(ErrorCode::kStoreUnwritable, "cannot write " + p.string());
}

// Parses "snap_<digits>.bin"; anything else (including temp files) is ignored.
inline std::optional<std::uint64_t> step_from_name(const std::string& name) {
  constexpr std::string_view kPrefix = "snap_";
  constexpr std::string_view kSuffix = ".bin";
  if (name.size() <= kPrefix.size() + kSuffix.size() || !name.starts_with(kPrefix) ||
      !name.ends_with(kSuffix)) {
    return std::nullopt;
  }
  const char* first = name.data() + kPrefix.size();
  const char* last = name.data() + name.size() - kSuffix.size();
  std::uint64_t step = 0;
  auto [ptr, ec] = std::from_chars(first, last, step);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return step;
}

}  // namespace detail

/// Directory-backed snapshot store with a single writer.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) {
      fail(ErrorCode::kStoreUnwritable, "cannot create snapshot store " + dir_.string());
    }
    for (const auto& rec : load_valid()) next_seq_ = std::max(next_seq_, rec.created_at + 1);
  }

  const std::filesystem::path& dir() const { return dir_; }

  static std::filesystem::path payload_path(const std::filesystem::path& dir, std::uint64_t step) {
    return dir / ("snap_" + std::to_string(step) + ".bin");
  }
  static std::filesystem::path sum_path(const std::filesystem::path& dir, std::uint64_t step) {
    return dir / ("snap_" + std::to_string(step) + ".sum");
  }

  /// Publishes `state` atomically, then prunes records beyond `retention`.
  SnapshotRecord take_snapshot(const TrainState& state, std::size_t retention,
                               PublishFault fault = PublishFault::kNone) {
    if (retention < 1) fail(ErrorCode::kInvalidArgument, "retention must be >= 1");
    SnapshotRecord rec;
    rec.step = state.step;
    rec.created_at = next_seq_;
    rec.payload = detail::encode(state, rec.created_at);
    if (!detail::decode(rec.payload)) {
      fail(ErrorCode::kSerializationFailure, "snapshot payload failed to round-trip");
    }
    rec.checksum = fnv1a(rec.payload);
    const std::string sum = detail::hex64(rec.checksum) + "\n";

    const auto bin = payload_path(dir_, rec.step);
    const auto chk = sum_path(dir_, rec.step);
    auto bin_tmp = bin;
    bin_tmp += ".tmp";
    auto chk_tmp = chk;
    chk_tmp += ".tmp";
    detail::write_file(bin_tmp, rec.payload.data(), rec.payload.size());
    detail::write_file(chk_tmp, reinterpret_cast<const std::uint8_t*>(sum.data()), sum.size());
    if (fault == PublishFault::kCrashBeforeRename) {
      throw InjectedCrash("crash injected before publishing snapshot " +
                          std::to_string(rec.step));
    }
    // Drop any stale checksum first so the new payload is never paired with it.
    std::error_code ec;
    std::filesystem::remove(chk, ec);
    std::filesystem::rename(bin_tmp, bin, ec);
    if (!ec) std::filesystem::rename(chk_tmp, chk, ec);
    if (ec) fail(ErrorCode::kStoreUnwritable, "cannot publish snapshot: " + ec.message());
    ++next_seq_;

    auto valid = valid_steps();
    while (valid.size() > retention) {
      remove_record(valid.front());
      valid.erase(valid.begin());
    }
    return rec;
  }

  /// Steps of all records whose checksum verifies, ascending.
  std::vector<std::uint64_t> valid_steps() const {
    std::vector<std::uint64_t> steps;
    for (const auto& rec : load_valid()) steps.push_back(rec.step);
    return steps;
  }

  /// Newest record whose checksum verifies; corrupt records are skipped.
  TrainState restore_latest() const {
    auto records = load_valid();
    if (records.empty()) {
      fail(ErrorCode::kNoValidSnapshot, "no valid snapshot in " + dir_.string());
    }
    return detail::decode(records.back().payload)->first;
  }

  /// Removes every snapshot file, including temporaries.
  void clear() {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
      const auto name = entry.path().filename().string();
      if (name.starts_with("snap_")) std::filesystem::remove(entry.path(), ec);
    }
    next_seq_ = 0;
  }

 private:
  std::vector<SnapshotRecord> load_valid() const {
    std::vector<SnapshotRecord> out;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
      const auto step = detail::step_from_name(entry.path().filename().string());
      if (!step) continue;
      auto payload = detail::read_bytes(entry.path());
      auto sum = detail::read_bytes(sum_path(dir_, *step));
      if (!payload || !sum) continue;
      const std::uint64_t checksum = fnv1a(*payload);
      const std::string expected = detail::hex64(checksum) + "\n";
      if (std::string(sum->begin(), sum->end()) != expected) continue;
      auto decoded = detail::decode(*payload);
      if (!decoded || decoded->first.step != *step) continue;
      out.push_back({*step, std::move(*payload), checksum, decoded->second});
    }
    std::sort(out.begin(), out.end(),
              [](const SnapshotRecord& a, const SnapshotRecord& b) { return a.step < b.step; });
    return out;
  }

  void remove_record(std::uint64_t step) {
    std::error_code ec;
    // Checksum first: a half-removed record must read as invalid, not valid.
    std::filesystem::remove(sum_path(dir_, step), ec);
    std::filesystem::remove(payload_path(dir_, step), ec);
  }

  std::filesystem::path dir_;
  std::uint64_t next_seq_ = 0;
};

struct CrashEvent {
  std::uint64_t step = 1;
  int rank = 0;

  friend bool operator==(const CrashEvent&, const CrashEvent&) = default;
};

struct FailureSchedule {
  std::set<int> pre_launch_faulty;
  std::vector<CrashEvent> crashes;
  friend bool operator==(const FailureSchedule&, const FailureSchedule&) = default;
};

inline std::vector<int> health_check(const std::vector<int>& nodes,
                                     const FailureSchedule& schedule, std::size_t min_nodes) {
  if (min_nodes < 1) fail(ErrorCode::kInvalidArgument, "min_nodes must be >= 1");
  std::vector<int> healthy;
  for (int node : nodes) {
    if (!schedule.pre_launch_faulty.contains(node)) healthy.push_back(node);
  }
  if (healthy.size() < min_nodes) {
    std::ostringstream os;
    os << healthy.size() << " healthy nodes remain, at least " << min_nodes << " required";
    fail(ErrorCode::kInsufficientHealthyNodes, os.str());
  }
  return healthy;
}

struct FaultRunOptions {
  std::filesystem::path store_dir;
  std::uint64_t snapshot_every = 1;
  double snapshot_cost_ms = 0.0;
  std::size_t retention = 2;
  // Nodes beyond num_ranks available to replace ones failing the health check.
  int spare_nodes = 0;
};

/// Replays the trace with periodic snapshots and the scheduled crashes.
///
/// A step-0 baseline snapshot is always taken. After step s completes, a
/// snapshot is taken when s is a multiple of snapshot_every. A crash at step s
/// happens after that step's work was spent but before it commits; the run
/// restores the newest valid snapshot and re-executes from there with a cold
/// planner pipeline. Each crash event fires once.
inline SimReport run_with_failures(const ClusterConfig& config, const BatchTrace& trace,
                                   const RuntimeTable& table, const FailureSchedule& schedule,
                                   const FaultRunOptions& options) {
  Simulator sim(config, trace, table);
  if (options.snapshot_every < 1) {
    fail(ErrorCode::kInvalidArgument, "snapshot_every must be >= 1");
  }
  if (!(options.snapshot_cost_ms >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "snapshot_cost_ms must be >= 0");
  }
  for (const auto& c : schedule.crashes) {
    if (c.step < 1 || c.step > sim.num_steps() || c.rank < 0 || c.rank >= config.num_ranks) {
      std::ostringstream os;
      os << "crash at step " << c.step << " on rank " << c.rank << " is outside the run";
      fail(ErrorCode::kInvalidSchedule, os.str());
    }
  }
  if (options.spare_nodes < 0) fail(ErrorCode::kInvalidArgument, "spare_nodes must be >= 0");

  RecoveryStats stats;
  std::vector<int> pool(static_cast<std::size_t>(config.num_ranks + options.spare_nodes));
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  stats.healthy_nodes =
      health_check(pool, schedule, static_cast<std::size_t>(config.num_ranks));

  SnapshotStore store(options.store_dir);
  store.clear();

  double wallclock = 0.0;
  auto snapshot = [&](const TrainState& s) {
    store.take_snapshot(s, options.retention);
    wallclock += options.snapshot_cost_ms;
    stats.snapshot_ms += options.snapshot_cost_ms;
    ++stats.snapshots_taken;
  };

  TrainState state = sim.initial();
  snapshot(state);

  std::vector<bool> fired(schedule.crashes.size(), false);
  std::vector<StepRecord> records(sim.num_steps());
  double previous_ms = 0.0;
  bool warm = false;
  std::size_t attempted = 0;  // furthest step index ever started, exclusive
  while (state.step < sim.num_steps()) {
    const auto k = static_cast<std::size_t>(state.step);
    const StepRecord rec =
        sim.run_step(k, warm ? std::optional<double>(previous_ms) : std::nullopt);
    const double cost = rec.cost_ms(config.allreduce_ms);
    wallclock += cost;
    ++stats.steps_executed;
    if (k < attempted) {
      ++stats.steps_redone;
      stats.redo_ms += cost;
    }
    attempted = std::max(attempted, k + 1);

    bool crashed = false;
    for (std::size_t e = 0; e < schedule.crashes.size(); ++e) {
      if (!fired[e] && schedule.crashes[e].step == k + 1) {
        fired[e] = true;
        crashed = true;
        break;
      }
    }
    if (crashed) {
      ++stats.crashes;
      try {
        state = store.restore_latest();
      } catch (const Error& e) {
        fail(ErrorCode::kUnrecoverableCrash, std::string("cannot resume: ") + e.what());
      }
      warm = false;
      continue;
    }

    records[k] = rec;
    previous_ms = rec.makespan_ms;
    warm = true;
    state = sim.advance(state, k);
    if (state.step % options.snapshot_every == 0) snapshot(state);
  }

  SimReport report = sim.finalize(std::move(records), wallclock, state);
  report.recovery = std::move(stats);
  return report;
}

}  // namespace trainplan
