// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// File formats: calibration CSV, and JSON for tables, batch traces, segment
// graphs, tier specs, failure schedules, cluster configs and all outputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "trainplan/balance.hpp"
#include "trainplan/cluster_sim.hpp"
#include "trainplan/digest.hpp"
#include "trainplan/error.hpp"
#include "trainplan/fault_tolerance.hpp"
#include "trainplan/mlac_planner.hpp"
#include "trainplan/runtime_model.hpp"

namespace trainplan {

using Json = nlohmann::ordered_json;

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kFileNotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary so a failed run never leaves a truncated file.
inline void write_text(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) fail(ErrorCode::kStoreUnwritable, "cannot write " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kStoreUnwritable, "cannot write " + path.string() + ": " + ec.message());
}

inline Json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kParseError, std::string(what) + ": " + e.what());
  }
}

inline Json load_json(const std::filesystem::path& path) {
  return parse_json_text(read_text(path), path.string());
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

namespace detail {

// Runs `body`, turning nlohmann type/shape errors into ParseError.
template <typename Fn>
auto parse_guard(std::string_view what, Fn&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Json::exception& e) {
    fail(ErrorCode::kParseError, std::string(what) + ": " + e.what());
  }
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline Bytes parse_capacity(const Json& j) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "unbounded")) {
    return kUnboundedBytes;
  }
  return j.get<Bytes>();
}

inline Json capacity_json(Bytes b) {
  return b == kUnboundedBytes ? Json("unbounded") : Json(b);
}

}  // namespace detail

// ---------------------------------------------------------------- calibration

/// Parses `seqlen,runtime_ms` CSV. Blank lines are skipped.
inline std::vector<Measurement> parse_measurements_csv(std::string_view text) {
  std::vector<Measurement> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = detail::trim(line);
    if (row.empty()) continue;
    if (!header_seen) {
      if (row != "seqlen,runtime_ms") {
        fail(ErrorCode::kParseError, "expected header 'seqlen,runtime_ms', got '" + row + "'");
      }
      header_seen = true;
      continue;
    }
    const auto comma = row.find(',');
    std::ostringstream err;
    err << "line " << line_no << ": expected '<seqlen>,<runtime_ms>', got '" << row << "'";
    if (comma == std::string::npos) fail(ErrorCode::kParseError, err.str());
    try {
      std::size_t used = 0;
      const std::string a = detail::trim(row.substr(0, comma));
      const std::string b = detail::trim(row.substr(comma + 1));
      Measurement m;
      m.seqlen = std::stoll(a, &used);
      if (used != a.size()) fail(ErrorCode::kParseError, err.str());
      m.runtime_ms = std::stod(b, &used);
      if (used != b.size()) fail(ErrorCode::kParseError, err.str());
      out.push_back(m);
    } catch (const std::logic_error&) {
      fail(ErrorCode::kParseError, err.str());
    }
  }
  if (!header_seen) fail(ErrorCode::kParseError, "calibration CSV is empty");
  return out;
}

inline Json to_json(const RuntimeTable& table) {
  Json bps = Json::array();
  for (const auto& bp : table.breakpoints()) {
    bps.push_back({{"seqlen", bp.seqlen}, {"runtime_ms", bp.runtime_ms}});
  }
  return {{"breakpoints", bps}};
}

inline RuntimeTable table_from_json(const Json& j) {
  return detail::parse_guard("runtime table", [&] {
    std::vector<Breakpoint> bps;
    for (const auto& e : j.at("breakpoints")) {
      bps.push_back({e.at("seqlen").get<Tokens>(), e.at("runtime_ms").get<double>()});
    }
    return RuntimeTable(std::move(bps));
  });
}

// ------------------------------------------------------------------- batches

inline SampleSpec sample_from_json(const Json& e, std::int64_t batch_id) {
  SampleSpec s;
  s.id = e.at("id").get<SampleId>();
  s.seqlen = e.at("seqlen").get<Tokens>();
  s.origin_rank = e.at("origin_rank").get<Rank>();
  s.batch_id = e.contains("batch_id") ? e.at("batch_id").get<std::int64_t>() : batch_id;
  return s;
}

inline TraceBatch batch_from_json(const Json& j) {
  return detail::parse_guard("batch", [&] {
    TraceBatch b;
    b.batch_id = j.at("batch_id").get<std::int64_t>();
    for (const auto& e : j.at("samples")) b.samples.push_back(sample_from_json(e, b.batch_id));
    return b;
  });
}

/// Accepts {"batches":[...]} or a single batch object.
inline BatchTrace trace_from_json(const Json& j) {
  BatchTrace t;
  if (j.is_object() && j.contains("batches")) {
    detail::parse_guard("trace", [&] {
      for (const auto& b : j.at("batches")) t.batches.push_back(batch_from_json(b));
      return 0;
    });
  } else {
    t.batches.push_back(batch_from_json(j));
  }
  return t;
}

inline Json to_json(const TraceBatch& b) {
  Json samples = Json::array();
  for (const auto& s : b.samples) {
    samples.push_back({{"id", s.id}, {"seqlen", s.seqlen}, {"origin_rank", s.origin_rank}});
  }
  return {{"batch_id", b.batch_id}, {"samples", samples}};
}

inline Json to_json(const BatchTrace& t) {
  Json batches = Json::array();
  for (const auto& b : t.batches) batches.push_back(to_json(b));
  return {{"batches", batches}};
}

inline Json to_json(const BalancePlan& p) {
  Json moves = Json::array();
  for (const auto& m : p.exchange.moves) {
    moves.push_back({{"sample_id", m.sample_id}, {"from_rank", m.from_rank},
                     {"to_rank", m.to_rank}});
  }
  return {{"batch_id", p.batch_id},
          {"assignment",
           {{"per_rank", p.assignment.per_rank},
            {"estimated_load", p.assignment.estimated_load}}},
          {"exchange", {{"moves", moves}}}};
}

// ---------------------------------------------------------------- checkpoint

inline SegmentGraph graph_from_json(const Json& j) {
  return detail::parse_guard("segment graph", [&] {
    SegmentGraph g;
    for (const auto& s : j.at("segments")) {
      Segment seg;
      seg.input_bytes = s.at("input_bytes").get<Bytes>();
      seg.backward_ms = s.at("backward_ms").get<double>();
      for (const auto& op : s.value("interiors", Json::array())) {
        seg.interiors.push_back({op.at("cost_ms").get<double>(), op.at("act_bytes").get<Bytes>(),
                                 op.value("compute_bound", false)});
      }
      g.segments.push_back(std::move(seg));
    }
    validate(g);
    return g;
  });
}

inline Json to_json(const SegmentGraph& g) {
  Json segs = Json::array();
  for (const auto& s : g.segments) {
    Json ops = Json::array();
    for (const auto& op : s.interiors) {
      ops.push_back({{"cost_ms", op.cost_ms}, {"act_bytes", op.act_bytes},
                     {"compute_bound", op.compute_bound}});
    }
    segs.push_back({{"input_bytes", s.input_bytes}, {"backward_ms", s.backward_ms},
                    {"interiors", ops}});
  }
  return {{"segments", segs}};
}

inline TierSpec tiers_from_json(const Json& j) {
  return detail::parse_guard("tier spec", [&] {
    TierSpec t;
    t.gpu_capacity = detail::parse_capacity(j.at("gpu").at("capacity_bytes"));
    auto tier = [](const Json& e) {
      TransferTier out;
      out.capacity = detail::parse_capacity(e.at("capacity_bytes"));
      out.offload_bytes_per_ms = e.at("offload_bytes_per_ms").get<double>();
      out.prefetch_bytes_per_ms = e.at("prefetch_bytes_per_ms").get<double>();
      return out;
    };
    t.cpu = tier(j.at("cpu"));
    t.disk = tier(j.at("disk"));
    validate(t);
    return t;
  });
}

inline Json to_json(const TierSpec& t) {
  auto tier = [](const TransferTier& x) {
    return Json{{"capacity_bytes", detail::capacity_json(x.capacity)},
                {"offload_bytes_per_ms", x.offload_bytes_per_ms},
                {"prefetch_bytes_per_ms", x.prefetch_bytes_per_ms}};
  };
  return {{"gpu", {{"capacity_bytes", detail::capacity_json(t.gpu_capacity)}}},
          {"cpu", tier(t.cpu)},
          {"disk", tier(t.disk)}};
}

constexpr std::string_view to_string(InputPlacement p) {
  switch (p) {
    case InputPlacement::kKeepGpu: return "KEEP_GPU";
    case InputPlacement::kOffloadCpu: return "OFFLOAD_CPU";
    case InputPlacement::kOffloadDisk: return "OFFLOAD_DISK";
  }
  return "KEEP_GPU";
}

constexpr std::string_view to_string(InteriorPlacement p) {
  switch (p) {
    case InteriorPlacement::kRecompute: return "RECOMPUTE";
    case InteriorPlacement::kSaveGpu: return "SAVE_GPU";
    case InteriorPlacement::kSaveCpu: return "SAVE_CPU";
    case InteriorPlacement::kSaveDisk: return "SAVE_DISK";
  }
  return "RECOMPUTE";
}

inline Json to_json(const CheckpointPlan& p) {
  Json inputs = Json::array();
  for (auto x : p.input_placement) inputs.push_back(to_string(x));
  Json interiors = Json::array();
  for (const auto& seg : p.interior_placement) {
    Json row = Json::array();
    for (auto x : seg) row.push_back(to_string(x));
    interiors.push_back(row);
  }
  return {{"input_placement", inputs}, {"interior_placement", interiors}};
}

inline CheckpointPlan plan_from_json(const Json& j) {
  return detail::parse_guard("checkpoint plan", [&] {
    CheckpointPlan p;
    for (const auto& x : j.at("input_placement")) {
      const auto s = x.get<std::string>();
      if (s == "KEEP_GPU") p.input_placement.push_back(InputPlacement::kKeepGpu);
      else if (s == "OFFLOAD_CPU") p.input_placement.push_back(InputPlacement::kOffloadCpu);
      else if (s == "OFFLOAD_DISK") p.input_placement.push_back(InputPlacement::kOffloadDisk);
      else fail(ErrorCode::kParseError, "unknown input placement '" + s + "'");
    }
    for (const auto& row : j.at("interior_placement")) {
      auto& out = p.interior_placement.emplace_back();
      for (const auto& x : row) {
        const auto s = x.get<std::string>();
        if (s == "RECOMPUTE") out.push_back(InteriorPlacement::kRecompute);
        else if (s == "SAVE_GPU") out.push_back(InteriorPlacement::kSaveGpu);
        else if (s == "SAVE_CPU") out.push_back(InteriorPlacement::kSaveCpu);
        else if (s == "SAVE_DISK") out.push_back(InteriorPlacement::kSaveDisk);
        else fail(ErrorCode::kParseError, "unknown interior placement '" + s + "'");
      }
    }
    return p;
  });
}

inline Json to_json(const CostBreakdown& c) {
  return {{"recompute_ms", c.recompute_ms},
          {"offload_stall_ms", c.offload_stall_ms},
          {"prefetch_stall_ms", c.prefetch_stall_ms},
          {"total_overhead_ms", c.total_overhead_ms},
          {"persistent_gpu_bytes", c.persistent_gpu_bytes},
          {"transient_gpu_bytes", c.transient_gpu_bytes},
          {"cpu_bytes", c.cpu_bytes},
          {"disk_bytes", c.disk_bytes}};
}

// ---------------------------------------------------------------- simulation

inline FailureSchedule schedule_from_json(const Json& j) {
  return detail::parse_guard("failure schedule", [&] {
    FailureSchedule s;
    for (const auto& n : j.value("pre_launch_faulty", Json::array())) {
      s.pre_launch_faulty.insert(n.get<int>());
    }
    for (const auto& c : j.value("crashes", Json::array())) {
      s.crashes.push_back({c.at("step").get<std::uint64_t>(), c.at("rank").get<int>()});
    }
    return s;
  });
}

inline Json to_json(const FailureSchedule& s) {
  Json crashes = Json::array();
  for (const auto& c : s.crashes) crashes.push_back({{"step", c.step}, {"rank", c.rank}});
  return {{"pre_launch_faulty", s.pre_launch_faulty}, {"crashes", crashes}};
}

/// Reads the ClusterConfig fields from a config object; unknown keys such as
/// file paths are left to the caller.
inline ClusterConfig cluster_config_from_json(const Json& j) {
  return detail::parse_guard("cluster config", [&] {
    ClusterConfig c;
    c.num_ranks = j.value("num_ranks", c.num_ranks);
    c.balancing_mode = parse_mode(j.value("balancing_mode", std::string("runtime")));
    c.async_planning = j.value("async_planning", c.async_planning);
    if (j.contains("planner_latency")) {
      const auto& p = j.at("planner_latency");
      c.planner_latency.fixed_ms = p.value("fixed_ms", 0.0);
      c.planner_latency.per_sample_ms = p.value("per_sample_ms", 0.0);
    }
    c.cp_size = j.value("cp_size", c.cp_size);
    c.all2all_ms_per_token = j.value("all2all_ms_per_token", c.all2all_ms_per_token);
    c.allreduce_ms = j.value("allreduce_ms", c.allreduce_ms);
    if (j.contains("flops_coeffs")) {
      c.flops_coeffs.alpha = j.at("flops_coeffs").value("alpha", c.flops_coeffs.alpha);
      c.flops_coeffs.beta = j.at("flops_coeffs").value("beta", c.flops_coeffs.beta);
    }
    c.peak_flops_per_rank_ms = j.value("peak_flops_per_rank", c.peak_flops_per_rank_ms);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      c.noise.enabled = n.value("enabled", false);
      c.noise.seed = n.value("seed", std::uint64_t{0});
      c.noise.amplitude = n.value("amplitude", 0.0);
    }
    c.validate();
    return c;
  });
}

inline Json to_json(const ClusterConfig& c) {
  return {{"num_ranks", c.num_ranks},
          {"balancing_mode", to_string(c.balancing_mode)},
          {"async_planning", c.async_planning},
          {"planner_latency",
           {{"fixed_ms", c.planner_latency.fixed_ms},
            {"per_sample_ms", c.planner_latency.per_sample_ms}}},
          {"cp_size", c.cp_size},
          {"all2all_ms_per_token", c.all2all_ms_per_token},
          {"allreduce_ms", c.allreduce_ms},
          {"flops_coeffs", {{"alpha", c.flops_coeffs.alpha}, {"beta", c.flops_coeffs.beta}}},
          {"peak_flops_per_rank", c.peak_flops_per_rank_ms},
          {"noise",
           {{"enabled", c.noise.enabled},
            {"seed", c.noise.seed},
            {"amplitude", c.noise.amplitude}}}};
}

inline Json to_json(const SimReport& r) {
  Json steps = Json::array();
  for (const auto& s : r.per_step) {
    steps.push_back({{"batch_id", s.batch_id},
                     {"makespan_ms", s.makespan_ms},
                     {"idle_fraction", s.idle_fraction},
                     {"imbalance_ratio", s.imbalance_ratio},
                     {"planning_stall_ms", s.planning_stall_ms},
                     {"moves", s.moves}});
  }
  Json j = {{"mode", to_string(r.mode)},
            {"per_step", steps},
            {"totals",
             {{"wallclock_ms", r.wallclock_ms},
              {"mean_imbalance", r.mean_imbalance},
              {"throughput_samples_per_s", r.throughput_samples_per_s},
              {"mfu_proxy", r.mfu_proxy}}},
            {"state_digest", detail::hex64(r.state_digest)}};
  if (r.recovery) {
    const auto& x = *r.recovery;
    j["recovery"] = {{"snapshots_taken", x.snapshots_taken},
                     {"steps_executed", x.steps_executed},
                     {"steps_redone", x.steps_redone},
                     {"crashes", x.crashes},
                     {"snapshot_ms", x.snapshot_ms},
                     {"redo_ms", x.redo_ms},
                     {"healthy_nodes", x.healthy_nodes}};
  }
  return j;
}

}  // namespace trainplan
