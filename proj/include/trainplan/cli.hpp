// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations behind the `trainplan` tool. Each returns the
// process exit status and reports failures as one line:
//   error[<Code>]: <message>

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "trainplan/balance.hpp"
#include "trainplan/cluster_sim.hpp"
#include "trainplan/error.hpp"
#include "trainplan/fault_tolerance.hpp"
#include "trainplan/io.hpp"
#include "trainplan/mlac_planner.hpp"
#include "trainplan/plot.hpp"
#include "trainplan/runtime_model.hpp"

namespace trainplan::cli {

// Overrides the snapshot store directory of fault-injection runs.
inline constexpr const char* kStoreDirEnv = "TRAINPLAN_STORE_DIR";
inline constexpr std::uint64_t kDefaultSeed = 20260101;

struct CalibrateOptions {
  std::filesystem::path csv;
  std::filesystem::path out;
};

struct BalanceOptions {
  std::filesystem::path table;
  std::filesystem::path batch;
  int ranks = 1;
  std::filesystem::path out;
};

struct PlanAcOptions {
  std::filesystem::path graph;
  std::filesystem::path tiers;
  std::string mode = "greedy";
  std::size_t slot_cap = kDefaultExactSlotCap;
  std::filesystem::path out;
};

struct SimulateOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  bool compare = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> plot_prefix;
};

namespace detail {

template <typename Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    body();
    return 0;
  } catch (const Error& e) {
    err << "error[" << to_string(e.code()) << "]: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error[Internal]: " << e.what() << "\n";
  }
  return 1;
}

inline std::filesystem::path resolve(const std::filesystem::path& base,
                                     const std::filesystem::path& p) {
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

inline int cmd_calibrate(const CalibrateOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto measurements = parse_measurements_csv(read_text(opt.csv));
    const RuntimeTable table = build_table(measurements);
    write_text(opt.out, dump(to_json(table)));
    out << "breakpoints=" << table.size() << "\n";
  });
}

inline int cmd_balance(const BalanceOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const RuntimeTable table = table_from_json(load_json(opt.table));
    const TraceBatch batch = batch_from_json(load_json(opt.batch));
    const BalancePlan plan = plan_balance(batch.samples, table, opt.ranks);
    auto runtime = [&](const SampleSpec& s) { return estimate_runtime(table, s.seqlen); };
    const double before = makespan(assignment_from_layout(
        batch.samples, origin_layout(batch.samples, opt.ranks), runtime));
    const double after = makespan(plan.assignment);

    Json j = to_json(plan);
    j["summary"] = {{"makespan_before", before},
                    {"makespan_after", after},
                    {"moves", plan.exchange.moves.size()}};
    write_text(opt.out, dump(j));
    out << "makespan_before=" << format_number(before)
        << " makespan_after=" << format_number(after)
        << " moves=" << plan.exchange.moves.size() << "\n";
  });
}

inline int cmd_plan_ac(const PlanAcOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const SegmentGraph graph = graph_from_json(load_json(opt.graph));
    const TierSpec tiers = tiers_from_json(load_json(opt.tiers));
    CheckpointPlan plan;
    if (opt.mode == "exact") {
      plan = plan_exact(graph, tiers, opt.slot_cap);
    } else if (opt.mode == "greedy") {
      plan = plan_greedy(graph, tiers);
    } else {
      fail(ErrorCode::kInvalidArgument, "mode must be 'greedy' or 'exact'");
    }
    const CostBreakdown cost = evaluate_plan(graph, tiers, plan);
    const CostBreakdown vanilla = evaluate_plan(graph, tiers, vanilla_ac_plan(graph));
    Json j = {{"mode", opt.mode},
              {"plan", to_json(plan)},
              {"cost", to_json(cost)},
              {"vanilla_cost", to_json(vanilla)},
              {"vanilla_feasible", fits(vanilla, tiers)}};
    write_text(opt.out, dump(j));
    out << "overhead_ms=" << format_number(cost.total_overhead_ms)
        << " vanilla_overhead_ms=" << format_number(vanilla.total_overhead_ms)
        << " persistent_gpu_bytes=" << cost.persistent_gpu_bytes << "\n";
  });
}

/// Everything `simulate` needs, loaded from one config file.
struct SimulationInputs {
  ClusterConfig cluster;
  RuntimeTable table{{{1, 1.0}}};
  BatchTrace trace;
  std::optional<FailureSchedule> schedule;
  FaultRunOptions fault_options;
};

inline SimulationInputs load_simulation_inputs(const std::filesystem::path& config_path,
                                               std::optional<std::uint64_t> seed,
                                               const std::filesystem::path& out_path) {
  const Json j = load_json(config_path);
  const auto base = config_path.parent_path();
  SimulationInputs in;
  in.cluster = cluster_config_from_json(j);
  in.cluster.noise.seed =
      seed ? *seed : trainplan::detail::parse_guard("cluster config", [&] {
        return j.contains("noise") ? j.at("noise").value("seed", kDefaultSeed) : kDefaultSeed;
      });
  const auto paths = trainplan::detail::parse_guard("cluster config", [&] {
    return std::make_pair(j.at("table").get<std::string>(), j.at("trace").get<std::string>());
  });
  in.table = table_from_json(load_json(detail::resolve(base, paths.first)));
  in.trace = trace_from_json(load_json(detail::resolve(base, paths.second)));

  if (j.contains("faults")) {
    trainplan::detail::parse_guard("faults", [&] {
      const auto& f = j.at("faults");
      in.schedule = schedule_from_json(load_json(
          detail::resolve(base, f.at("schedule").get<std::string>())));
      in.fault_options.snapshot_every = f.value("snapshot_every", std::uint64_t{1});
      in.fault_options.snapshot_cost_ms = f.value("snapshot_cost_ms", 0.0);
      in.fault_options.retention = f.value("retention", std::size_t{2});
      in.fault_options.spare_nodes = f.value("spare_nodes", 0);
      std::filesystem::path store = out_path;
      store += ".store";
      if (f.contains("store_dir")) {
        store = detail::resolve(base, f.at("store_dir").get<std::string>());
      }
      if (const char* env = std::getenv(kStoreDirEnv); env && *env) store = env;
      in.fault_options.store_dir = store;
      return 0;
    });
  }
  return in;
}

inline SimReport simulate_once(const SimulationInputs& in, const ClusterConfig& cluster) {
  if (in.schedule) {
    return run_with_failures(cluster, in.trace, in.table, *in.schedule, in.fault_options);
  }
  return run_simulation(cluster, in.trace, in.table);
}

inline int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const SimulationInputs in = load_simulation_inputs(opt.config, opt.seed, opt.out);
    std::vector<std::pair<std::string, SimReport>> reports;
    if (opt.compare) {
      for (auto mode : kAllModes) {
        ClusterConfig c = in.cluster;
        c.balancing_mode = mode;
        reports.emplace_back(std::string(to_string(mode)), simulate_once(in, c));
      }
    } else {
      reports.emplace_back(std::string(to_string(in.cluster.balancing_mode)),
                           simulate_once(in, in.cluster));
    }

    Json j;
    if (opt.compare) {
      Json all = Json::array();
      for (const auto& [name, r] : reports) all.push_back(to_json(r));
      j = {{"config", to_json(in.cluster)}, {"reports", all}};
    } else {
      j = to_json(reports.front().second);
      j["config"] = to_json(in.cluster);
    }
    write_text(opt.out, dump(j));

    if (opt.plot_prefix) {
      for (const auto& [name, r] : reports) {
        auto csv = *opt.plot_prefix;
        csv += "_" + name + ".csv";
        write_text(csv, step_series_csv(r));
      }
      auto svg = *opt.plot_prefix;
      svg += "_makespan.svg";
      write_text(svg, makespan_svg(reports));
    }
    for (const auto& [name, r] : reports) {
      out << "mode=" << name << " wallclock_ms=" << format_number(r.wallclock_ms)
          << " mean_imbalance=" << format_number(r.mean_imbalance)
          << " mfu_proxy=" << format_number(r.mfu_proxy) << "\n";
    }
  });
}

}  // namespace trainplan::cli
