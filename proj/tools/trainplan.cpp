// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "trainplan/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = trainplan::cli;
  CLI::App app{"Runtime balancing, checkpoint planning and cluster simulation"};
  app.require_subcommand(1);

  cli::CalibrateOptions calibrate;
  auto* cal = app.add_subcommand("calibrate", "Build a runtime table from measurements");
  cal->add_option("--csv", calibrate.csv, "seqlen,runtime_ms measurements")->required();
  cal->add_option("--out", calibrate.out, "Table JSON to write")->required();

  cli::BalanceOptions balance;
  auto* bal = app.add_subcommand("balance", "Plan runtime balancing for one batch");
  bal->add_option("--table", balance.table, "Runtime table JSON")->required();
  bal->add_option("--batch", balance.batch, "Batch JSON")->required();
  bal->add_option("--ranks", balance.ranks, "Number of ranks")->required()->check(CLI::PositiveNumber);
  bal->add_option("--out", balance.out, "Plan JSON to write")->required();

  cli::PlanAcOptions plan_ac;
  auto* pac = app.add_subcommand("plan-ac", "Plan multi-level activation checkpointing");
  pac->add_option("--graph", plan_ac.graph, "Segment graph JSON")->required();
  pac->add_option("--tiers", plan_ac.tiers, "Tier spec JSON")->required();
  pac->add_option("--mode", plan_ac.mode, "greedy or exact")
      ->check(CLI::IsMember({"greedy", "exact"}));
  pac->add_option("--slot-cap", plan_ac.slot_cap, "Decision slot limit for exact mode");
  pac->add_option("--out", plan_ac.out, "Plan JSON to write")->required();

  cli::SimulateOptions simulate;
  std::uint64_t seed = 0;
  std::string plot_prefix;
  auto* sim = app.add_subcommand("simulate", "Simulate training steps over a batch trace");
  sim->add_option("--config", simulate.config, "Simulation config JSON")->required();
  sim->add_option("--out", simulate.out, "Report JSON to write")->required();
  sim->add_flag("--compare", simulate.compare, "Run all four balancing modes");
  auto* seed_opt = sim->add_option("--seed", seed, "Noise seed (overrides the config)");
  auto* plot_opt = sim->add_option("--plot", plot_prefix, "Prefix for CSV/SVG step series");

  CLI11_PARSE(app, argc, argv);

  if (*cal) return cli::cmd_calibrate(calibrate, std::cout, std::cerr);
  if (*bal) return cli::cmd_balance(balance, std::cout, std::cerr);
  if (*pac) return cli::cmd_plan_ac(plan_ac, std::cout, std::cerr);
  if (*seed_opt) simulate.seed = seed;
  if (*plot_opt) simulate.plot_prefix = plot_prefix;
  return cli::cmd_simulate(simulate, std::cout, std::cerr);
}
