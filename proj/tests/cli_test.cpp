// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "trainplan/cli.hpp"

namespace trainplan::cli {
namespace {

namespace fs = std::filesystem;
const fs::path kData = TRAINPLAN_DATA_DIR;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("trainplan_cli_" + std::string(::testing::UnitTest::GetInstance()
                                               ->current_test_info()
                                               ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path file(const std::string& name, const std::string& text = {}) const {
    const fs::path p = dir_ / name;
    if (!text.empty()) write_text(p, text);
    return p;
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

TEST_F(CliTest, CalibrateWritesTable) {
  const auto out = file("table.json");
  ASSERT_EQ(cmd_calibrate({kData / "measurements.csv", out}, out_, err_), 0) << err_.str();
  EXPECT_EQ(out_.str(), "breakpoints=3\n");
  EXPECT_EQ(table_from_json(load_json(out)),
            RuntimeTable({{1000, 10.0}, {2000, 30.0}, {4000, 100.0}}));
}

TEST_F(CliTest, CalibrateAveragesDuplicates) {
  const auto csv = file("dup.csv", "seqlen,runtime_ms\n1000,10\n1000,14\n");
  const auto out = file("table.json");
  ASSERT_EQ(cmd_calibrate({csv, out}, out_, err_), 0);
  EXPECT_EQ(table_from_json(load_json(out)), RuntimeTable({{1000, 12.0}}));
}

TEST_F(CliTest, CalibrateHeaderOnlyFails) {
  const auto csv = file("empty.csv", "seqlen,runtime_ms\n");
  EXPECT_EQ(cmd_calibrate({csv, file("t.json")}, out_, err_), 1);
  EXPECT_NE(err_.str().find("EmptyMeasurements"), std::string::npos) << err_.str();
  EXPECT_FALSE(fs::exists(dir_ / "t.json"));
}

TEST_F(CliTest, BalanceSample) {
  const auto out = file("plan.json");
  ASSERT_EQ(cmd_balance({kData / "table.json", kData / "batch.json", 2, out}, out_, err_), 0)
      << err_.str();
  EXPECT_EQ(out_.str(), "makespan_before=31 makespan_after=17 moves=3\n");
  const Json j = load_json(out);
  EXPECT_EQ(j.at("summary").at("makespan_after").get<double>(), 17.0);
}

TEST_F(CliTest, BalanceSingleRankMovesNothing) {
  ASSERT_EQ(cmd_balance({kData / "table.json", kData / "batch.json", 1, file("p.json")}, out_,
                        err_),
            0);
  EXPECT_EQ(out_.str(), "makespan_before=31 makespan_after=31 moves=0\n");
}

TEST_F(CliTest, BalanceMixedBatchIdsFails) {
  const auto batch = file("mixed.json", R"({"batch_id": 0, "samples": [
      {"id": 1, "seqlen": 500, "origin_rank": 0},
      {"id": 2, "seqlen": 500, "origin_rank": 0, "batch_id": 1}]})");
  EXPECT_EQ(cmd_balance({kData / "table.json", batch, 2, file("p.json")}, out_, err_), 1);
  EXPECT_NE(err_.str().find("MixedBatchIds"), std::string::npos) << err_.str();
}

TEST_F(CliTest, PlanAcExactUnbounded) {
  const auto out = file("ac.json");
  ASSERT_EQ(cmd_plan_ac({kData / "graph.json", kData / "tiers.json", "exact", 12, out}, out_,
                        err_),
            0)
      << err_.str();
  const Json j = load_json(out);
  EXPECT_EQ(j.at("cost").at("total_overhead_ms").get<double>(), 0.0);
  EXPECT_TRUE(j.at("vanilla_feasible").get<bool>());
}

TEST_F(CliTest, PlanAcGreedyNoWorseThanVanilla) {
  const auto tiers = file("tiers.json", R"({"gpu": {"capacity_bytes": 500000000},
      "cpu": {"capacity_bytes": "unbounded", "offload_bytes_per_ms": 100000000,
              "prefetch_bytes_per_ms": 100000000},
      "disk": {"capacity_bytes": "unbounded", "offload_bytes_per_ms": 1000000,
               "prefetch_bytes_per_ms": 1000000}})");
  const auto out = file("ac.json");
  ASSERT_EQ(cmd_plan_ac({kData / "graph.json", tiers, "greedy", 12, out}, out_, err_), 0)
      << err_.str();
  const Json j = load_json(out);
  EXPECT_LE(j.at("cost").at("total_overhead_ms").get<double>(),
            j.at("vanilla_cost").at("total_overhead_ms").get<double>());
}

TEST_F(CliTest, PlanAcInfeasibleAndBadMode) {
  EXPECT_EQ(cmd_plan_ac({kData / "graph.json", kData / "tiers_tiny.json", "exact", 12,
                         file("a.json")},
                        out_, err_),
            1);
  EXPECT_NE(err_.str().find("Infeasible"), std::string::npos) << err_.str();
  EXPECT_EQ(cmd_plan_ac({kData / "graph.json", kData / "tiers.json", "fastest", 12,
                         file("b.json")},
                        out_, err_),
            1);
}

TEST_F(CliTest, SimulateSingleMode) {
  const auto out = file("report.json");
  SimulateOptions opt;
  opt.config = kData / "simulate_config.json";
  opt.out = out;
  ASSERT_EQ(cmd_simulate(opt, out_, err_), 0) << err_.str();
  const Json j = load_json(out);
  EXPECT_EQ(j.at("mode"), "runtime");
  EXPECT_EQ(j.at("per_step").at(0).at("makespan_ms").get<double>(), 17.0);
  EXPECT_EQ(j.at("totals").at("wallclock_ms").get<double>(), 17.0);
  EXPECT_EQ(j.at("config").at("num_ranks"), 2);
}

TEST_F(CliTest, SimulateCompareOnUniformTrace) {
  file("uniform.json", R"({"batch_id": 0, "samples": [
      {"id": 1, "seqlen": 500, "origin_rank": 0}, {"id": 2, "seqlen": 500, "origin_rank": 1},
      {"id": 3, "seqlen": 500, "origin_rank": 0}, {"id": 4, "seqlen": 500, "origin_rank": 1}]})");
  fs::copy_file(kData / "table.json", dir_ / "table.json");
  const auto config = file("config.json", R"({"table": "table.json", "trace": "uniform.json",
      "num_ranks": 2})");
  SimulateOptions opt;
  opt.config = config;
  opt.out = file("cmp.json");
  opt.compare = true;
  opt.plot_prefix = dir_ / "plot";
  ASSERT_EQ(cmd_simulate(opt, out_, err_), 0) << err_.str();
  const Json j = load_json(opt.out);
  ASSERT_EQ(j.at("reports").size(), 4u);
  for (const auto& r : j.at("reports")) {
    EXPECT_EQ(r.at("per_step").at(0).at("makespan_ms").get<double>(), 10.0) << r.at("mode");
  }
  for (const char* mode : {"none", "seqlen", "flops", "runtime"}) {
    EXPECT_TRUE(fs::exists(dir_ / (std::string("plot_") + mode + ".csv"))) << mode;
  }
  EXPECT_TRUE(fs::exists(dir_ / "plot_makespan.svg"));
}

TEST_F(CliTest, SimulateMissingTableFails) {
  SimulateOptions opt;
  opt.config = kData / "missing_table_config.json";
  opt.out = file("r.json");
  EXPECT_EQ(cmd_simulate(opt, out_, err_), 1);
  EXPECT_NE(err_.str().find("FileNotFound"), std::string::npos) << err_.str();
}

TEST_F(CliTest, SimulateIsByteIdempotent) {
  SimulateOptions a;
  a.config = kData / "mixed_config.json";
  a.out = file("a.json");
  SimulateOptions b = a;
  b.out = file("b.json");
  ASSERT_EQ(cmd_simulate(a, out_, err_), 0) << err_.str();
  ASSERT_EQ(cmd_simulate(b, out_, err_), 0) << err_.str();
  EXPECT_EQ(read_text(a.out), read_text(b.out));

  // An explicit seed replaces the configured one.
  SimulateOptions c = a;
  c.out = file("c.json");
  c.seed = 12345;
  ASSERT_EQ(cmd_simulate(c, out_, err_), 0);
  EXPECT_NE(read_text(a.out), read_text(c.out));
}

TEST_F(CliTest, SimulateWithFaultsReportsRecovery) {
  const fs::path store = dir_ / "store";
  ::setenv(kStoreDirEnv, store.c_str(), 1);
  SimulateOptions opt;
  opt.config = kData / "mixed_faults_config.json";
  opt.out = file("faults.json");
  const int rc = cmd_simulate(opt, out_, err_);
  ::unsetenv(kStoreDirEnv);
  ASSERT_EQ(rc, 0) << err_.str();
  const Json j = load_json(opt.out);
  const auto& rec = j.at("recovery");
  EXPECT_EQ(rec.at("crashes"), 1);
  EXPECT_EQ(rec.at("steps_redone"), 2);
  EXPECT_EQ(rec.at("steps_executed"), 12);
  EXPECT_TRUE(fs::exists(store));

  // The same run without faults ends in the same training state.
  Json plain = load_json(kData / "mixed_faults_config.json");
  plain.erase("faults");
  fs::copy_file(kData / "mixed_table.json", dir_ / "mixed_table.json");
  fs::copy_file(kData / "mixed_trace.json", dir_ / "mixed_trace.json");
  SimulateOptions clean;
  clean.config = file("plain.json", dump(plain));
  clean.out = file("clean.json");
  ASSERT_EQ(cmd_simulate(clean, out_, err_), 0) << err_.str();
  const Json c = load_json(clean.out);
  EXPECT_EQ(c.at("state_digest"), j.at("state_digest"));
  // Step records keep the last execution, so the redone step shows the cold
  // planner stall; makespans are unaffected.
  for (std::size_t k = 0; k < c.at("per_step").size(); ++k) {
    EXPECT_EQ(c.at("per_step").at(k).at("makespan_ms"), j.at("per_step").at(k).at("makespan_ms"));
  }
  EXPECT_EQ(j.at("per_step").at(5).at("planning_stall_ms").get<double>(), 2.0 + 0.1 * 16);
}

}  // namespace
}  // namespace trainplan::cli
