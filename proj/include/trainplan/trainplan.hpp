// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trainplan/balance.hpp"
#include "trainplan/cli.hpp"
#include "trainplan/cluster_sim.hpp"
#include "trainplan/error.hpp"
#include "trainplan/fault_tolerance.hpp"
#include "trainplan/io.hpp"
#include "trainplan/mlac_planner.hpp"
#include "trainplan/plot.hpp"
#include "trainplan/runtime_model.hpp"
#include "trainplan/train_state.hpp"
