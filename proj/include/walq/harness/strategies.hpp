// Copyright 2026 The walq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

#include "walq/harness/simulator.hpp"

namespace walq {

struct StrategyRow {
  FtStrategy strategy;
  RunMetrics metrics;
};

/// One run per {wal, spool, restart} x {dynamic, static:B} cell, overhead
/// relative to the fault-free restart/dynamic run (no fault tolerance work).
std::vector<StrategyRow> CompareStrategies(const ValidatedPlan &plan, const SimConfig &config,
                                           const FaultSpec &faults, int64_t static_batch);

/// Fixed-width text table of rows.
std::string FormatStrategyTable(const std::vector<StrategyRow> &rows);

}  // namespace walq
