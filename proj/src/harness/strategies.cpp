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

#include "walq/harness/strategies.hpp"

#include <cstdio>

namespace walq {

std::vector<StrategyRow> CompareStrategies(const ValidatedPlan &plan, const SimConfig &config,
                                           const FaultSpec &faults, int64_t static_batch) {
  SimConfig base = config;
  base.strategy = FtStrategy{StrategyKind::kRestart, BatchingPolicy::Dynamic()};
  const double baseline = static_cast<double>(Run(plan, base).metrics.makespan);
  std::vector<StrategyRow> rows;
  for (StrategyKind kind : {StrategyKind::kWal, StrategyKind::kSpool, StrategyKind::kRestart}) {
    for (BatchingPolicy policy : {BatchingPolicy::Dynamic(), BatchingPolicy::Static(static_batch)}) {
      SimConfig c = config;
      c.strategy = FtStrategy{kind, policy};
      StrategyRow row{c.strategy, Run(plan, c, faults).metrics};
      row.metrics.overhead = baseline > 0 ? static_cast<double>(row.metrics.makespan) / baseline : 1.0;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string FormatStrategyTable(const std::vector<StrategyRow> &rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-10s %12s %9s %8s %8s %8s %12s %12s\n", "strategy", "batching",
                "makespan", "overhead", "rewinds", "replays", "inputs", "bytes_local", "bytes_durable");
  out += line;
  for (const auto &r : rows) {
    std::snprintf(line, sizeof line, "%-8s %-10s %12.4f %9.4f %8lld %8lld %8lld %12llu %12llu\n",
                  StrategyName(r.strategy.kind), r.strategy.batching.ToString().c_str(), ToUnits(r.metrics.makespan),
                  r.metrics.overhead, static_cast<long long>(r.metrics.rewinds),
                  static_cast<long long>(r.metrics.replays), static_cast<long long>(r.metrics.input_tasks),
                  static_cast<unsigned long long>(r.metrics.bytes_local),
                  static_cast<unsigned long long>(r.metrics.bytes_durable));
    out += line;
  }
  return out;
}

}  // namespace walq
