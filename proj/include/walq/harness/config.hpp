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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "walq/common/ids.hpp"
#include "walq/worker/task_manager.hpp"

namespace walq {

inline constexpr uint64_t kDefaultSeed = 20240601;
inline constexpr int kConfigFormatVersion = 1;

/// Simulated cost of each action, in time units. One time unit is 1e6 ticks.
struct CostModel {
  double kernel_per_row = 1e-3;
  double task_fixed = 1e-2;
  double net_per_byte = 1e-5;
  double net_per_partition = 5e-3;
  double local_disk_per_byte = 2e-6;
  double durable_per_byte = 4e-5;
  double gcs_txn = 2e-3;
  double detection_interval = 1.0;
  double recovery_cost = 0.1;
};

inline constexpr SimTime kTicksPerUnit = 1'000'000;
SimTime ToTicks(double units);
double ToUnits(SimTime ticks);

struct SimConfig {
  int workers = 4;
  uint64_t seed = kDefaultSeed;
  CostModel cost;
  double read_lag = 0.0;
  FtStrategy strategy;
  bool blocking = false;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Applies a config document ({"version":1, "workers", "seed", "strategy",
/// "batching", "blocking", "read_lag", "cost":{...}}) on top of `base`.
SimConfig ApplyConfigJson(SimConfig base, const nlohmann::json &doc);
SimConfig LoadConfigFile(const std::filesystem::path &path, SimConfig base = {});
nlohmann::json ConfigToJson(const SimConfig &config);

struct FaultTrigger {
  enum class Kind { kProgress, kTime, kCommits };
  Kind kind = Kind::kProgress;
  double value = 0.5;
};

struct Fault {
  std::optional<WorkerId> worker;  // nullopt: pick a live worker at random
  FaultTrigger trigger;
};

struct FaultSpec {
  std::vector<Fault> faults;
  bool empty() const { return faults.empty(); }
};

/// "worker=<id|random>".
std::optional<WorkerId> ParseKillTarget(const std::string &text);
/// "<fraction>" in [0,1], "t=<time>" or "<time>s" for an absolute time, or
/// "commits=<n>".
FaultTrigger ParseTrigger(const std::string &text);

struct RunMetrics {
  SimTime makespan = 0;
  int64_t recoveries = 0;
  int64_t rewinds = 0;
  int64_t replays = 0;
  int64_t input_tasks = 0;
  int64_t reconstructed = 0;
  int64_t committed_tasks = 0;
  int64_t task_attempts = 0;
  int64_t push_failures = 0;
  uint64_t bytes_pushed = 0;
  uint64_t bytes_collected = 0;
  uint64_t bytes_local = 0;
  uint64_t bytes_durable = 0;
  uint64_t bytes_replayed = 0;
  uint64_t lineage_bytes = 0;
  uint64_t txn_count = 0;
  uint64_t result_digest = 0;
  double overhead = 1.0;
};

/// One "key=value" line per field, fixed order.
std::string MetricsToKeyValue(const RunMetrics &m);
nlohmann::json MetricsToJson(const RunMetrics &m);

}  // namespace walq
