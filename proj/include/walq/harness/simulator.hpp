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

#include <stdexcept>
#include <string>
#include <vector>

#include "walq/gcs/audit_log.hpp"
#include "walq/harness/config.hpp"
#include "walq/plan/plan.hpp"
#include "walq/plan/reference.hpp"

namespace walq {

/// The job can make no progress: no pending event and work remains.
class DeadlockError : public std::runtime_error {
 public:
  DeadlockError(const std::string &what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string &dump() const { return dump_; }

 private:
  std::string dump_;
};

struct RunResult {
  ResultSet result;
  RunMetrics metrics;
  AuditLog log;
};

/// Runs a plan on the simulated cluster. Progress-fraction faults are
/// resolved against a fault-free calibration run with the same config.
RunResult Run(const ValidatedPlan &plan, const SimConfig &config, const FaultSpec &faults = {});

/// Stage-at-a-time execution: a stage starts only after all its producers
/// have committed their sentinels.
RunMetrics RunBlocking(const ValidatedPlan &plan, SimConfig config);

/// Fault time for a progress fraction, from a calibration run.
SimTime CalibratedTime(const ValidatedPlan &plan, const SimConfig &config, double fraction);

}  // namespace walq
