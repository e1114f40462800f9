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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "walq/gcs/audit_log.hpp"
#include "walq/gcs/gcs.hpp"

namespace walq {

/// Online/offline checker of an audit trace. Feed records in log order.
/// Checks: transaction replay (status and pre/post digests), L/T
/// disjointness, gating, no commit after a failed push, output digest
/// stability across re-executions, consumed == committed payloads, and that
/// re-executions stay within declared recoveries.
class Auditor {
 public:
  void Observe(const nlohmann::json &record);
  const std::vector<std::string> &violations() const { return violations_; }
  const GcsState &state() const { return shadow_; }

 private:
  void OnTxn(const nlohmann::json &rec);
  void OnExec(const nlohmann::json &rec);
  void OnRecovery(const nlohmann::json &rec);
  void Violation(std::string text) { violations_.push_back(std::move(text)); }

  GcsState shadow_;
  std::map<int64_t, nlohmann::json> execs_;  // attempt -> exec record
  std::set<int64_t> failed_pushes_;
  std::map<TaskName, std::map<ChannelId, uint64_t>> committed_out_;
  std::map<ChannelId, int64_t> rewind_allowed_;  // channel -> frontier
  std::set<TaskName> declared_replays_;
  std::set<TaskName> declared_inputs_;
  std::vector<std::string> violations_;
};

std::vector<std::string> AuditTrace(const AuditLog &log);

}  // namespace walq
