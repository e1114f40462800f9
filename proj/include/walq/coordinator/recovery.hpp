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
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "walq/gcs/gcs.hpp"
#include "walq/plan/plan.hpp"
#include "walq/worker/task_manager.hpp"

namespace walq {

/// Live membership as seen by the coordinator.
struct ClusterView {
  std::vector<WorkerId> live;  // ascending
  std::set<WorkerId> failed;   // every worker known dead
  bool IsLive(WorkerId w) const;
};

/// Heartbeat-based failure detector.
class FailureDetector {
 public:
  explicit FailureDetector(SimTime interval) : interval_(interval) {}
  void Heartbeat(WorkerId w, SimTime now) { last_[w] = now; }
  /// Workers silent for at least the interval and not reported before.
  std::set<WorkerId> DetectFailures(SimTime now);

 private:
  SimTime interval_;
  std::map<WorkerId, SimTime> last_;
  std::set<WorkerId> reported_;
};

struct ReplayTask {
  TaskName name;
  WorkerId owner = kNoWorker;  // kDurableStore under spooling
  std::vector<ChannelId> targets;
  WorkerId assigned = kNoWorker;
};

struct InputTask {
  TaskName name;
  std::vector<ChannelId> targets;
  WorkerId assigned = kNoWorker;
};

struct RecoveryPlan {
  std::set<WorkerId> failed;
  /// Rewound channels and their pre-failure frontier (highest committed seq).
  std::map<ChannelId, int64_t> rewinds;
  /// Source channels moved off a failed worker at their current seq.
  std::map<ChannelId, QueueEntry> reassigned;
  std::vector<ReplayTask> replays;
  std::vector<InputTask> inputs;
  /// Pending replay/input tasks carried over (targets trimmed), per worker.
  std::map<WorkerId, std::vector<QueueEntry>> carried;
  /// New owner of every channel that moves (rewound, reassigned, orphaned).
  std::map<ChannelId, WorkerId> placements;
  /// RestartOnly: replacement id per failed worker.
  std::map<WorkerId, WorkerId> replacements;
  bool restart = false;

  int64_t ReconstructedPartitions() const;
  bool empty() const { return rewinds.empty() && reassigned.empty() && replays.empty() && inputs.empty(); }
};

class UnrecoverableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rewind set closed in reverse topological order, then replay
/// and input tasks for every committed output a rewound channel needs.
RecoveryPlan PlanRecovery(const ValidatedPlan &plan, const GcsState &snapshot, const ClusterView &view,
                          StrategyKind strategy);

/// Assigns workers: rewound stateful channels per stage round-robin over live
/// workers starting at `offset`; everything else round-robin after them.
void PlaceRecovery(const ValidatedPlan &plan, const GcsState &snapshot, const ClusterView &view, RecoveryPlan &rp,
                   size_t offset = 0);

/// Committed (i, K) per seq for a channel, seq 0..frontier.
std::vector<LineageEntry> PrescribedLineageFor(ChannelId channel, const GcsState &snapshot);

/// Restart baseline: every channel back to seq 0, failed workers replaced by
/// fresh ids starting at `next_id`.
RecoveryPlan PlanRestart(const ValidatedPlan &plan, const GcsState &snapshot, const ClusterView &view,
                         WorkerId next_id);

/// The reconciliation write (queues + mapping) for a placed plan.
Transaction BuildReconcileTxn(const ValidatedPlan &plan, const GcsState &snapshot, const RecoveryPlan &rp);

nlohmann::json RecoveryPlanToJson(const RecoveryPlan &rp, int64_t epoch);

/// Barrier management and reconciliation against the GCS.
class Coordinator {
 public:
  Coordinator(const ValidatedPlan *plan, Gcs *gcs, AuditLog *log, StrategyKind strategy)
      : plan_(plan), gcs_(gcs), log_(log), strategy_(strategy) {}

  /// Sets the barrier. Returns false if it was already set (nested failure).
  bool BeginRecovery(SimTime now);
  /// Plans, places and writes the reconciled state, then clears the barrier
  /// under epoch + 1. The flag must be set.
  RecoveryPlan CompleteRecovery(const ClusterView &view, SimTime now, WorkerId next_id = 0);
  /// Both halves back to back.
  RecoveryPlan ExecuteRecovery(const ClusterView &view, SimTime now, WorkerId next_id = 0);

 private:
  const ValidatedPlan *plan_;
  Gcs *gcs_;
  AuditLog *log_;
  StrategyKind strategy_;
};

}  // namespace walq
