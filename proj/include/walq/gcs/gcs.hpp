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

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "walq/common/ids.hpp"

namespace walq {

class AuditLog;

/// Committed lineage of one task: it consumed `count` outputs from upstream
/// channel `upstream_index`. K == 0 marks an end-of-stream flush.
struct LineageEntry {
  TaskName task;
  int32_t upstream_index = 0;
  int64_t count = 0;
  bool operator==(const LineageEntry &) const = default;
};

/// Fixed-width wire encoding of a lineage record (name + (i, K)).
std::vector<uint8_t> EncodeLineage(const LineageEntry &entry);
constexpr size_t kLineageRecordBytes = 4 + 4 + 8 + 4 + 8;

/// Per-upstream-channel consumed-output counts (length C).
struct InputRequirement {
  std::vector<int64_t> watermarks;
  bool operator==(const InputRequirement &) const = default;
};

enum class QueueKind { kChannel, kReplay, kInput };

/// An outstanding task in G.T. Channel tasks that re-execute committed work
/// carry the lineage they must reproduce in `prescribed`.
struct QueueEntry {
  QueueKind kind = QueueKind::kChannel;
  TaskName name;
  std::optional<LineageEntry> prescribed;
  std::vector<ChannelId> targets;  // replay / input tasks only
  bool operator==(const QueueEntry &) const = default;
};

using TaskQueues = std::map<WorkerId, std::deque<QueueEntry>>;

/// Snapshot-able contents of the control store.
class GcsState {
 public:
  const std::map<TaskName, LineageEntry> &lineage() const { return lineage_; }
  const TaskQueues &tasks() const { return tasks_; }
  const std::map<ChannelId, int64_t> &sentinels() const { return sentinels_; }
  const std::map<TaskName, WorkerId> &locations() const { return locations_; }
  const std::map<ChannelId, WorkerId> &mapping() const { return mapping_; }
  bool control_flag() const { return control_flag_; }
  int64_t epoch() const { return epoch_; }

  std::optional<LineageEntry> Lineage(const TaskName &name) const;
  std::optional<int64_t> Sentinel(ChannelId ch) const;
  WorkerId Location(const TaskName &name) const;
  WorkerId Owner(ChannelId ch) const;
  SimTime AppliedAt(const TaskName &name) const;
  /// Highest committed seq of a channel, or -1.
  int64_t Frontier(ChannelId ch) const;
  /// Number of committed outputs of a channel (frontier + 1).
  int64_t CommittedCount(ChannelId ch) const { return Frontier(ch) + 1; }

  uint64_t Digest() const;
  /// L/T disjointness for fresh channel tasks; returns violation strings.
  std::vector<std::string> CheckInvariants() const;

 private:
  friend class Gcs;
  friend class TxnApplier;
  std::map<TaskName, LineageEntry> lineage_;
  std::map<TaskName, SimTime> applied_at_;
  TaskQueues tasks_;
  std::map<ChannelId, int64_t> sentinels_;
  std::map<TaskName, WorkerId> locations_;
  std::map<ChannelId, WorkerId> mapping_;
  std::map<ChannelId, int64_t> frontier_;
  bool control_flag_ = false;
  int64_t epoch_ = 0;
  uint64_t lineage_sum_ = 0;
  uint64_t location_sum_ = 0;
  uint64_t sentinel_sum_ = 0;
};

namespace gcsop {
struct CheckEpoch { int64_t epoch = 0; };
struct CheckFlagClear {};
struct InsertLineage { LineageEntry entry; bool allow_equal = false; };
struct RemoveTask { WorkerId worker = 0; QueueEntry entry; };
struct AppendTask { WorkerId worker = 0; QueueEntry entry; };
/// Appends the channel's next task, marking it prescribed when G.L already
/// holds its lineage (a rewound channel retracing its steps).
struct AppendSuccessor { WorkerId worker = 0; TaskName name; };
struct SetSentinel { ChannelId channel; int64_t count = 0; };
struct SetLocation { TaskName name; WorkerId worker = 0; };
struct SetFlag {};
struct ClearFlag { int64_t new_epoch = 0; };
struct ReplaceQueues { TaskQueues queues; };
struct SetMapping { ChannelId channel; WorkerId worker = 0; };
/// Drops all lineage, sentinels, and locations (query restart).
struct ResetJob {};
}  // namespace gcsop

using GcsOp = std::variant<gcsop::CheckEpoch, gcsop::CheckFlagClear, gcsop::InsertLineage, gcsop::RemoveTask,
                           gcsop::AppendTask, gcsop::AppendSuccessor, gcsop::SetSentinel, gcsop::SetLocation,
                           gcsop::SetFlag, gcsop::ClearFlag, gcsop::ReplaceQueues, gcsop::SetMapping,
                           gcsop::ResetJob>;

struct Transaction {
  std::string kind;  // "commit", "replay_done", "reconcile", ...
  WorkerId actor = kNoWorker;
  int64_t attempt = -1;
  std::vector<GcsOp> ops;
};

enum class TxnStatus {
  kOk,
  kDuplicateCommit,
  kStaleEpoch,
  kBarrier,
  kFlagAlreadySet,
  kFlagNotSet,
  kBadEpoch,
  kMissingTask,
  kLineageConflict,
  kCrashed,
};

const char *TxnStatusName(TxnStatus s);
TxnStatus ParseTxnStatus(const std::string &s);

/// Thrown from a crash hook to abandon a transaction between sub-writes.
struct SimulatedCrash {};

/// Called after each sub-write with its index; may throw SimulatedCrash.
using CrashHook = std::function<void(size_t)>;

struct TxnResult {
  TxnStatus status = TxnStatus::kOk;
  uint64_t txn_id = 0;
  bool ok() const { return status == TxnStatus::kOk; }
};

struct PollResult {
  std::deque<QueueEntry> tasks;
  bool control_flag = false;
  int64_t epoch = 0;
};

nlohmann::json OpToJson(const GcsOp &op);
GcsOp OpFromJson(const nlohmann::json &j);
nlohmann::json QueueEntryToJson(const QueueEntry &e);
QueueEntry QueueEntryFromJson(const nlohmann::json &j);
nlohmann::json TaskNameToJson(const TaskName &n);
TaskName TaskNameFromJson(const nlohmann::json &j);

/// Applies a transaction to a state all-or-nothing. Shared by the live store
/// and by offline log replay.
TxnStatus ApplyToState(GcsState &state, const Transaction &txn, SimTime now, const CrashHook &hook = {});

/// The global control store. All mutations go through transactions that are
/// serialized internally and recorded in the audit log.
class Gcs {
 public:
  explicit Gcs(AuditLog *log = nullptr) : log_(log) {}

  TxnResult Apply(const Transaction &txn, SimTime now, const CrashHook &hook = {});

  /// Lineage commit for a finished task: lineage insert, dequeue, successor
  /// enqueue, optional sentinel and backup location, in one transaction.
  TxnResult CommitTaskCompletion(WorkerId worker, const QueueEntry &task, const LineageEntry &lineage,
                                 std::optional<TaskName> successor, int64_t epoch, SimTime now,
                                 std::optional<int64_t> sentinel = std::nullopt, WorkerId location = kNoWorker,
                                 int64_t attempt = -1, const CrashHook &hook = {});

  /// Visible committed entry. Entries applied less than read_lag ago read as
  /// absent.
  std::optional<LineageEntry> ReadLineage(const TaskName &name, SimTime now) const;
  /// Time at which an applied entry becomes visible, if it is applied.
  std::optional<SimTime> VisibleAt(const TaskName &name) const;
  PollResult PollTasks(WorkerId worker) const;

  TxnStatus SetControlFlag(SimTime now);
  TxnStatus ClearControlFlag(int64_t new_epoch, SimTime now);

  GcsState Snapshot() const;
  const GcsState &state() const { return state_; }  // single-threaded callers only

  void set_read_lag(SimTime lag) { read_lag_ = lag; }
  SimTime read_lag() const { return read_lag_; }
  uint64_t txn_count() const { return next_txn_id_; }

 private:
  mutable std::mutex mu_;
  GcsState state_;
  AuditLog *log_ = nullptr;
  SimTime read_lag_ = 0;
  uint64_t next_txn_id_ = 0;
};

}  // namespace walq
