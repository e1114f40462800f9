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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "walq/gcs/gcs.hpp"
#include "walq/plan/plan.hpp"
#include "walq/worker/choose_inputs.hpp"
#include "walq/worker/exchange.hpp"

namespace walq {

enum class StrategyKind { kWal, kSpool, kRestart };

const char *StrategyName(StrategyKind s);
/// Parses "wal", "spool" or "restart".
StrategyKind ParseStrategy(const std::string &text);

struct FtStrategy {
  StrategyKind kind = StrategyKind::kWal;
  BatchingPolicy batching;
};

/// Per-channel execution state held by the owning worker.
struct ChannelRuntime {
  ChannelState state;
  std::vector<int64_t> watermarks;  // InputRequirement, length C
  int64_t next_seq = 0;
};

enum class ExecOutcome { kExecuted, kNoEligibleInput, kPushFailed, kAborted, kMissing };

const char *ExecOutcomeName(ExecOutcome o);

struct ConsumedInput {
  TaskName name;
  uint64_t digest = 0;
};

/// Everything a task attempt computes before any side effect.
struct PreparedTask {
  QueueEntry entry;
  LineageEntry lineage;
  std::vector<ConsumedInput> inputs;
  ChannelState new_state;
  std::vector<int64_t> new_watermarks;
  /// Output slice per target channel (kSinkTarget for a sink stage).
  std::map<ChannelId, Batch> slices;
  /// Subset of `slices` keys that this attempt pushes.
  std::vector<ChannelId> push_targets;
  std::optional<int64_t> sentinel;
  std::optional<TaskName> successor;
  uint64_t input_rows = 0;
  uint64_t output_rows = 0;
  bool missing_backup = false;

  uint64_t PushBytes() const;
};

/// Read-only context for input selection.
struct ExecContext {
  const Gcs *gcs = nullptr;
  SimTime now = 0;
  BatchingPolicy policy;
  bool blocking = false;
  /// Durable store used by replays under spooling; null otherwise.
  const LocalBackupStore *durable = nullptr;
};

/// Delivery side of the push exchange as seen by a producer.
class PushTransport {
 public:
  virtual ~PushTransport() = default;
  virtual bool TargetAlive(ChannelId target) const = 0;
  virtual void Deliver(ChannelId target, const TaskName &name, const Batch &slice) = 0;
};

/// Builds the completion transaction for a prepared attempt: lineage commit
/// for channel tasks, dequeue (+ location) for replay and input tasks.
Transaction BuildCompletionTxn(const PreparedTask &task, WorkerId worker, int64_t epoch, StrategyKind strategy,
                               int64_t attempt);

/// The per-worker task loop state: exchange buffer, upstream backups and
/// channel runtimes.
class TaskManager {
 public:
  TaskManager(WorkerId id, const ValidatedPlan *plan) : id_(id), plan_(plan) {}

  WorkerId id() const { return id_; }
  ExchangeBuffer &buffer() { return buffer_; }
  const ExchangeBuffer &buffer() const { return buffer_; }
  LocalBackupStore &backups() { return backups_; }
  const LocalBackupStore &backups() const { return backups_; }
  const ChannelRuntime *runtime(ChannelId ch) const;

  /// Eligible contiguous committed outputs per upstream index for a channel
  /// at its current watermarks (gating applied).
  std::vector<int64_t> EligibleCounts(ChannelId ch, const std::vector<int64_t> &watermarks,
                                      const ExecContext &ctx) const;

  /// Selects inputs and runs the kernel without side effects. Returns nullopt
  /// when no input is eligible.
  std::optional<PreparedTask> Prepare(const QueueEntry &entry, const ExecContext &ctx) const;

  /// Installs the effects of a committed attempt: runtime, consumed marks and
  /// backups (local, or `durable` under spooling).
  void ApplyCommit(const PreparedTask &task, StrategyKind strategy, LocalBackupStore *durable);

  /// Runs one queue entry synchronously: choose inputs, execute, push, commit.
  ExecOutcome TryExecute(const QueueEntry &entry, Gcs &gcs, PushTransport &transport, SimTime now,
                         const FtStrategy &strategy, LocalBackupStore *durable = nullptr, bool blocking = false);

  /// Loses every piece of volatile state (worker death or query restart).
  void Reset();

 private:
  ChannelRuntime BaseRuntime(const QueueEntry &entry) const;
  std::optional<PreparedTask> PrepareChannel(const QueueEntry &entry, const ExecContext &ctx) const;
  PreparedTask PrepareReplay(const QueueEntry &entry, const ExecContext &ctx) const;
  PreparedTask PrepareInput(const QueueEntry &entry) const;
  std::map<ChannelId, Batch> SliceOutput(StageId stage, const Batch &output) const;

  WorkerId id_;
  const ValidatedPlan *plan_;
  ExchangeBuffer buffer_;
  LocalBackupStore backups_;
  std::map<ChannelId, ChannelRuntime> runtimes_;
};

}  // namespace walq
