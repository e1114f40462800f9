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

#include "walq/worker/task_manager.hpp"

#include <stdexcept>

namespace walq {

const char *StrategyName(StrategyKind s) {
  switch (s) {
    case StrategyKind::kWal: return "wal";
    case StrategyKind::kSpool: return "spool";
    case StrategyKind::kRestart: return "restart";
  }
  return "?";
}

StrategyKind ParseStrategy(const std::string &text) {
  if (text == "wal") return StrategyKind::kWal;
  if (text == "spool") return StrategyKind::kSpool;
  if (text == "restart") return StrategyKind::kRestart;
  throw std::invalid_argument("unknown strategy '" + text + "' (want wal, spool or restart)");
}

const char *ExecOutcomeName(ExecOutcome o) {
  switch (o) {
    case ExecOutcome::kExecuted: return "Executed";
    case ExecOutcome::kNoEligibleInput: return "NoEligibleInput";
    case ExecOutcome::kPushFailed: return "PushFailed";
    case ExecOutcome::kAborted: return "Aborted";
    case ExecOutcome::kMissing: return "Missing";
  }
  return "?";
}

uint64_t PreparedTask::PushBytes() const {
  uint64_t n = 0;
  for (const auto &t : push_targets) n += slices.at(t).SerializedSize();
  return n;
}

namespace {

struct SourceStep {
  Batch output;
  int64_t count = 0;
  bool last = false;
};

SourceStep RunSource(const ValidatedPlan &plan, ChannelId ch, int64_t seq) {
  const auto &spec = plan.stage(ch.stage);
  const auto &reader = std::get<InputReader>(spec.op);
  auto splits = plan.SplitsFor(ch);
  SourceStep step;
  if (splits.empty()) {
    if (seq != 0) throw std::logic_error("source task " + TaskName{ch.stage, ch.channel, seq}.ToString() +
                                         " past end of an empty channel");
    step.output = Batch(plan.plan().datasets.at(reader.dataset).schema);
    step.last = true;
    return step;
  }
  if (seq < 0 || static_cast<size_t>(seq) >= splits.size()) {
    throw std::logic_error("source task seq out of range: " + TaskName{ch.stage, ch.channel, seq}.ToString());
  }
  std::vector<Batch> in{splits[static_cast<size_t>(seq)]};
  step.output = ExecuteKernel(spec.op, std::monostate{}, in, InputSide::kMain).output;
  step.count = 1;
  step.last = static_cast<size_t>(seq) + 1 == splits.size();
  return step;
}

}  // namespace

const ChannelRuntime *TaskManager::runtime(ChannelId ch) const {
  auto it = runtimes_.find(ch);
  return it == runtimes_.end() ? nullptr : &it->second;
}

ChannelRuntime TaskManager::BaseRuntime(const QueueEntry &entry) const {
  ChannelId ch = entry.name.Channel();
  const auto &spec = plan_->stage(ch.stage);
  auto it = runtimes_.find(ch);
  if (it != runtimes_.end() && it->second.next_seq == entry.name.seq) return it->second;
  // Fresh runtime: a rewind restarts at seq 0; a reassigned source resumes at
  // its current seq (sources carry no state).
  if (entry.name.seq != 0 && !IsSource(spec.op)) {
    throw std::logic_error("worker " + std::to_string(id_) + " has no runtime for " + entry.name.ToString());
  }
  ChannelRuntime rt;
  rt.state = InitialState(spec.op);
  rt.watermarks.assign(plan_->upstream(ch.stage).size(), 0);
  rt.next_seq = entry.name.seq;
  return rt;
}

std::map<ChannelId, Batch> TaskManager::SliceOutput(StageId stage, const Batch &output) const {
  std::map<ChannelId, Batch> out;
  if (plan_->IsSink(stage)) {
    out[kSinkTarget] = output;
    return out;
  }
  const auto &key = plan_->stage(stage).partition_key;
  for (StageId consumer : plan_->consumers(stage)) {
    int n = plan_->stage(consumer).channels;
    auto parts = PartitionBatch(output, key, n);
    for (int c = 0; c < n; ++c) out[ChannelId{consumer, c}] = std::move(parts[static_cast<size_t>(c)]);
  }
  return out;
}

std::vector<int64_t> TaskManager::EligibleCounts(ChannelId ch, const std::vector<int64_t> &watermarks,
                                                 const ExecContext &ctx) const {
  const auto &ups = plan_->upstream(ch.stage);
  const GcsState &st = ctx.gcs->state();
  std::vector<int64_t> counts(ups.size(), 0);

  if (ctx.blocking) {
    for (StageId p : plan_->producers(ch.stage)) {
      for (int c = 0; c < plan_->stage(p).channels; ++c) {
        if (!st.Sentinel(ChannelId{p, c})) return counts;
      }
    }
  }
  bool build_done = true;
  for (size_t i = 0; i < ups.size(); ++i) {
    if (ups[i].side != InputSide::kBuild) continue;
    auto s = st.Sentinel(ups[i].channel);
    if (!s || watermarks[i] != *s) build_done = false;
  }
  for (size_t i = 0; i < ups.size(); ++i) {
    if (ups[i].side == InputSide::kMain && !build_done) continue;
    ChannelId u = ups[i].channel;
    for (int64_t k = watermarks[i];; ++k) {
      TaskName name{u.stage, u.channel, k};
      if (buffer_.Find(ch, name) == nullptr || !ctx.gcs->ReadLineage(name, ctx.now)) break;
      ++counts[i];
    }
  }
  return counts;
}

std::optional<PreparedTask> TaskManager::Prepare(const QueueEntry &entry, const ExecContext &ctx) const {
  switch (entry.kind) {
    case QueueKind::kChannel: return PrepareChannel(entry, ctx);
    case QueueKind::kReplay: return PrepareReplay(entry, ctx);
    case QueueKind::kInput: return PrepareInput(entry);
  }
  return std::nullopt;
}

std::optional<PreparedTask> TaskManager::PrepareChannel(const QueueEntry &entry, const ExecContext &ctx) const {
  ChannelId ch = entry.name.Channel();
  const auto &spec = plan_->stage(ch.stage);
  ChannelRuntime rt = BaseRuntime(entry);
  PreparedTask task;
  task.entry = entry;
  task.lineage.task = entry.name;
  task.new_watermarks = rt.watermarks;

  Batch output;
  bool last = false;
  if (IsSource(spec.op)) {
    SourceStep step = RunSource(*plan_, ch, entry.name.seq);
    task.lineage.count = step.count;
    task.input_rows = step.output.row_count();
    output = std::move(step.output);
    last = step.last;
    task.new_state = std::move(rt.state);
  } else {
    const auto &ups = plan_->upstream(ch.stage);
    const GcsState &st = ctx.gcs->state();
    std::optional<InputSelection> sel;
    bool flush = false;
    if (entry.prescribed) {
      if (entry.prescribed->count == 0) {
        flush = true;
      } else {
        auto counts = EligibleCounts(ch, rt.watermarks, ExecContext{ctx.gcs, ctx.now, ctx.policy, false, nullptr});
        int32_t i = entry.prescribed->upstream_index;
        if (counts.at(static_cast<size_t>(i)) < entry.prescribed->count) return std::nullopt;
        sel = InputSelection{i, entry.prescribed->count};
      }
    } else {
      bool all_done = true;
      std::vector<int64_t> remaining(ups.size(), -1);
      for (size_t i = 0; i < ups.size(); ++i) {
        auto s = st.Sentinel(ups[i].channel);
        if (s) remaining[i] = *s - rt.watermarks[i];
        if (!s || rt.watermarks[i] != *s) all_done = false;
      }
      if (all_done) {
        flush = true;
      } else {
        auto counts = EligibleCounts(ch, rt.watermarks, ctx);
        sel = ChooseInputs(counts, remaining, ctx.policy);
        if (!sel) return std::nullopt;
      }
    }
    if (flush) {
      output = FinalizeKernel(spec.op, rt.state);
      task.new_state = std::move(rt.state);
      last = true;
    } else {
      ChannelId u = ups[static_cast<size_t>(sel->upstream_index)].channel;
      int64_t w = rt.watermarks[static_cast<size_t>(sel->upstream_index)];
      std::vector<Batch> batches;
      for (int64_t k = w; k < w + sel->count; ++k) {
        TaskName name{u.stage, u.channel, k};
        const Batch *b = buffer_.Find(ch, name);
        batches.push_back(*b);
        task.inputs.push_back({name, b->Digest()});
        task.input_rows += b->row_count();
      }
      auto res = ExecuteKernel(spec.op, std::move(rt.state), batches, ups[static_cast<size_t>(sel->upstream_index)].side);
      task.new_state = std::move(res.state);
      output = std::move(res.output);
      task.lineage.upstream_index = sel->upstream_index;
      task.lineage.count = sel->count;
      task.new_watermarks[static_cast<size_t>(sel->upstream_index)] += sel->count;
    }
  }
  if (last) {
    task.sentinel = entry.name.seq + 1;
  } else {
    task.successor = TaskName{entry.name.stage, entry.name.channel, entry.name.seq + 1};
  }
  task.output_rows = output.row_count();
  task.slices = SliceOutput(ch.stage, output);
  for (const auto &[t, b] : task.slices) task.push_targets.push_back(t);
  return task;
}

PreparedTask TaskManager::PrepareReplay(const QueueEntry &entry, const ExecContext &ctx) const {
  PreparedTask task;
  task.entry = entry;
  const LocalBackupStore &store = ctx.durable != nullptr ? *ctx.durable : backups_;
  for (const auto &t : entry.targets) {
    auto slice = store.Get(entry.name, t);
    if (!slice) {
      task.missing_backup = true;
      continue;
    }
    task.output_rows += slice->row_count();
    task.slices[t] = std::move(*slice);
    task.push_targets.push_back(t);
  }
  return task;
}

PreparedTask TaskManager::PrepareInput(const QueueEntry &entry) const {
  PreparedTask task;
  task.entry = entry;
  SourceStep step = RunSource(*plan_, entry.name.Channel(), entry.name.seq);
  task.input_rows = step.output.row_count();
  task.output_rows = step.output.row_count();
  task.slices = SliceOutput(entry.name.stage, step.output);
  task.push_targets = entry.targets;
  return task;
}

void TaskManager::ApplyCommit(const PreparedTask &task, StrategyKind strategy, LocalBackupStore *durable) {
  if (task.entry.kind == QueueKind::kReplay) return;
  if (task.entry.kind == QueueKind::kChannel) {
    ChannelId ch = task.entry.name.Channel();
    ChannelRuntime &rt = runtimes_[ch];
    rt.state = task.new_state;
    rt.watermarks = task.new_watermarks;
    rt.next_seq = task.entry.name.seq + 1;
    for (const auto &in : task.inputs) buffer_.MarkConsumed(ch, in.name);
  }
  if (strategy == StrategyKind::kRestart) return;
  LocalBackupStore &store = strategy == StrategyKind::kSpool && durable != nullptr ? *durable : backups_;
  for (const auto &[t, slice] : task.slices) {
    if (t != kSinkTarget) store.Put(task.entry.name, t, slice);
  }
}

Transaction BuildCompletionTxn(const PreparedTask &task, WorkerId worker, int64_t epoch, StrategyKind strategy,
                               int64_t attempt) {
  Transaction txn;
  txn.actor = worker;
  txn.attempt = attempt;
  txn.ops.push_back(gcsop::CheckEpoch{epoch});
  txn.ops.push_back(gcsop::CheckFlagClear{});
  WorkerId location = kNoWorker;
  if (strategy == StrategyKind::kWal) location = worker;
  if (strategy == StrategyKind::kSpool) location = kDurableStore;
  switch (task.entry.kind) {
    case QueueKind::kChannel:
      txn.kind = "commit";
      txn.ops.push_back(gcsop::InsertLineage{task.lineage, task.entry.prescribed.has_value()});
      txn.ops.push_back(gcsop::RemoveTask{worker, task.entry});
      if (task.successor) txn.ops.push_back(gcsop::AppendSuccessor{worker, *task.successor});
      if (task.sentinel) txn.ops.push_back(gcsop::SetSentinel{task.entry.name.Channel(), *task.sentinel});
      if (location != kNoWorker) txn.ops.push_back(gcsop::SetLocation{task.entry.name, location});
      break;
    case QueueKind::kReplay:
      txn.kind = "replay_done";
      txn.ops.push_back(gcsop::RemoveTask{worker, task.entry});
      break;
    case QueueKind::kInput:
      txn.kind = "input_done";
      txn.ops.push_back(gcsop::RemoveTask{worker, task.entry});
      if (location != kNoWorker) txn.ops.push_back(gcsop::SetLocation{task.entry.name, location});
      break;
  }
  return txn;
}

ExecOutcome TaskManager::TryExecute(const QueueEntry &entry, Gcs &gcs, PushTransport &transport, SimTime now,
                                    const FtStrategy &strategy, LocalBackupStore *durable, bool blocking) {
  PollResult poll = gcs.PollTasks(id_);
  if (poll.control_flag) return ExecOutcome::kAborted;
  ExecContext ctx{&gcs, now, strategy.batching, blocking,
                  strategy.kind == StrategyKind::kSpool ? durable : nullptr};
  auto task = Prepare(entry, ctx);
  if (!task) return ExecOutcome::kNoEligibleInput;
  if (task->missing_backup) return ExecOutcome::kMissing;
  bool all_up = true;
  for (const auto &t : task->push_targets) {
    if (!transport.TargetAlive(t)) {
      all_up = false;
      continue;
    }
    transport.Deliver(t, entry.name, task->slices.at(t));
  }
  if (!all_up) return ExecOutcome::kPushFailed;
  auto res = gcs.Apply(BuildCompletionTxn(*task, id_, poll.epoch, strategy.kind, -1), now);
  if (!res.ok()) return ExecOutcome::kAborted;
  ApplyCommit(*task, strategy.kind, durable);
  return ExecOutcome::kExecuted;
}

void TaskManager::Reset() {
  buffer_.Clear();
  backups_.Clear();
  runtimes_.clear();
}

}  // namespace walq
