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

#include <gtest/gtest.h>

#include <memory>
#include <set>

#include "walq/worker/choose_inputs.hpp"
#include "walq/worker/exchange.hpp"
#include "walq/worker/task_manager.hpp"

namespace walq {
namespace {

Schema KV() { return {{"k", DataType::kInt64}, {"v", DataType::kInt64}}; }

// Stage 0: 2-channel reader over 4 batches (2 splits per channel).
// Stage 1: 1-channel aggregate by k (sink).
ValidatedPlan TwoStagePlan() {
  QueryPlan p;
  Dataset d{KV(), {}};
  for (int64_t b = 0; b < 4; ++b) {
    Batch batch(KV());
    for (int64_t r = 0; r < 3; ++r) {
      std::vector<Value> row{r, b * 10 + r};
      batch.AppendRow(row);
    }
    d.batches.push_back(batch);
  }
  p.datasets["d"] = d;
  StageSpec src;
  src.id = 0;
  src.channels = 2;
  src.op = InputReader{"d"};
  src.partition_key = "k";
  StageSpec agg;
  agg.id = 1;
  agg.channels = 1;
  agg.op = Aggregate{{"k"}, {AggSpec{AggFn::kSum, "v", "s"}}};
  agg.stateful = true;
  p.stages = {src, agg};
  p.edges = {{0, 1}};
  return ValidatePlan(p);
}

class Cluster : public PushTransport {
 public:
  explicit Cluster(const ValidatedPlan *plan) : plan_(plan) {
    for (WorkerId w = 0; w < 3; ++w) tms_.push_back(std::make_unique<TaskManager>(w, plan));
    owner_[{0, 0}] = 0;
    owner_[{0, 1}] = 1;
    owner_[{1, 0}] = 2;
    Transaction t;
    t.kind = "init";
    for (const auto &[ch, w] : owner_) {
      t.ops.push_back(gcsop::SetMapping{ch, w});
      QueueEntry e;
      e.name = TaskName{ch.stage, ch.channel, 0};
      t.ops.push_back(gcsop::AppendTask{w, e});
    }
    EXPECT_TRUE(gcs.Apply(t, 0).ok());
  }

  bool TargetAlive(ChannelId target) const override {
    return target == kSinkTarget || !dead.contains(owner_.at(target));
  }
  void Deliver(ChannelId target, const TaskName &name, const Batch &slice) override {
    if (target == kSinkTarget) {
      collected.push_back(slice);
      return;
    }
    tm(owner_.at(target)).buffer().Insert(target, name, slice);
    ++deliveries;
  }

  TaskManager &tm(WorkerId w) { return *tms_[static_cast<size_t>(w)]; }

  ExecOutcome Step(WorkerId w, SimTime now = 0, FtStrategy s = {}) {
    auto q = gcs.PollTasks(w).tasks;
    if (q.empty()) return ExecOutcome::kNoEligibleInput;
    return tm(w).TryExecute(q.front(), gcs, *this, now, s, &durable);
  }

  Gcs gcs;
  LocalBackupStore durable;
  std::set<WorkerId> dead;
  std::vector<Batch> collected;
  int deliveries = 0;

 private:
  const ValidatedPlan *plan_;
  std::vector<std::unique_ptr<TaskManager>> tms_;
  std::map<ChannelId, WorkerId> owner_;
};

TEST(TryExecute, ConsumesCommittedInputsFromOneChannel) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  EXPECT_EQ(c.gcs.state().Sentinel({0, 1}), 2);
  ASSERT_EQ(c.Step(2), ExecOutcome::kExecuted);
  EXPECT_EQ(c.gcs.state().Lineage({1, 0, 0}), (LineageEntry{{1, 0, 0}, 1, 2}));
  EXPECT_EQ(c.gcs.PollTasks(2).tasks.front().name, (TaskName{1, 0, 1}));
  EXPECT_EQ(c.tm(2).runtime({1, 0})->watermarks, (std::vector<int64_t>{0, 2}));
}

TEST(TryExecute, RunsToCompletionWithFlush) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  for (int i = 0; i < 2; ++i) {
    ASSERT_EQ(c.Step(0), ExecOutcome::kExecuted);
    ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  }
  int steps = 0;
  while (!c.gcs.PollTasks(2).tasks.empty() && steps++ < 10) ASSERT_EQ(c.Step(2), ExecOutcome::kExecuted);
  EXPECT_TRUE(c.gcs.state().Sentinel({1, 0}).has_value());
  EXPECT_EQ(c.tm(2).runtime({1, 0})->watermarks, (std::vector<int64_t>{2, 2}));
  size_t rows = 0;
  for (const auto &b : c.collected) rows += b.row_count();
  EXPECT_EQ(rows, 3u);
}

TEST(TryExecute, UncommittedPartitionsAreNotEligible) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  c.tm(2).buffer().Insert({1, 0}, {0, 0, 0}, Batch(KV()));
  c.tm(2).buffer().Insert({1, 0}, {0, 1, 0}, Batch(KV()));
  EXPECT_EQ(c.Step(2), ExecOutcome::kNoEligibleInput);
  EXPECT_FALSE(c.gcs.state().Lineage({1, 0, 0}).has_value());
}

TEST(TryExecute, DeadDownstreamMeansNoCommit) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  c.dead.insert(2);
  uint64_t before = c.gcs.state().Digest();
  EXPECT_EQ(c.Step(0), ExecOutcome::kPushFailed);
  EXPECT_EQ(c.gcs.state().Digest(), before);
  EXPECT_FALSE(c.tm(0).backups().Has({0, 0, 0}));
  EXPECT_EQ(c.tm(0).runtime({0, 0}), nullptr);
}

TEST(TryExecute, AbortsWhileBarrierIsSet) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  ASSERT_EQ(c.gcs.SetControlFlag(0), TxnStatus::kOk);
  EXPECT_EQ(c.Step(0), ExecOutcome::kAborted);
  EXPECT_EQ(c.deliveries, 0);
}

TEST(TryExecute, ReadLagDefersThenSucceeds) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  c.gcs.set_read_lag(100);
  ASSERT_EQ(c.Step(1, 0), ExecOutcome::kExecuted);
  EXPECT_EQ(c.Step(2, 50), ExecOutcome::kNoEligibleInput);
  EXPECT_EQ(c.Step(2, 100), ExecOutcome::kExecuted);
}

TEST(EligibleCounts, InOrderConsumptionStopsAtAGap) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  Transaction t;
  t.kind = "seed";
  for (int64_t s = 0; s < 3; ++s) t.ops.push_back(gcsop::InsertLineage{LineageEntry{{0, 0, s}, 0, 1}});
  ASSERT_TRUE(c.gcs.Apply(t, 0).ok());
  c.tm(2).buffer().Insert({1, 0}, {0, 0, 0}, Batch(KV()));
  c.tm(2).buffer().Insert({1, 0}, {0, 0, 2}, Batch(KV()));
  ExecContext ctx{&c.gcs, 0, BatchingPolicy::Dynamic(), false, nullptr};
  EXPECT_EQ(c.tm(2).EligibleCounts({1, 0}, {0, 0}, ctx), (std::vector<int64_t>{1, 0}));
  auto task = c.tm(2).Prepare(c.gcs.PollTasks(2).tasks.front(), ctx);
  ASSERT_TRUE(task.has_value());
  EXPECT_EQ(task->lineage, (LineageEntry{{1, 0, 0}, 0, 1}));
}

TEST(Backup, WalKeepsLocalCopyThatReplaysBitIdentically) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  const Batch *pushed = c.tm(2).buffer().Find({1, 0}, {0, 1, 0});
  ASSERT_NE(pushed, nullptr);
  auto backup = c.tm(1).backups().Get({0, 1, 0}, {1, 0});
  ASSERT_TRUE(backup.has_value());
  EXPECT_EQ(backup->Serialize(), pushed->Serialize());
  EXPECT_EQ(c.gcs.state().Location({0, 1, 0}), 1);
  EXPECT_EQ(c.durable.bytes(), 0u);
}

TEST(Backup, LostWithItsWorker) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  c.tm(1).Reset();
  EXPECT_FALSE(c.tm(1).backups().Has({0, 1, 0}));
  EXPECT_FALSE(c.tm(1).backups().Get({0, 1, 0}, {1, 0}).has_value());
}

TEST(Backup, SpoolingWritesTheDurableStore) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  FtStrategy spool{StrategyKind::kSpool, BatchingPolicy::Dynamic()};
  ASSERT_EQ(c.Step(1, 0, spool), ExecOutcome::kExecuted);
  c.tm(1).Reset();
  EXPECT_TRUE(c.durable.Has({0, 1, 0}));
  EXPECT_FALSE(c.tm(1).backups().Has({0, 1, 0}));
  EXPECT_EQ(c.gcs.state().Location({0, 1, 0}), kDurableStore);
}

TEST(Replay, FromLiveOwnerDelivers) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  Batch original = *c.tm(2).buffer().Find({1, 0}, {0, 1, 0});
  c.tm(2).Reset();
  QueueEntry replay{QueueKind::kReplay, {0, 1, 0}, std::nullopt, {ChannelId{1, 0}}};
  Transaction t;
  t.kind = "enqueue";
  t.ops.push_back(gcsop::AppendTask{1, replay});
  ASSERT_TRUE(c.gcs.Apply(t, 0).ok());
  EXPECT_EQ(c.tm(1).TryExecute(replay, c.gcs, c, 1, {}), ExecOutcome::kExecuted);
  const Batch *again = c.tm(2).buffer().Find({1, 0}, {0, 1, 0});
  ASSERT_NE(again, nullptr);
  EXPECT_EQ(*again, original);
}

TEST(Replay, UnknownOrLostPartitionIsMissing) {
  ValidatedPlan plan = TwoStagePlan();
  Cluster c(&plan);
  QueueEntry never{QueueKind::kReplay, {0, 1, 7}, std::nullopt, {ChannelId{1, 0}}};
  EXPECT_EQ(c.tm(1).TryExecute(never, c.gcs, c, 0, {}), ExecOutcome::kMissing);
  ASSERT_EQ(c.Step(1), ExecOutcome::kExecuted);
  c.tm(1).Reset();
  QueueEntry lost{QueueKind::kReplay, {0, 1, 0}, std::nullopt, {ChannelId{1, 0}}};
  EXPECT_EQ(c.tm(1).TryExecute(lost, c.gcs, c, 0, {}), ExecOutcome::kMissing);
}

TEST(ExchangeBuffer, PushDedup) {
  ExchangeBuffer buf;
  Batch a(KV());
  std::vector<Value> row{int64_t{1}, int64_t{2}};
  a.AppendRow(row);
  EXPECT_EQ(buf.Insert({1, 0}, {0, 0, 0}, a), ExchangeBuffer::InsertResult::kInserted);
  ASSERT_NE(buf.Find({1, 0}, {0, 0, 0}), nullptr);
  EXPECT_EQ(buf.Insert({1, 0}, {0, 0, 0}, Batch(KV())), ExchangeBuffer::InsertResult::kReplaced);
  EXPECT_TRUE(buf.Find({1, 0}, {0, 0, 0})->empty());
  buf.MarkConsumed({1, 0}, {0, 0, 0});
  EXPECT_TRUE(buf.IsConsumed({1, 0}, {0, 0, 0}));
  EXPECT_EQ(buf.Insert({1, 0}, {0, 0, 0}, a), ExchangeBuffer::InsertResult::kDropped);
  EXPECT_TRUE(buf.Find({1, 0}, {0, 0, 0})->empty());
  EXPECT_EQ(buf.size(), 1u);
  EXPECT_EQ(buf.Find({1, 1}, {0, 0, 0}), nullptr);
}

TEST(ChooseInputs, DynamicTakesLargestLowestIndex) {
  std::vector<int64_t> eligible{2, 5, 5};
  std::vector<int64_t> remaining{-1, -1, -1};
  EXPECT_EQ(ChooseInputs(eligible, remaining, BatchingPolicy::Dynamic()), (InputSelection{1, 5}));
}

TEST(ChooseInputs, StaticNeedsBatchSize) {
  std::vector<int64_t> eligible{3, 9};
  std::vector<int64_t> remaining{-1, -1};
  EXPECT_EQ(ChooseInputs(eligible, remaining, BatchingPolicy::Static(8)), (InputSelection{1, 8}));
  std::vector<int64_t> few{3, 4};
  EXPECT_FALSE(ChooseInputs(few, remaining, BatchingPolicy::Static(8)).has_value());
}

TEST(ChooseInputs, StaticTakesTheTailOfAFinishedChannel) {
  std::vector<int64_t> eligible{3, 4};
  std::vector<int64_t> remaining{-1, 4};
  EXPECT_EQ(ChooseInputs(eligible, remaining, BatchingPolicy::Static(8)), (InputSelection{1, 4}));
}

TEST(ChooseInputs, NothingEligible) {
  std::vector<int64_t> zero{0, 0};
  std::vector<int64_t> remaining{0, -1};
  EXPECT_FALSE(ChooseInputs(zero, remaining, BatchingPolicy::Dynamic()).has_value());
}

TEST(BatchingPolicy, ParseAndPrint) {
  EXPECT_EQ(ParseBatchingPolicy("dynamic"), BatchingPolicy::Dynamic());
  EXPECT_EQ(ParseBatchingPolicy("static:8"), BatchingPolicy::Static(8));
  EXPECT_EQ(BatchingPolicy::Static(3).ToString(), "static:3");
  EXPECT_THROW(ParseBatchingPolicy("static:0"), std::invalid_argument);
  EXPECT_THROW(ParseBatchingPolicy("static:x"), std::invalid_argument);
  EXPECT_THROW(ParseBatchingPolicy("eager"), std::invalid_argument);
}

TEST(Strategy, ParseNames) {
  EXPECT_EQ(ParseStrategy("wal"), StrategyKind::kWal);
  EXPECT_EQ(ParseStrategy("spool"), StrategyKind::kSpool);
  EXPECT_EQ(ParseStrategy("restart"), StrategyKind::kRestart);
  EXPECT_THROW(ParseStrategy("other"), std::invalid_argument);
}

}  // namespace
}  // namespace walq
