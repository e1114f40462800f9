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

#include <sstream>

#include "oracles.hpp"
#include "scenarios.hpp"
#include "walq/gcs/audit_log.hpp"
#include "walq/gcs/gcs.hpp"
#include "walq/harness/simulator.hpp"

namespace walq {
namespace {

QueueEntry Chan(StageId s, int32_t c, int64_t seq) {
  QueueEntry e;
  e.name = TaskName{s, c, seq};
  return e;
}

void Enqueue(Gcs &gcs, WorkerId w, const QueueEntry &e) {
  Transaction t;
  t.kind = "init";
  t.ops.push_back(gcsop::AppendTask{w, e});
  ASSERT_TRUE(gcs.Apply(t, 0).ok());
}

LineageEntry L(TaskName n, int32_t i, int64_t k) { return LineageEntry{n, i, k}; }

TEST(CommitTaskCompletion, FirstCommitInChannel) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  auto r = gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 10);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(gcs.state().Lineage({1, 0, 0}), L({1, 0, 0}, 0, 3));
  auto poll = gcs.PollTasks(0);
  ASSERT_EQ(poll.tasks.size(), 1u);
  EXPECT_EQ(poll.tasks.front().name, (TaskName{1, 0, 1}));
}

TEST(CommitTaskCompletion, DuplicateIsRejectedWithoutMutation) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  ASSERT_TRUE(gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 10).ok());
  uint64_t before = gcs.state().Digest();
  auto r = gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 11);
  EXPECT_EQ(r.status, TxnStatus::kDuplicateCommit);
  EXPECT_EQ(gcs.state().Digest(), before);
}

TEST(CommitTaskCompletion, ConflictingLineageIsRejected) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  ASSERT_TRUE(gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 10).ok());
  QueueEntry again = Chan(1, 0, 0);
  again.prescribed = L({1, 0, 0}, 1, 1);
  Enqueue(gcs, 0, again);
  auto r = gcs.CommitTaskCompletion(0, again, L({1, 0, 0}, 1, 1), TaskName{1, 0, 1}, 0, 11);
  EXPECT_EQ(r.status, TxnStatus::kLineageConflict);
}

TEST(CommitTaskCompletion, StaleEpochIsRejectedWithoutMutation) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  ASSERT_EQ(gcs.SetControlFlag(1), TxnStatus::kOk);
  ASSERT_EQ(gcs.ClearControlFlag(1, 2), TxnStatus::kOk);
  uint64_t before = gcs.state().Digest();
  auto r = gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 3);
  EXPECT_EQ(r.status, TxnStatus::kStaleEpoch);
  EXPECT_EQ(gcs.state().Digest(), before);
  EXPECT_TRUE(gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 1, 4).ok());
}

TEST(CommitTaskCompletion, BarrierBlocksWorkerCommits) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  ASSERT_EQ(gcs.SetControlFlag(1), TxnStatus::kOk);
  uint64_t before = gcs.state().Digest();
  auto r = gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 2);
  EXPECT_EQ(r.status, TxnStatus::kBarrier);
  EXPECT_EQ(gcs.state().Digest(), before);
}

TEST(CommitTaskCompletion, WritesSentinelAndLocation) {
  Gcs gcs;
  Enqueue(gcs, 2, Chan(0, 1, 0));
  ASSERT_TRUE(gcs.CommitTaskCompletion(2, Chan(0, 1, 0), L({0, 1, 0}, 0, 1), std::nullopt, 0, 5, 1, 2).ok());
  EXPECT_EQ(gcs.state().Sentinel({0, 1}), 1);
  EXPECT_EQ(gcs.state().Location({0, 1, 0}), 2);
  EXPECT_TRUE(gcs.PollTasks(2).tasks.empty());
}

TEST(ReadLineage, AbsentUntilCommitted) {
  Gcs gcs;
  EXPECT_FALSE(gcs.ReadLineage({2, 1, 4}, 0).has_value());
  Enqueue(gcs, 1, Chan(2, 1, 4));
  ASSERT_TRUE(gcs.CommitTaskCompletion(1, Chan(2, 1, 4), L({2, 1, 4}, 1, 2), TaskName{2, 1, 5}, 0, 7).ok());
  EXPECT_EQ(gcs.ReadLineage({2, 1, 4}, 7), L({2, 1, 4}, 1, 2));
}

TEST(ReadLineage, ReadLagHidesFreshEntries) {
  Gcs gcs;
  gcs.set_read_lag(100);
  Enqueue(gcs, 0, Chan(0, 0, 0));
  ASSERT_TRUE(gcs.CommitTaskCompletion(0, Chan(0, 0, 0), L({0, 0, 0}, 0, 1), TaskName{0, 0, 1}, 0, 50).ok());
  EXPECT_FALSE(gcs.ReadLineage({0, 0, 0}, 50).has_value());
  EXPECT_FALSE(gcs.ReadLineage({0, 0, 0}, 149).has_value());
  EXPECT_EQ(gcs.VisibleAt({0, 0, 0}), 150);
  EXPECT_TRUE(gcs.ReadLineage({0, 0, 0}, 150).has_value());
}

TEST(PollTasks, EmptyAndFifo) {
  Gcs gcs;
  EXPECT_TRUE(gcs.PollTasks(3).tasks.empty());
  Enqueue(gcs, 0, Chan(1, 0, 2));
  Enqueue(gcs, 0, Chan(2, 0, 5));
  auto poll = gcs.PollTasks(0);
  ASSERT_EQ(poll.tasks.size(), 2u);
  EXPECT_EQ(poll.tasks[0].name, (TaskName{1, 0, 2}));
  EXPECT_EQ(poll.tasks[1].name, (TaskName{2, 0, 5}));
}

TEST(PollTasks, FlagVisibleInSameResponse) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  ASSERT_EQ(gcs.SetControlFlag(1), TxnStatus::kOk);
  auto poll = gcs.PollTasks(0);
  EXPECT_TRUE(poll.control_flag);
  EXPECT_EQ(poll.tasks.size(), 1u);
}

TEST(ControlFlag, SetClearAndErrors) {
  Gcs gcs;
  EXPECT_EQ(gcs.ClearControlFlag(1, 0), TxnStatus::kFlagNotSet);
  EXPECT_EQ(gcs.SetControlFlag(0), TxnStatus::kOk);
  EXPECT_EQ(gcs.SetControlFlag(0), TxnStatus::kFlagAlreadySet);
  EXPECT_EQ(gcs.ClearControlFlag(5, 0), TxnStatus::kBadEpoch);
  EXPECT_EQ(gcs.ClearControlFlag(1, 0), TxnStatus::kOk);
  EXPECT_EQ(gcs.state().epoch(), 1);
  EXPECT_FALSE(gcs.state().control_flag());
}

TEST(ApplyTransaction, DisjointCommitsBothVisible) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  Enqueue(gcs, 1, Chan(1, 1, 0));
  ASSERT_TRUE(gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 1), TaskName{1, 0, 1}, 0, 1).ok());
  ASSERT_TRUE(gcs.CommitTaskCompletion(1, Chan(1, 1, 0), L({1, 1, 0}, 2, 4), TaskName{1, 1, 1}, 0, 1).ok());
  EXPECT_TRUE(gcs.state().Lineage({1, 0, 0}).has_value());
  EXPECT_TRUE(gcs.state().Lineage({1, 1, 0}).has_value());
}

TEST(ApplyTransaction, EmptyTransactionIsANoOp) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  uint64_t before = gcs.state().Digest();
  Transaction t;
  t.kind = "noop";
  EXPECT_TRUE(gcs.Apply(t, 3).ok());
  EXPECT_EQ(gcs.state().Digest(), before);
}

TEST(ApplyTransaction, FailedCheckRollsBackEarlierWrites) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  uint64_t before = gcs.state().Digest();
  Transaction t;
  t.kind = "mixed";
  t.ops.push_back(gcsop::InsertLineage{L({1, 0, 0}, 0, 1)});
  t.ops.push_back(gcsop::RemoveTask{0, Chan(9, 9, 9)});
  EXPECT_EQ(gcs.Apply(t, 3).status, TxnStatus::kMissingTask);
  EXPECT_EQ(gcs.state().Digest(), before);
  EXPECT_FALSE(gcs.state().Lineage({1, 0, 0}).has_value());
}

TEST(ApplyTransaction, CrashBetweenEverySubWriteLeavesStateUntouched) {
  Gcs gcs;
  Enqueue(gcs, 0, Chan(1, 0, 0));
  const GcsState before = gcs.Snapshot();
  size_t crashes = 0;
  for (size_t i = 0;; ++i) {
    auto r = gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 9, 1, 0, -1,
                                      [i](size_t k) {
                                        if (k == i) throw SimulatedCrash{};
                                      });
    if (r.ok()) break;
    ++crashes;
    ASSERT_EQ(r.status, TxnStatus::kCrashed);
    EXPECT_EQ(gcs.state().Digest(), before.Digest());
    EXPECT_FALSE(gcs.state().Lineage({1, 0, 0}).has_value());
    EXPECT_EQ(gcs.PollTasks(0).tasks.front().name, (TaskName{1, 0, 0}));
    EXPECT_TRUE(testing::LineageQueueDisagreements(gcs.state()).empty());
  }
  // lineage, dequeue, successor, sentinel, location
  EXPECT_EQ(crashes, 5u);
  EXPECT_TRUE(gcs.state().Lineage({1, 0, 0}).has_value());
  EXPECT_TRUE(testing::LineageQueueDisagreements(gcs.state()).empty());
}

TEST(ApplyTransaction, CrashSweepOverARecordedRun) {
  ValidatedPlan plan = testing::LoadFixture("two_level_agg.json");
  RunResult r = walq::Run(plan, testing::GoldenConfig(), testing::GoldenFaults());
  GcsState state;
  size_t crash_points = 0;
  for (const auto &rec : r.log.records()) {
    if (rec.at("type") != "txn" || rec.at("status") != "ok") continue;
    Transaction txn = testing::TxnFromRecord(rec);
    SimTime t = rec.at("t").get<SimTime>();
    const uint64_t pre = state.Digest();
    for (size_t i = 0;; ++i) {
      TxnStatus st = ApplyToState(state, txn, t, [i](size_t k) {
        if (k == i) throw SimulatedCrash{};
      });
      if (st == TxnStatus::kOk) break;
      ++crash_points;
      ASSERT_EQ(st, TxnStatus::kCrashed);
      ASSERT_EQ(state.Digest(), pre);
    }
    ASSERT_EQ(state.Digest(), rec.at("post").get<uint64_t>());
    ASSERT_TRUE(testing::LineageQueueDisagreements(state).empty());
  }
  EXPECT_GT(crash_points, 100u);
}

TEST(GcsState, InvariantFlagsCommittedFreshTaskStillQueued) {
  GcsState s;
  Transaction t;
  t.kind = "bad";
  t.ops.push_back(gcsop::InsertLineage{L({1, 0, 0}, 0, 1)});
  t.ops.push_back(gcsop::AppendTask{0, Chan(1, 0, 0)});
  ASSERT_EQ(ApplyToState(s, t, 0), TxnStatus::kOk);
  EXPECT_FALSE(s.CheckInvariants().empty());
}

TEST(GcsState, DigestTracksContent) {
  Gcs a;
  Gcs b;
  Enqueue(a, 0, Chan(1, 0, 0));
  Enqueue(b, 0, Chan(1, 0, 0));
  EXPECT_EQ(a.state().Digest(), b.state().Digest());
  ASSERT_TRUE(a.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 1).ok());
  EXPECT_NE(a.state().Digest(), b.state().Digest());
}

TEST(Codec, OpsRoundTripThroughJson) {
  QueueEntry replay{QueueKind::kReplay, TaskName{0, 1, 2}, std::nullopt, {ChannelId{1, 0}, ChannelId{1, 2}}};
  QueueEntry pres = Chan(2, 0, 0);
  pres.prescribed = L({2, 0, 0}, 1, 4);
  TaskQueues qs;
  qs[0] = {replay, pres};
  std::vector<GcsOp> ops{gcsop::CheckEpoch{3},
                         gcsop::CheckFlagClear{},
                         gcsop::InsertLineage{L({1, 2, 3}, 4, 5), true},
                         gcsop::RemoveTask{1, replay},
                         gcsop::AppendTask{2, pres},
                         gcsop::AppendSuccessor{2, TaskName{2, 0, 1}},
                         gcsop::SetSentinel{ChannelId{1, 2}, 7},
                         gcsop::SetLocation{TaskName{1, 2, 3}, kDurableStore},
                         gcsop::SetFlag{},
                         gcsop::ClearFlag{4},
                         gcsop::ReplaceQueues{qs},
                         gcsop::SetMapping{ChannelId{1, 2}, 3},
                         gcsop::ResetJob{}};
  for (const auto &op : ops) {
    nlohmann::json j = OpToJson(op);
    EXPECT_EQ(OpToJson(OpFromJson(j)), j) << j.dump();
  }
  EXPECT_EQ(QueueEntryFromJson(QueueEntryToJson(pres)), pres);
  EXPECT_EQ(TaskNameFromJson(TaskNameToJson({3, 2, 1})), (TaskName{3, 2, 1}));
}

TEST(Lineage, RecordIsFixedSize) {
  EXPECT_EQ(EncodeLineage(L({0, 0, 0}, 0, 1)).size(), kLineageRecordBytes);
  EXPECT_EQ(EncodeLineage(L({9, 9, 1'000'000}, 7, 1'000'000'000)).size(), kLineageRecordBytes);
}

TEST(AuditLog, TransactionsAreRecordedAndParse) {
  AuditLog log;
  Gcs gcs(&log);
  Enqueue(gcs, 0, Chan(1, 0, 0));
  gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 1);
  gcs.CommitTaskCompletion(0, Chan(1, 0, 0), L({1, 0, 0}, 0, 3), TaskName{1, 0, 1}, 0, 2);
  log.Append({{"type", "end"}});
  std::istringstream in(log.ToText());
  AuditLog back = AuditLog::Parse(in);
  ASSERT_EQ(back.records().size(), 4u);
  EXPECT_EQ(back.records()[2].at("status"), "DuplicateCommit");
  EXPECT_EQ(back.records()[1].at("post"), back.records()[2].at("pre"));
}

TEST(AuditLog, TruncatedLogNamesTheLine) {
  AuditLog log;
  log.Append({{"type", "txn"}, {"id", 0}});
  log.Append({{"type", "end"}});
  std::string text = log.ToText();
  std::istringstream cut(text.substr(0, text.size() - 5));
  try {
    AuditLog::Parse(cut);
    FAIL();
  } catch (const AuditParseError &e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream no_end(text.substr(0, text.find("{\"type\":\"end\"")));
  EXPECT_THROW(AuditLog::Parse(no_end), AuditParseError);
}

TEST(AuditLog, StaleCommitsInFaultRunsDoNotMutate) {
  ValidatedPlan plan = testing::LoadFixture("join3.json");
  FaultSpec f;
  f.faults.push_back(Fault{1, FaultTrigger{FaultTrigger::Kind::kProgress, 0.4}});
  RunResult r = walq::Run(plan, SimConfig{}, f);
  size_t rejected = 0;
  for (const auto &rec : r.log.records()) {
    if (rec.at("type") != "txn" || rec.at("status") == "ok") continue;
    ++rejected;
    EXPECT_EQ(rec.at("pre"), rec.at("post")) << rec.dump();
  }
  SUCCEED() << rejected << " rejected transactions";
}

}  // namespace
}  // namespace walq
