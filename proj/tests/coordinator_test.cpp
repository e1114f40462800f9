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

#include <algorithm>

#include "oracles.hpp"
#include "scenarios.hpp"
#include "walq/coordinator/recovery.hpp"
#include "walq/harness/auditor.hpp"
#include "walq/harness/simulator.hpp"

namespace walq {
namespace {

// State just before the first reconciliation write of a trace.
GcsState SnapshotBeforeReconcile(const AuditLog &log) {
  GcsState state;
  for (const auto &rec : log.records()) {
    if (rec.at("type") != "txn" || rec.at("status") != "ok") continue;
    if (rec.at("kind") == "reconcile") return state;
    ApplyToState(state, testing::TxnFromRecord(rec), rec.at("t").get<SimTime>());
  }
  ADD_FAILURE() << "no reconcile in trace";
  return state;
}

std::vector<nlohmann::json> Records(const AuditLog &log, const std::string &type) {
  std::vector<nlohmann::json> out;
  for (const auto &rec : log.records()) {
    if (rec.at("type") == type) out.push_back(rec);
  }
  return out;
}

ClusterView View(std::vector<WorkerId> live, std::set<WorkerId> failed) { return ClusterView{live, failed}; }

FaultSpec TimedKills(std::vector<std::pair<WorkerId, double>> kills) {
  FaultSpec f;
  for (auto [w, t] : kills) f.faults.push_back(Fault{w, FaultTrigger{FaultTrigger::Kind::kTime, t}});
  return f;
}

TEST(FailureDetector, ReportsSilentWorkersOnce) {
  FailureDetector d(10);
  for (WorkerId w = 0; w < 3; ++w) d.Heartbeat(w, 0);
  d.Heartbeat(0, 5);
  d.Heartbeat(2, 5);
  EXPECT_TRUE(d.DetectFailures(5).empty());
  d.Heartbeat(0, 12);
  d.Heartbeat(2, 12);
  EXPECT_EQ(d.DetectFailures(12), (std::set<WorkerId>{1}));
  EXPECT_TRUE(d.DetectFailures(13).empty());
}

TEST(FailureDetector, TwoKillsInOneIntervalShareARecovery) {
  ValidatedPlan plan = testing::LoadFixture("join3.json");
  // Both detected at the 6.0 heartbeat tick.
  RunResult r = walq::Run(plan, SimConfig{}, TimedKills({{1, 4.5}, {2, 5.0}}));
  auto recs = Records(r.log, "recovery");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].at("failed"), nlohmann::json({1, 2}));
  EXPECT_EQ(Records(r.log, "nested").size(), 0u);
  EXPECT_EQ(r.metrics.result_digest, walq::Run(plan, SimConfig{}).metrics.result_digest);
}

TEST(PlanRecovery, GoldenScenario) {
  ValidatedPlan plan = testing::LoadFixture("two_level_agg.json");
  RunResult r = walq::Run(plan, testing::GoldenConfig(), testing::GoldenFaults());
  GcsState snap = SnapshotBeforeReconcile(r.log);
  std::set<TaskName> held;
  for (const auto &e : snap.tasks().at(2)) held.insert(e.name);
  EXPECT_TRUE(held.contains(TaskName{1, 2, 1}));
  EXPECT_TRUE(held.contains(TaskName{2, 2, 1}));

  RecoveryPlan rp = PlanRecovery(plan, snap, View({0, 1}, {2}), StrategyKind::kWal);
  EXPECT_EQ(rp.rewinds, (std::map<ChannelId, int64_t>{{{1, 2}, 0}, {{2, 2}, 0}}));
  std::set<TaskName> inputs;
  for (const auto &in : rp.inputs) inputs.insert(in.name);
  EXPECT_EQ(inputs, (std::set<TaskName>{{0, 2, 0}, {0, 2, 1}}));
  for (const auto &rep : rp.replays) {
    EXPECT_TRUE(rep.owner == 0 || rep.owner == 1);
    EXPECT_TRUE(snap.Lineage(rep.name).has_value());
  }
  std::set<TaskName> stage0_replays;
  for (const auto &rep : rp.replays) {
    if (rep.name.stage == 0) stage0_replays.insert(rep.name);
  }
  EXPECT_EQ(stage0_replays, (std::set<TaskName>{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}}));
  EXPECT_EQ(rp.ReconstructedPartitions(), 4);

  PlaceRecovery(plan, snap, View({0, 1}, {2}), rp);
  for (const auto &[ch, w] : rp.placements) EXPECT_NE(w, 2);
  Transaction txn = BuildReconcileTxn(plan, snap, rp);
  const auto *rq = std::get_if<gcsop::ReplaceQueues>(&txn.ops.front());
  ASSERT_NE(rq, nullptr);
  EXPECT_FALSE(rq->queues.contains(2));
  bool restarts_at_zero = false;
  for (const auto &[w, q] : rq->queues) {
    for (const auto &e : q) {
      if (e.name == TaskName{1, 2, 0}) restarts_at_zero = e.prescribed.has_value();
    }
  }
  EXPECT_TRUE(restarts_at_zero);
}

TEST(PlanRecovery, IdleFailedWorkerGivesEmptyPlan) {
  ValidatedPlan plan = testing::LoadFixture("two_level_agg.json");
  RunResult r = walq::Run(plan, testing::GoldenConfig(), testing::GoldenFaults());
  GcsState snap = SnapshotBeforeReconcile(r.log);
  RecoveryPlan rp = PlanRecovery(plan, snap, View({0, 1, 2}, {7}), StrategyKind::kWal);
  EXPECT_TRUE(rp.empty());
  EXPECT_EQ(rp.ReconstructedPartitions(), 0);
}

TEST(PlanRecovery, MatchesBruteForceClosureOnRandomPlans) {
  size_t compared = 0;
  for (uint64_t seed = 100; seed < 300; ++seed) {
    testing::Scenario sc = testing::RandomScenario(seed);
    if (sc.config.strategy.kind == StrategyKind::kRestart) continue;
    ValidatedPlan plan = ValidatePlan(sc.plan);
    RunResult r = walq::Run(plan, sc.config, sc.faults);
    auto rep = testing::CheckRecoveryLocality(plan, r.log, sc.config.strategy.kind, sc.config.workers);
    compared += rep.recoveries;
    EXPECT_TRUE(rep.mismatches.empty()) << sc.Describe() << ": " << rep.mismatches.front();
  }
  EXPECT_GT(compared, 50u);
}

TEST(PlanRecovery, SpoolingNeedsNoUpstreamRewind) {
  ValidatedPlan plan = testing::LoadFixture("two_level_agg.json");
  SimConfig c = testing::GoldenConfig();
  c.strategy.kind = StrategyKind::kSpool;
  RunResult r = walq::Run(plan, c, testing::GoldenFaults());
  auto recs = Records(r.log, "recovery");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].at("inputs").empty());
  for (const auto &rep : recs[0].at("replays")) EXPECT_EQ(rep.at("owner"), kDurableStore);
}

QueryPlan StatefulChain(int stateful_stages) {
  QueryPlan p;
  Schema kv{{"k", DataType::kInt64}, {"v", DataType::kInt64}};
  p.datasets["d"] = Dataset{kv, {}};
  StageSpec src;
  src.op = InputReader{"d"};
  src.partition_key = "k";
  p.stages.push_back(src);
  for (int s = 1; s <= stateful_stages; ++s) {
    StageSpec st;
    st.id = s;
    st.op = Aggregate{{"k"}, {AggSpec{AggFn::kCount, "k", "v"}}};
    st.stateful = true;
    st.partition_key = s == stateful_stages ? "" : "k";
    p.stages.push_back(st);
    p.edges.emplace_back(s - 1, s);
  }
  for (auto &st : p.stages) st.channels = 2;
  return p;
}

RecoveryPlan RewindAll(const ValidatedPlan &plan, int from_stage) {
  RecoveryPlan rp;
  for (ChannelId ch : plan.AllChannels()) {
    if (ch.stage >= from_stage) rp.rewinds[ch] = -1;
  }
  return rp;
}

TEST(PlaceRecovery, DifferentStagesOnDifferentWorkers) {
  ValidatedPlan plan = ValidatePlan(StatefulChain(2));
  RecoveryPlan rp;
  rp.rewinds = {{{1, 1}, 0}, {{2, 1}, 0}};
  PlaceRecovery(plan, GcsState{}, View({0, 1}, {2}), rp);
  EXPECT_NE(rp.placements.at({1, 1}), rp.placements.at({2, 1}));
}

TEST(PlaceRecovery, SingleLiveWorkerTakesEverything) {
  ValidatedPlan plan = ValidatePlan(StatefulChain(2));
  RecoveryPlan rp;
  rp.rewinds = {{{1, 1}, 0}, {{2, 1}, 0}};
  PlaceRecovery(plan, GcsState{}, View({3}, {0, 1, 2}), rp);
  EXPECT_EQ(rp.placements.at({1, 1}), 3);
  EXPECT_EQ(rp.placements.at({2, 1}), 3);
}

TEST(PlaceRecovery, RoundRobinPigeonhole) {
  ValidatedPlan plan = ValidatePlan(StatefulChain(5));
  RecoveryPlan rp = RewindAll(plan, 1);
  PlaceRecovery(plan, GcsState{}, View({0, 1, 2}, {3}), rp);
  std::map<WorkerId, std::set<StageId>> stages_per_worker;
  for (const auto &[ch, w] : rp.placements) stages_per_worker[w].insert(ch.stage);
  size_t max_stages = 0;
  for (const auto &[w, s] : stages_per_worker) max_stages = std::max(max_stages, s.size());
  EXPECT_EQ(max_stages, 2u);
  EXPECT_EQ(stages_per_worker.size(), 3u);
  for (const auto &[ch, w] : rp.placements) EXPECT_TRUE(w >= 0 && w <= 2);
}

TEST(PlaceRecovery, InjectiveWheneverStagesFit) {
  for (int stages = 1; stages <= 4; ++stages) {
    ValidatedPlan plan = ValidatePlan(StatefulChain(stages));
    for (int live = stages; live <= 4; ++live) {
      std::vector<WorkerId> ws;
      for (int w = 0; w < live; ++w) ws.push_back(w * 2);
      RecoveryPlan rp = RewindAll(plan, 1);
      PlaceRecovery(plan, GcsState{}, View(ws, {}), rp);
      std::map<WorkerId, StageId> owner;
      for (const auto &[ch, w] : rp.placements) {
        auto [it, fresh] = owner.emplace(w, ch.stage);
        EXPECT_TRUE(fresh || it->second == ch.stage) << stages << " stages on " << live << " workers";
      }
    }
  }
}

TEST(PlaceRecovery, NoLiveWorkerIsUnrecoverable) {
  ValidatedPlan plan = ValidatePlan(StatefulChain(1));
  RecoveryPlan rp = RewindAll(plan, 1);
  EXPECT_THROW(PlaceRecovery(plan, GcsState{}, View({}, {0}), rp), UnrecoverableError);
}

TEST(ExecuteRecovery, SingleFailureKeepsResult) {
  ValidatedPlan plan = testing::LoadFixture("scan_agg.json");
  FaultSpec f;
  f.faults.push_back(Fault{1, FaultTrigger{FaultTrigger::Kind::kProgress, 0.5}});
  RunResult clean = walq::Run(plan, SimConfig{});
  RunResult r = walq::Run(plan, SimConfig{}, f);
  EXPECT_EQ(r.metrics.result_digest, clean.metrics.result_digest);
  EXPECT_EQ(r.metrics.recoveries, 1);
  EXPECT_TRUE(AuditTrace(r.log).empty());
  auto recs = Records(r.log, "recovery");
  ASSERT_EQ(recs.size(), 1u);
  for (const auto &rw : recs[0].at("rewinds")) {
    EXPECT_NE(rw[0].get<StageId>(), 0) << "sources are reassigned, not rewound";
  }
}

TEST(ExecuteRecovery, FailureBeforeAnyCommitIsAFreshAssignment) {
  ValidatedPlan plan = testing::LoadFixture("two_level_agg.json");
  RunResult r = walq::Run(plan, testing::GoldenConfig(), TimedKills({{1, 0.0}}));
  auto recs = Records(r.log, "recovery");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].at("replays").empty());
  EXPECT_TRUE(recs[0].at("inputs").empty());
  for (const auto &rw : recs[0].at("rewinds")) EXPECT_EQ(rw[2], -1);
  EXPECT_EQ(recs[0].at("reconstructed"), 0);
  EXPECT_EQ(r.metrics.result_digest, walq::Run(plan, testing::GoldenConfig()).metrics.result_digest);
}

TEST(ExecuteRecovery, FailureDuringBarrierIsNested) {
  ValidatedPlan plan = testing::LoadFixture("join3.json");
  // Barrier at 6.0 with reconciliation due at 7.5; worker 3 is detected at 7.0.
  SimConfig c;
  c.cost.recovery_cost = 1.5;
  RunResult r = walq::Run(plan, c, TimedKills({{1, 5.0}, {3, 5.9}}));
  EXPECT_EQ(Records(r.log, "nested").size(), 1u);
  auto recs = Records(r.log, "recovery");
  ASSERT_GE(recs.size(), 1u);
  EXPECT_EQ(recs[0].at("failed"), nlohmann::json({1, 3}));
  EXPECT_TRUE(AuditTrace(r.log).empty());
  EXPECT_EQ(r.metrics.result_digest, walq::Run(plan, c).metrics.result_digest);
}

TEST(ExecuteRecovery, FailureDuringRecoveryIsHandled) {
  ValidatedPlan plan = testing::LoadFixture("join3.json");
  for (auto kind : {StrategyKind::kWal, StrategyKind::kSpool}) {
    SimConfig c;
    c.strategy.kind = kind;
    RunResult r = walq::Run(plan, c, TimedKills({{1, 5.0}, {2, 6.3}}));
    EXPECT_EQ(Records(r.log, "recovery").size(), 2u);
    EXPECT_TRUE(AuditTrace(r.log).empty());
    EXPECT_EQ(r.metrics.result_digest, walq::Run(plan, c).metrics.result_digest);
    auto rep = testing::CheckRecoveryLocality(plan, r.log, kind, c.workers);
    EXPECT_TRUE(rep.mismatches.empty()) << rep.mismatches.front();
  }
}

TEST(PrescribedLineage, ReproducesCommittedConsumptions) {
  GcsState s;
  Transaction t;
  t.kind = "seed";
  t.ops.push_back(gcsop::InsertLineage{LineageEntry{{1, 0, 0}, 0, 3}});
  t.ops.push_back(gcsop::InsertLineage{LineageEntry{{1, 0, 1}, 1, 2}});
  ASSERT_EQ(ApplyToState(s, t, 0), TxnStatus::kOk);
  EXPECT_EQ(PrescribedLineageFor({1, 0}, s),
            (std::vector<LineageEntry>{{{1, 0, 0}, 0, 3}, {{1, 0, 1}, 1, 2}}));
  EXPECT_TRUE(PrescribedLineageFor({1, 1}, s).empty());
}

TEST(PrescribedLineage, RewoundOutputsMatchOriginalDigests) {
  ValidatedPlan plan = testing::LoadFixture("join3.json");
  FaultSpec f;
  f.faults.push_back(Fault{2, FaultTrigger{FaultTrigger::Kind::kProgress, 0.6}});
  RunResult r = walq::Run(plan, SimConfig{}, f);
  std::set<int64_t> committed;
  for (const auto &rec : Records(r.log, "txn")) {
    if (rec.at("status") == "ok" && rec.contains("attempt")) committed.insert(rec.at("attempt").get<int64_t>());
  }
  std::map<TaskName, nlohmann::json> first_out;
  size_t rechecked = 0;
  for (const auto &rec : Records(r.log, "exec")) {
    if (rec.at("kind") != "channel" || !committed.contains(rec.at("attempt").get<int64_t>())) continue;
    TaskName n = TaskNameFromJson(rec.at("task"));
    auto [it, fresh] = first_out.emplace(n, rec.at("out"));
    if (!fresh) {
      ++rechecked;
      EXPECT_EQ(it->second, rec.at("out")) << n;
    }
  }
  EXPECT_GT(rechecked, 0u);
}

TEST(RecoveryPlanJson, CarriesCountsAndEpoch) {
  RecoveryPlan rp;
  rp.failed = {2};
  rp.rewinds = {{{1, 2}, 0}, {{2, 2}, 0}};
  rp.inputs = {InputTask{{0, 2, 0}, {{1, 2}}, 1}, InputTask{{0, 2, 1}, {{1, 2}}, 0}};
  nlohmann::json j = RecoveryPlanToJson(rp, 3);
  EXPECT_EQ(j.at("epoch"), 3);
  EXPECT_EQ(j.at("reconstructed"), 4);
  EXPECT_EQ(j.at("rewinds"), nlohmann::json::parse("[[1,2,0],[2,2,0]]"));
}

TEST(Coordinator, RecoveryBumpsEpochAndClearsBarrier) {
  ValidatedPlan plan = testing::LoadFixture("two_level_agg.json");
  RunResult r = walq::Run(plan, testing::GoldenConfig(), testing::GoldenFaults());
  auto recs = Records(r.log, "recovery");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].at("epoch"), 1);
  GcsState end = testing::ReplayTxns(r.log);
  EXPECT_EQ(end.epoch(), 1);
  EXPECT_FALSE(end.control_flag());
}

}  // namespace
}  // namespace walq
