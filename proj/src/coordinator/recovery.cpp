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

#include "walq/coordinator/recovery.hpp"

#include <algorithm>

#include "walq/gcs/audit_log.hpp"

namespace walq {

using nlohmann::json;

bool ClusterView::IsLive(WorkerId w) const { return std::binary_search(live.begin(), live.end(), w); }

std::set<WorkerId> FailureDetector::DetectFailures(SimTime now) {
  std::set<WorkerId> out;
  for (const auto &[w, t] : last_) {
    if (now - t >= interval_ && !reported_.contains(w)) out.insert(w);
  }
  reported_.insert(out.begin(), out.end());
  return out;
}

int64_t RecoveryPlan::ReconstructedPartitions() const {
  int64_t n = static_cast<int64_t>(inputs.size());
  for (const auto &[ch, frontier] : rewinds) n += frontier + 1;
  return n;
}

std::vector<LineageEntry> PrescribedLineageFor(ChannelId channel, const GcsState &snapshot) {
  std::vector<LineageEntry> out;
  for (int64_t k = 0; k <= snapshot.Frontier(channel); ++k) {
    auto e = snapshot.Lineage(TaskName{channel.stage, channel.channel, k});
    if (!e) throw UnrecoverableError("lineage gap at " + TaskName{channel.stage, channel.channel, k}.ToString());
    out.push_back(*e);
  }
  return out;
}

namespace {

struct Planner {
  const ValidatedPlan &plan;
  const GcsState &s;
  const ClusterView &view;
  StrategyKind strategy;
  // Lowest queued seq of each channel held by a live worker.
  std::map<ChannelId, int64_t> live_position;

  bool LocationAlive(WorkerId loc) const {
    if (loc == kDurableStore) return strategy == StrategyKind::kSpool;
    return loc >= 0 && view.IsLive(loc);
  }
  // An ongoing rewind on a live worker will regenerate this partition.
  bool Covered(const TaskName &n) const {
    auto it = live_position.find(n.Channel());
    return it != live_position.end() && it->second <= n.seq;
  }
  bool IsSourceStage(StageId st) const { return IsSource(plan.stage(st).op); }
  // Committed output that nobody can serve any more.
  bool Lost(const TaskName &n) const { return !LocationAlive(s.Location(n)) && !Covered(n); }
};

void AddTarget(std::vector<ChannelId> &targets, ChannelId t) {
  if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
}

}  // namespace

RecoveryPlan PlanRecovery(const ValidatedPlan &plan, const GcsState &snapshot, const ClusterView &view,
                          StrategyKind strategy) {
  Planner p{plan, snapshot, view, strategy, {}};
  RecoveryPlan rp;
  rp.failed = view.failed;

  for (const auto &[w, q] : snapshot.tasks()) {
    if (!view.IsLive(w)) continue;
    for (const auto &e : q) {
      if (e.kind != QueueKind::kChannel) continue;
      auto [it, inserted] = p.live_position.emplace(e.name.Channel(), e.name.seq);
      if (!inserted) it->second = std::min(it->second, e.name.seq);
    }
  }

  // Seeds: channel tasks stranded on failed workers.
  std::set<ChannelId> rewind;
  std::vector<std::pair<TaskName, ChannelId>> lost_needs;
  for (const auto &[w, q] : snapshot.tasks()) {
    if (view.IsLive(w)) continue;
    for (const auto &e : q) {
      if (e.kind == QueueKind::kChannel) {
        if (p.IsSourceStage(e.name.stage)) {
          rp.reassigned[e.name.Channel()] = e;
        } else {
          rewind.insert(e.name.Channel());
        }
      } else {
        for (const auto &t : e.targets) lost_needs.emplace_back(e.name, t);
      }
    }
  }
  // Replay/input obligations lost with their worker: the partition must come
  // from somewhere else.
  for (const auto &[name, target] : lost_needs) {
    if (rewind.contains(target) || p.IsSourceStage(name.stage)) continue;
    if (p.Lost(name)) rewind.insert(name.Channel());
  }

  // Close the rewind set in reverse topological order.
  const auto &topo = plan.topo_order();
  for (auto sit = topo.rbegin(); sit != topo.rend(); ++sit) {
    for (int c = 0; c < plan.stage(*sit).channels; ++c) {
      ChannelId x{*sit, c};
      if (!rewind.contains(x)) continue;
      for (const auto &up : plan.upstream(x.stage)) {
        ChannelId u = up.channel;
        if (rewind.contains(u) || p.IsSourceStage(u.stage)) continue;
        for (int64_t k = 0; k <= snapshot.Frontier(u); ++k) {
          if (p.Lost(TaskName{u.stage, u.channel, k})) {
            rewind.insert(u);
            break;
          }
        }
      }
    }
  }
  for (ChannelId x : rewind) rp.rewinds[x] = snapshot.Frontier(x);

  // Every committed output a rewound channel needs from outside the set.
  std::map<TaskName, ReplayTask> replays;
  std::map<TaskName, InputTask> inputs;
  auto need = [&](const TaskName &name, ChannelId target) {
    if (p.Covered(name)) return;
    WorkerId loc = snapshot.Location(name);
    if (p.LocationAlive(loc)) {
      auto &r = replays[name];
      r.name = name;
      r.owner = loc;
      AddTarget(r.targets, target);
    } else if (p.IsSourceStage(name.stage)) {
      auto &in = inputs[name];
      in.name = name;
      AddTarget(in.targets, target);
    } else {
      throw UnrecoverableError("partition " + name.ToString() + " needed by " + target.ToString() +
                               " has no live copy and its channel is not rewound");
    }
  };
  for (StageId st : topo) {
    for (int c = 0; c < plan.stage(st).channels; ++c) {
      ChannelId x{st, c};
      if (!rewind.contains(x)) continue;
      for (const auto &up : plan.upstream(st)) {
        ChannelId u = up.channel;
        if (rewind.contains(u)) continue;
        for (int64_t k = 0; k <= snapshot.Frontier(u); ++k) need(TaskName{u.stage, u.channel, k}, x);
      }
    }
  }
  for (const auto &[name, target] : lost_needs) {
    if (rewind.contains(target) || rewind.contains(name.Channel())) continue;
    need(name, target);
  }
  for (auto &[n, r] : replays) rp.replays.push_back(std::move(r));
  for (auto &[n, in] : inputs) rp.inputs.push_back(std::move(in));

  // Pending obligations on live workers, minus targets now being rewound.
  for (const auto &[w, q] : snapshot.tasks()) {
    if (!view.IsLive(w)) continue;
    for (const auto &e : q) {
      if (e.kind == QueueKind::kChannel) continue;
      QueueEntry kept = e;
      std::erase_if(kept.targets, [&](ChannelId t) { return rewind.contains(t); });
      if (!kept.targets.empty()) rp.carried[w].push_back(std::move(kept));
    }
  }
  return rp;
}

void PlaceRecovery(const ValidatedPlan &plan, const GcsState &snapshot, const ClusterView &view, RecoveryPlan &rp,
                   size_t offset) {
  if (view.live.empty()) throw UnrecoverableError("no live workers left");
  const size_t n = view.live.size();
  std::vector<StageId> stateful;
  for (const auto &[ch, f] : rp.rewinds) {
    if (plan.stage(ch.stage).stateful &&
        std::find(stateful.begin(), stateful.end(), ch.stage) == stateful.end()) {
      stateful.push_back(ch.stage);
    }
  }
  std::sort(stateful.begin(), stateful.end());
  size_t rr = offset + stateful.size();
  auto next = [&] { return view.live[rr++ % n]; };

  for (const auto &[ch, f] : rp.rewinds) {
    auto it = std::find(stateful.begin(), stateful.end(), ch.stage);
    if (it != stateful.end()) {
      rp.placements[ch] = view.live[(offset + static_cast<size_t>(it - stateful.begin())) % n];
    }
  }
  for (const auto &[ch, f] : rp.rewinds) {
    if (!rp.placements.contains(ch)) rp.placements[ch] = next();
  }
  for (const auto &[ch, e] : rp.reassigned) rp.placements[ch] = next();
  for (const auto &[ch, w] : snapshot.mapping()) {
    if (!view.IsLive(w) && !rp.placements.contains(ch)) rp.placements[ch] = next();
  }
  for (auto &in : rp.inputs) in.assigned = next();
  for (auto &r : rp.replays) r.assigned = r.owner >= 0 ? r.owner : next();
}

RecoveryPlan PlanRestart(const ValidatedPlan &plan, const GcsState &snapshot, const ClusterView &view,
                         WorkerId next_id) {
  RecoveryPlan rp;
  rp.restart = true;
  rp.failed = view.failed;
  for (ChannelId ch : plan.AllChannels()) {
    WorkerId w = snapshot.Owner(ch);
    if (!view.IsLive(w)) {
      auto it = rp.replacements.find(w);
      if (it == rp.replacements.end()) it = rp.replacements.emplace(w, next_id++).first;
      rp.placements[ch] = it->second;
    }
    rp.rewinds[ch] = snapshot.Frontier(ch);
  }
  return rp;
}

Transaction BuildReconcileTxn(const ValidatedPlan &plan, const GcsState &snapshot, const RecoveryPlan &rp) {
  Transaction txn;
  txn.kind = rp.restart ? "restart" : "reconcile";
  TaskQueues queues;
  auto owner = [&](ChannelId ch) {
    auto it = rp.placements.find(ch);
    return it != rp.placements.end() ? it->second : snapshot.Owner(ch);
  };
  if (rp.restart) {
    txn.ops.push_back(gcsop::ResetJob{});
    for (StageId st : plan.topo_order()) {
      for (int c = 0; c < plan.stage(st).channels; ++c) {
        QueueEntry e;
        e.name = TaskName{st, c, 0};
        queues[owner(ChannelId{st, c})].push_back(e);
      }
    }
  } else {
    for (const auto &[w, q] : snapshot.tasks()) {
      if (rp.failed.contains(w)) continue;
      auto &out = queues[w];
      for (const auto &e : q) {
        if (e.kind == QueueKind::kChannel && !rp.rewinds.contains(e.name.Channel())) out.push_back(e);
      }
      auto cit = rp.carried.find(w);
      if (cit != rp.carried.end()) out.insert(out.end(), cit->second.begin(), cit->second.end());
    }
    for (const auto &[ch, f] : rp.rewinds) {
      QueueEntry e;
      e.name = TaskName{ch.stage, ch.channel, 0};
      e.prescribed = snapshot.Lineage(e.name);
      queues[owner(ch)].push_back(e);
    }
    for (const auto &[ch, e] : rp.reassigned) queues[owner(ch)].push_back(e);
    for (const auto &r : rp.replays) {
      queues[r.assigned].push_back(QueueEntry{QueueKind::kReplay, r.name, std::nullopt, r.targets});
    }
    for (const auto &in : rp.inputs) {
      queues[in.assigned].push_back(QueueEntry{QueueKind::kInput, in.name, std::nullopt, in.targets});
    }
  }
  std::erase_if(queues, [](const auto &kv) { return kv.second.empty(); });
  txn.ops.push_back(gcsop::ReplaceQueues{std::move(queues)});
  for (const auto &[ch, w] : rp.placements) {
    if (snapshot.Owner(ch) != w) txn.ops.push_back(gcsop::SetMapping{ch, w});
  }
  return txn;
}

json RecoveryPlanToJson(const RecoveryPlan &rp, int64_t epoch) {
  json j{{"type", "recovery"}, {"epoch", epoch}, {"restart", rp.restart}};
  j["failed"] = json(std::vector<WorkerId>(rp.failed.begin(), rp.failed.end()));
  json rw = json::array();
  for (const auto &[ch, f] : rp.rewinds) rw.push_back({ch.stage, ch.channel, f});
  j["rewinds"] = rw;
  json ra = json::array();
  for (const auto &[ch, e] : rp.reassigned) ra.push_back({ch.stage, ch.channel, e.name.seq});
  j["reassigned"] = ra;
  auto targets = [](const std::vector<ChannelId> &ts) {
    json a = json::array();
    for (const auto &t : ts) a.push_back({t.stage, t.channel});
    return a;
  };
  json rep = json::array();
  for (const auto &r : rp.replays) {
    rep.push_back({{"name", TaskNameToJson(r.name)}, {"owner", r.owner}, {"assigned", r.assigned},
                   {"targets", targets(r.targets)}});
  }
  j["replays"] = rep;
  json in = json::array();
  for (const auto &t : rp.inputs) {
    in.push_back({{"name", TaskNameToJson(t.name)}, {"assigned", t.assigned}, {"targets", targets(t.targets)}});
  }
  j["inputs"] = in;
  json pl = json::array();
  for (const auto &[ch, w] : rp.placements) pl.push_back({ch.stage, ch.channel, w});
  j["placements"] = pl;
  json rep_ids = json::array();
  for (const auto &[from, to] : rp.replacements) rep_ids.push_back({from, to});
  j["replacements"] = rep_ids;
  j["reconstructed"] = rp.ReconstructedPartitions();
  return j;
}

bool Coordinator::BeginRecovery(SimTime now) { return gcs_->SetControlFlag(now) == TxnStatus::kOk; }

RecoveryPlan Coordinator::CompleteRecovery(const ClusterView &view, SimTime now, WorkerId next_id) {
  GcsState snap = gcs_->Snapshot();
  RecoveryPlan rp;
  if (strategy_ == StrategyKind::kRestart) {
    rp = PlanRestart(*plan_, snap, view, next_id);
  } else {
    rp = PlanRecovery(*plan_, snap, view, strategy_);
    PlaceRecovery(*plan_, snap, view, rp);
  }
  Transaction txn = BuildReconcileTxn(*plan_, snap, rp);
  auto res = gcs_->Apply(txn, now);
  if (!res.ok()) throw UnrecoverableError(std::string("reconciliation rejected: ") + TxnStatusName(res.status));
  int64_t epoch = snap.epoch() + 1;
  TxnStatus st = gcs_->ClearControlFlag(epoch, now);
  if (st != TxnStatus::kOk) throw UnrecoverableError(std::string("barrier clear rejected: ") + TxnStatusName(st));
  if (log_ != nullptr) {
    json rec = RecoveryPlanToJson(rp, epoch);
    rec["t"] = now;
    log_->Append(std::move(rec));
  }
  return rp;
}

RecoveryPlan Coordinator::ExecuteRecovery(const ClusterView &view, SimTime now, WorkerId next_id) {
  BeginRecovery(now);
  return CompleteRecovery(view, now, next_id);
}

}  // namespace walq
