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

#include "walq/harness/simulator.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "walq/coordinator/recovery.hpp"
#include "walq/gcs/gcs.hpp"
#include "walq/worker/task_manager.hpp"

namespace walq {

using nlohmann::json;

namespace {

constexpr uint64_t kMaxEvents = 50'000'000;

struct ResolvedFault {
  std::optional<WorkerId> worker;
  FaultTrigger::Kind kind = FaultTrigger::Kind::kTime;
  SimTime at = 0;
  int64_t commits = 0;
};

class Sim {
 public:
  Sim(const ValidatedPlan &plan, const SimConfig &cfg, std::vector<ResolvedFault> faults)
      : plan_(plan), cfg_(cfg), faults_(std::move(faults)), gcs_(&log_),
        detector_(ToTicks(cfg.cost.detection_interval)),
        coordinator_(&plan_, &gcs_, &log_, cfg.strategy.kind), rng_(cfg.seed ^ 0x6b696c6cULL) {}

  RunResult Go();

 private:
  struct WorkerSim {
    std::unique_ptr<TaskManager> tm;
    bool alive = true;
    int incarnation = 0;
    SimTime cpu_free = 0;
    SimTime nic_free = 0;
    SimTime disk_free = 0;
    std::set<std::pair<int, TaskName>> in_flight;
    std::map<std::pair<int, TaskName>, int64_t> blocked;  // push failed in this epoch
  };
  struct Attempt {
    int64_t id = 0;
    WorkerId worker = 0;
    int incarnation = 0;
    int64_t epoch = 0;
    PreparedTask task;
  };
  struct Event {
    SimTime t;
    uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event &o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  void Schedule(SimTime t, std::function<void()> fn) { events_.push(Event{t, next_event_++, std::move(fn)}); }
  void Wake(WorkerId w, SimTime t);
  void WakeAll(SimTime t);
  void TryStart(WorkerId w);
  void CpuDone(int64_t att);
  void PushDone(int64_t att);
  void Commit(int64_t att);
  void Finish(int64_t att);
  void Kill(std::optional<WorkerId> target);
  void DetectTick();
  void Reconcile();
  void CheckDone();
  void Deliver(ChannelId target, WorkerId owner, const TaskName &name, const Batch &slice);
  std::vector<WorkerId> LiveWorkers() const;
  static std::pair<int, TaskName> Key(const QueueEntry &e) { return {static_cast<int>(e.kind), e.name}; }
  std::string Dump() const;
  uint64_t NonSinkBytes(const PreparedTask &t) const;

  const ValidatedPlan &plan_;
  SimConfig cfg_;
  std::vector<ResolvedFault> faults_;
  AuditLog log_;
  Gcs gcs_;
  FailureDetector detector_;
  Coordinator coordinator_;
  std::mt19937_64 rng_;
  LocalBackupStore durable_;
  std::vector<WorkerSim> workers_;
  std::map<TaskName, Batch> sink_;
  std::map<int64_t, Attempt> attempts_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::set<std::pair<SimTime, WorkerId>> pending_wakes_;
  uint64_t next_event_ = 0;
  int64_t next_attempt_ = 0;
  SimTime now_ = 0;
  bool done_ = false;
  size_t total_channels_ = 0;
  int64_t channel_commits_ = 0;
  std::set<WorkerId> known_failed_;
  std::set<WorkerId> recovery_set_;
  bool in_recovery_ = false;
  RunMetrics m_;
};

std::vector<WorkerId> Sim::LiveWorkers() const {
  std::vector<WorkerId> out;
  for (size_t w = 0; w < workers_.size(); ++w) {
    if (workers_[w].alive) out.push_back(static_cast<WorkerId>(w));
  }
  return out;
}

void Sim::Wake(WorkerId w, SimTime t) {
  if (!pending_wakes_.emplace(t, w).second) return;
  Schedule(t, [this, w, t] {
    pending_wakes_.erase({t, w});
    TryStart(w);
  });
}

void Sim::WakeAll(SimTime t) {
  for (size_t w = 0; w < workers_.size(); ++w) {
    if (workers_[w].alive) Wake(static_cast<WorkerId>(w), t);
  }
}

uint64_t Sim::NonSinkBytes(const PreparedTask &t) const {
  uint64_t n = 0;
  for (const auto &[target, slice] : t.slices) {
    if (target != kSinkTarget) n += slice.SerializedSize();
  }
  return n;
}

void Sim::TryStart(WorkerId w) {
  WorkerSim &ws = workers_[static_cast<size_t>(w)];
  if (!ws.alive || ws.cpu_free > now_) return;
  PollResult poll = gcs_.PollTasks(w);
  if (poll.control_flag) return;
  ExecContext ctx{&gcs_, now_, cfg_.strategy.batching, cfg_.blocking,
                  cfg_.strategy.kind == StrategyKind::kSpool ? &durable_ : nullptr};
  for (const auto &entry : poll.tasks) {
    auto key = Key(entry);
    if (ws.in_flight.contains(key)) continue;
    auto bit = ws.blocked.find(key);
    if (bit != ws.blocked.end() && bit->second == poll.epoch) continue;
    auto task = ws.tm->Prepare(entry, ctx);
    if (!task) continue;
    if (task->missing_backup) {
      throw UnrecoverableError("replay " + entry.name.ToString() + " on worker " + std::to_string(w) +
                               " found no backup");
    }
    const auto &c = cfg_.cost;
    double cpu = c.task_fixed;
    if (entry.kind == QueueKind::kReplay) {
      double per_byte = cfg_.strategy.kind == StrategyKind::kSpool ? c.durable_per_byte : c.local_disk_per_byte;
      cpu += per_byte * static_cast<double>(task->PushBytes());
    } else {
      cpu += c.kernel_per_row * static_cast<double>(task->input_rows + task->output_rows);
    }
    Attempt att{next_attempt_++, w, ws.incarnation, poll.epoch, std::move(*task)};
    ++m_.task_attempts;

    json rec{{"type", "exec"},   {"t", now_},         {"worker", w},
             {"attempt", att.id}, {"epoch", att.epoch}, {"task", TaskNameToJson(entry.name)}};
    rec["kind"] = entry.kind == QueueKind::kChannel ? "channel" : entry.kind == QueueKind::kReplay ? "replay" : "input";
    if (entry.kind == QueueKind::kChannel) {
      rec["lineage"] = {att.task.lineage.upstream_index, att.task.lineage.count};
      rec["prescribed"] = entry.prescribed.has_value();
    }
    json inputs = json::array();
    for (const auto &in : att.task.inputs) {
      inputs.push_back({in.name.stage, in.name.channel, in.name.seq, in.digest});
    }
    rec["inputs"] = inputs;
    json out = json::array();
    for (const auto &[t, slice] : att.task.slices) out.push_back({t.stage, t.channel, slice.Digest()});
    rec["out"] = out;
    log_.Append(std::move(rec));

    ws.in_flight.insert(key);
    ws.cpu_free = now_ + ToTicks(cpu);
    int64_t id = att.id;
    attempts_.emplace(id, std::move(att));
    Schedule(ws.cpu_free, [this, id] { CpuDone(id); });
    return;
  }
}

void Sim::CpuDone(int64_t id) {
  Attempt &att = attempts_.at(id);
  WorkerSim &ws = workers_[static_cast<size_t>(att.worker)];
  if (!ws.alive || ws.incarnation != att.incarnation) {
    attempts_.erase(id);
    return;
  }
  Wake(att.worker, now_);
  const auto &c = cfg_.cost;
  double nic = 0;
  for (const auto &t : att.task.push_targets) {
    nic += c.net_per_partition + c.net_per_byte * static_cast<double>(att.task.slices.at(t).SerializedSize());
  }
  double disk = 0;
  if (att.task.entry.kind != QueueKind::kReplay) {
    double bytes = static_cast<double>(NonSinkBytes(att.task));
    if (cfg_.strategy.kind == StrategyKind::kSpool) nic += c.durable_per_byte * bytes;
    if (cfg_.strategy.kind == StrategyKind::kWal) disk = c.local_disk_per_byte * bytes;
  }
  SimTime nic_end = std::max(now_, ws.nic_free) + ToTicks(nic);
  ws.nic_free = nic_end;
  SimTime end = nic_end;
  if (disk > 0) {
    SimTime disk_end = std::max(now_, ws.disk_free) + ToTicks(disk);
    ws.disk_free = disk_end;
    end = std::max(end, disk_end);
  }
  Schedule(end, [this, id] { PushDone(id); });
}

void Sim::Deliver(ChannelId target, WorkerId owner, const TaskName &name, const Batch &slice) {
  if (target == kSinkTarget) {
    sink_[name] = slice;
    return;
  }
  workers_[static_cast<size_t>(owner)].tm->buffer().Insert(target, name, slice);
  Wake(owner, now_);
}

void Sim::PushDone(int64_t id) {
  Attempt &att = attempts_.at(id);
  WorkerSim &ws = workers_[static_cast<size_t>(att.worker)];
  if (!ws.alive || ws.incarnation != att.incarnation) {
    attempts_.erase(id);
    return;
  }
  json rec{{"type", "push"},
           {"t", now_},
           {"worker", att.worker},
           {"attempt", id},
           {"task", TaskNameToJson(att.task.entry.name)}};
  const GcsState &st = gcs_.state();
  if (st.epoch() != att.epoch || st.control_flag()) {
    rec["status"] = "aborted";
    log_.Append(std::move(rec));
    Finish(id);
    return;
  }
  bool all_up = true;
  json targets = json::array();
  for (const auto &t : att.task.push_targets) {
    WorkerId owner = t == kSinkTarget ? kNoWorker : st.Owner(t);
    bool up = t == kSinkTarget || (owner >= 0 && workers_[static_cast<size_t>(owner)].alive);
    targets.push_back({t.stage, t.channel, owner, up});
    if (!up) {
      all_up = false;
      continue;
    }
    Deliver(t, owner, att.task.entry.name, att.task.slices.at(t));
  }
  rec["targets"] = targets;
  rec["status"] = all_up ? "ok" : "target_down";
  log_.Append(std::move(rec));
  if (!all_up) {
    ++m_.push_failures;
    ws.blocked[Key(att.task.entry)] = att.epoch;
    Finish(id);
    return;
  }
  Schedule(now_ + ToTicks(cfg_.cost.gcs_txn), [this, id] { Commit(id); });
}

void Sim::Finish(int64_t id) {
  Attempt &att = attempts_.at(id);
  WorkerSim &ws = workers_[static_cast<size_t>(att.worker)];
  if (ws.alive && ws.incarnation == att.incarnation) {
    ws.in_flight.erase(Key(att.task.entry));
    Wake(att.worker, now_);
  }
  attempts_.erase(id);
}

void Sim::Commit(int64_t id) {
  Attempt &att = attempts_.at(id);
  WorkerSim &ws = workers_[static_cast<size_t>(att.worker)];
  if (!ws.alive || ws.incarnation != att.incarnation) {
    attempts_.erase(id);
    return;
  }
  Transaction txn = BuildCompletionTxn(att.task, att.worker, att.epoch, cfg_.strategy.kind, id);
  auto res = gcs_.Apply(txn, now_);
  if (res.ok()) {
    const PreparedTask &t = att.task;
    ws.tm->ApplyCommit(t, cfg_.strategy.kind, &durable_);
    uint64_t backup = NonSinkBytes(t);
    if (t.entry.kind == QueueKind::kReplay) {
      m_.bytes_replayed += t.PushBytes();
    } else {
      if (t.entry.kind == QueueKind::kChannel) {
        ++m_.committed_tasks;
        ++channel_commits_;
        if (!t.entry.prescribed) m_.lineage_bytes += kLineageRecordBytes;
        auto sit = t.slices.find(kSinkTarget);
        if (sit != t.slices.end()) m_.bytes_collected += sit->second.SerializedSize();
        m_.bytes_pushed += backup;
      } else {
        uint64_t pushed = 0;
        for (const auto &target : t.push_targets) pushed += t.slices.at(target).SerializedSize();
        m_.bytes_pushed += pushed;
      }
      if (cfg_.strategy.kind == StrategyKind::kWal) m_.bytes_local += backup;
      if (cfg_.strategy.kind == StrategyKind::kSpool) m_.bytes_durable += backup;
    }
    WakeAll(now_);
    if (gcs_.read_lag() > 0) WakeAll(now_ + gcs_.read_lag());
    for (const auto &f : faults_) {
      if (f.kind == FaultTrigger::Kind::kCommits && f.commits == channel_commits_ &&
          t.entry.kind == QueueKind::kChannel) {
        auto target = f.worker;
        Schedule(now_, [this, target] { Kill(target); });
      }
    }
  }
  Finish(id);
  CheckDone();
}

void Sim::CheckDone() {
  const GcsState &st = gcs_.state();
  if (st.sentinels().size() != total_channels_ || st.control_flag()) return;
  for (const auto &[w, q] : st.tasks()) {
    if (!q.empty()) return;
  }
  done_ = true;
}

void Sim::Kill(std::optional<WorkerId> target) {
  auto live = LiveWorkers();
  WorkerId w;
  if (target) {
    w = *target;
  } else {
    if (live.empty()) return;
    w = live[rng_() % live.size()];
  }
  bool allowed = w >= 0 && static_cast<size_t>(w) < workers_.size() && workers_[static_cast<size_t>(w)].alive &&
                 (live.size() > 1 || cfg_.strategy.kind == StrategyKind::kRestart);
  if (!allowed) {
    log_.Append({{"type", "kill_skipped"}, {"t", now_}, {"worker", w}});
    return;
  }
  WorkerSim &ws = workers_[static_cast<size_t>(w)];
  ws.alive = false;
  ++ws.incarnation;
  ws.tm->Reset();
  ws.in_flight.clear();
  ws.blocked.clear();
  detector_.Heartbeat(w, now_);  // last sign of life
  log_.Append({{"type", "kill"}, {"t", now_}, {"worker", w}});
  SimTime interval = ToTicks(cfg_.cost.detection_interval);
  SimTime tick = (now_ + 2 * interval - 1) / interval * interval;
  Schedule(tick, [this] { DetectTick(); });
}

void Sim::DetectTick() {
  for (WorkerId w : LiveWorkers()) detector_.Heartbeat(w, now_);
  auto newly = detector_.DetectFailures(now_);
  if (newly.empty()) return;
  known_failed_.insert(newly.begin(), newly.end());
  if (in_recovery_) return;  // picked up by the pending reconciliation
  coordinator_.BeginRecovery(now_);
  in_recovery_ = true;
  recovery_set_ = known_failed_;
  Schedule(now_ + ToTicks(cfg_.cost.recovery_cost), [this] { Reconcile(); });
}

void Sim::Reconcile() {
  if (recovery_set_ != known_failed_) {
    log_.Append({{"type", "nested"},
                 {"t", now_},
                 {"failed", std::vector<WorkerId>(known_failed_.begin(), known_failed_.end())}});
    recovery_set_ = known_failed_;
    Schedule(now_ + ToTicks(cfg_.cost.recovery_cost), [this] { Reconcile(); });
    return;
  }
  ClusterView view;
  view.failed = known_failed_;
  for (size_t w = 0; w < workers_.size(); ++w) {
    if (!known_failed_.contains(static_cast<WorkerId>(w))) view.live.push_back(static_cast<WorkerId>(w));
  }
  RecoveryPlan rp = coordinator_.CompleteRecovery(view, now_, static_cast<WorkerId>(workers_.size()));
  in_recovery_ = false;
  ++m_.recoveries;
  m_.rewinds += static_cast<int64_t>(rp.rewinds.size());
  m_.replays += static_cast<int64_t>(rp.replays.size());
  m_.input_tasks += static_cast<int64_t>(rp.inputs.size());
  m_.reconstructed += rp.ReconstructedPartitions();
  for (const auto &[from, to] : rp.replacements) {
    while (workers_.size() <= static_cast<size_t>(to)) {
      WorkerSim ws;
      ws.tm = std::make_unique<TaskManager>(static_cast<WorkerId>(workers_.size()), &plan_);
      ws.cpu_free = ws.nic_free = ws.disk_free = now_;
      detector_.Heartbeat(static_cast<WorkerId>(workers_.size()), now_);
      workers_.push_back(std::move(ws));
    }
  }
  for (auto &ws : workers_) {
    ws.blocked.clear();
    if (rp.restart) ws.tm->Reset();
  }
  if (rp.restart) sink_.clear();
  WakeAll(now_);
  CheckDone();
}

std::string Sim::Dump() const {
  std::ostringstream os;
  const GcsState &st = gcs_.state();
  os << "t=" << now_ << " epoch=" << st.epoch() << " flag=" << st.control_flag() << "\n";
  for (const auto &[w, q] : st.tasks()) {
    os << "worker " << w << (static_cast<size_t>(w) < workers_.size() && workers_[static_cast<size_t>(w)].alive
                                 ? ""
                                 : " (dead)")
       << ":";
    for (const auto &e : q) {
      os << " " << (e.kind == QueueKind::kChannel ? "" : e.kind == QueueKind::kReplay ? "replay" : "input")
         << e.name.ToString() << (e.prescribed ? "*" : "");
    }
    os << "\n";
  }
  for (ChannelId ch : plan_.AllChannels()) {
    os << "channel " << ch.ToString() << " owner=" << st.Owner(ch) << " frontier=" << st.Frontier(ch);
    if (auto s = st.Sentinel(ch)) os << " sentinel=" << *s;
    auto owner = st.Owner(ch);
    if (owner >= 0 && static_cast<size_t>(owner) < workers_.size()) {
      if (const auto *rt = workers_[static_cast<size_t>(owner)].tm->runtime(ch)) {
        os << " next=" << rt->next_seq << " w=[";
        for (auto v : rt->watermarks) os << v << ",";
        os << "]";
      }
    }
    os << "\n";
  }
  return os.str();
}

RunResult Sim::Go() {
  gcs_.set_read_lag(ToTicks(cfg_.read_lag));
  for (int w = 0; w < cfg_.workers; ++w) {
    WorkerSim ws;
    ws.tm = std::make_unique<TaskManager>(w, &plan_);
    workers_.push_back(std::move(ws));
    detector_.Heartbeat(w, 0);
  }
  log_.Append({{"type", "run"}, {"config", ConfigToJson(cfg_)}});
  Transaction init;
  init.kind = "init";
  for (StageId st : plan_.topo_order()) {
    for (int c = 0; c < plan_.stage(st).channels; ++c) {
      ChannelId ch{st, c};
      WorkerId owner = c % cfg_.workers;
      init.ops.push_back(gcsop::SetMapping{ch, owner});
      init.ops.push_back(gcsop::AppendTask{owner, QueueEntry{QueueKind::kChannel, TaskName{st, c, 0}, {}, {}}});
      ++total_channels_;
    }
  }
  gcs_.Apply(init, 0);

  for (const auto &f : faults_) {
    if (f.worker && (*f.worker < 0 || *f.worker >= cfg_.workers)) {
      throw ConfigError("kill target worker " + std::to_string(*f.worker) + " does not exist (workers=" +
                        std::to_string(cfg_.workers) + ")");
    }
    if (f.kind != FaultTrigger::Kind::kCommits) {
      auto target = f.worker;
      Schedule(f.at, [this, target] { Kill(target); });
    }
  }
  WakeAll(0);

  uint64_t processed = 0;
  while (!done_ && !events_.empty()) {
    Event e = events_.top();
    events_.pop();
    now_ = e.t;
    e.fn();
    if (++processed > kMaxEvents) throw DeadlockError("event budget exhausted", Dump());
  }
  if (!done_) throw DeadlockError("no runnable event while the job is incomplete", Dump());

  RunResult out;
  const GcsState &st = gcs_.state();
  for (StageId s : plan_.topo_order()) {
    if (!plan_.IsSink(s)) continue;
    auto &batches = out.result[s];
    for (int c = 0; c < plan_.stage(s).channels; ++c) {
      int64_t n = *st.Sentinel(ChannelId{s, c});
      for (int64_t k = 0; k < n; ++k) batches.push_back(sink_.at(TaskName{s, c, k}));
    }
  }
  m_.makespan = now_;
  m_.txn_count = gcs_.txn_count();
  m_.result_digest = ResultDigest(out.result);
  out.metrics = m_;
  log_.Append({{"type", "result"}, {"t", now_}, {"digest", m_.result_digest}, {"makespan", m_.makespan}});
  log_.Append({{"type", "end"}});
  out.log = log_;
  return out;
}

std::vector<ResolvedFault> Resolve(const ValidatedPlan &plan, const SimConfig &config, const FaultSpec &faults) {
  std::vector<ResolvedFault> out;
  std::optional<SimTime> baseline;
  for (const auto &f : faults.faults) {
    ResolvedFault r;
    r.worker = f.worker;
    r.kind = f.trigger.kind;
    switch (f.trigger.kind) {
      case FaultTrigger::Kind::kProgress:
        if (!baseline) baseline = Run(plan, config, {}).metrics.makespan;
        r.at = static_cast<SimTime>(std::llround(f.trigger.value * static_cast<double>(*baseline)));
        break;
      case FaultTrigger::Kind::kTime: r.at = ToTicks(f.trigger.value); break;
      case FaultTrigger::Kind::kCommits: r.commits = static_cast<int64_t>(std::llround(f.trigger.value)); break;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

RunResult Run(const ValidatedPlan &plan, const SimConfig &config, const FaultSpec &faults) {
  Sim sim(plan, config, Resolve(plan, config, faults));
  return sim.Go();
}

RunMetrics RunBlocking(const ValidatedPlan &plan, SimConfig config) {
  config.blocking = true;
  return Run(plan, config).metrics;
}

SimTime CalibratedTime(const ValidatedPlan &plan, const SimConfig &config, double fraction) {
  SimTime base = Run(plan, config).metrics.makespan;
  return static_cast<SimTime>(std::llround(fraction * static_cast<double>(base)));
}

}  // namespace walq
