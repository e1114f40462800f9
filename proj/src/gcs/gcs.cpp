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

#include "walq/gcs/gcs.hpp"

#include <algorithm>

#include "walq/common/hash.hpp"
#include "walq/gcs/audit_log.hpp"

namespace walq {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

uint64_t HashName(uint64_t h, const TaskName &n) {
  h = MixU64(h, static_cast<uint64_t>(n.stage));
  h = MixU64(h, static_cast<uint64_t>(n.channel));
  return MixU64(h, static_cast<uint64_t>(n.seq));
}

uint64_t LineageHash(const LineageEntry &e) {
  uint64_t h = HashName(kFnvOffset, e.task);
  h = MixU64(h, static_cast<uint64_t>(e.upstream_index));
  return Avalanche(MixU64(h, static_cast<uint64_t>(e.count)));
}

uint64_t LocationHash(const TaskName &n, WorkerId w) {
  return Avalanche(MixU64(HashName(kFnvOffset ^ 0x5a, n), static_cast<uint64_t>(w)));
}

uint64_t SentinelHash(ChannelId c, int64_t count) {
  uint64_t h = MixU64(kFnvOffset ^ 0xa5, static_cast<uint64_t>(c.stage));
  h = MixU64(h, static_cast<uint64_t>(c.channel));
  return Avalanche(MixU64(h, static_cast<uint64_t>(count)));
}

uint64_t HashEntry(uint64_t h, const QueueEntry &e) {
  h = MixU64(h, static_cast<uint64_t>(e.kind));
  h = HashName(h, e.name);
  h = MixU64(h, e.prescribed ? LineageHash(*e.prescribed) : 0);
  for (const auto &t : e.targets) {
    h = MixU64(h, static_cast<uint64_t>(t.stage));
    h = MixU64(h, static_cast<uint64_t>(t.channel));
  }
  return h;
}

const char *KindName(QueueKind k) {
  switch (k) {
    case QueueKind::kChannel: return "channel";
    case QueueKind::kReplay: return "replay";
    case QueueKind::kInput: return "input";
  }
  return "?";
}

QueueKind ParseKind(const std::string &s) {
  if (s == "channel") return QueueKind::kChannel;
  if (s == "replay") return QueueKind::kReplay;
  if (s == "input") return QueueKind::kInput;
  throw std::runtime_error("unknown queue entry kind '" + s + "'");
}

json LineageToJson(const LineageEntry &e) { return {TaskNameToJson(e.task), e.upstream_index, e.count}; }

LineageEntry LineageFromJson(const json &j) {
  return {TaskNameFromJson(j.at(0)), j.at(1).get<int32_t>(), j.at(2).get<int64_t>()};
}

json ChannelToJson(ChannelId c) { return {c.stage, c.channel}; }
ChannelId ChannelFromJson(const json &j) { return {j.at(0).get<StageId>(), j.at(1).get<int32_t>()}; }

}  // namespace

std::vector<uint8_t> EncodeLineage(const LineageEntry &e) {
  std::vector<uint8_t> out;
  auto put = [&](uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  put(static_cast<uint32_t>(e.task.stage), 4);
  put(static_cast<uint32_t>(e.task.channel), 4);
  put(static_cast<uint64_t>(e.task.seq), 8);
  put(static_cast<uint32_t>(e.upstream_index), 4);
  put(static_cast<uint64_t>(e.count), 8);
  return out;
}

const char *TxnStatusName(TxnStatus s) {
  switch (s) {
    case TxnStatus::kOk: return "ok";
    case TxnStatus::kDuplicateCommit: return "DuplicateCommit";
    case TxnStatus::kStaleEpoch: return "StaleEpoch";
    case TxnStatus::kBarrier: return "Barrier";
    case TxnStatus::kFlagAlreadySet: return "FlagAlreadySet";
    case TxnStatus::kFlagNotSet: return "FlagNotSet";
    case TxnStatus::kBadEpoch: return "BadEpoch";
    case TxnStatus::kMissingTask: return "MissingTask";
    case TxnStatus::kLineageConflict: return "LineageConflict";
    case TxnStatus::kCrashed: return "Crashed";
  }
  return "?";
}

TxnStatus ParseTxnStatus(const std::string &s) {
  for (int i = 0; i <= static_cast<int>(TxnStatus::kCrashed); ++i) {
    auto st = static_cast<TxnStatus>(i);
    if (s == TxnStatusName(st)) return st;
  }
  throw std::runtime_error("unknown txn status '" + s + "'");
}

// ---- GcsState ---------------------------------------------------------------

std::optional<LineageEntry> GcsState::Lineage(const TaskName &name) const {
  auto it = lineage_.find(name);
  if (it == lineage_.end()) return std::nullopt;
  return it->second;
}

std::optional<int64_t> GcsState::Sentinel(ChannelId ch) const {
  auto it = sentinels_.find(ch);
  if (it == sentinels_.end()) return std::nullopt;
  return it->second;
}

WorkerId GcsState::Location(const TaskName &name) const {
  auto it = locations_.find(name);
  return it == locations_.end() ? kNoWorker : it->second;
}

WorkerId GcsState::Owner(ChannelId ch) const {
  auto it = mapping_.find(ch);
  return it == mapping_.end() ? kNoWorker : it->second;
}

SimTime GcsState::AppliedAt(const TaskName &name) const {
  auto it = applied_at_.find(name);
  return it == applied_at_.end() ? 0 : it->second;
}

int64_t GcsState::Frontier(ChannelId ch) const {
  auto it = frontier_.find(ch);
  return it == frontier_.end() ? -1 : it->second;
}

uint64_t GcsState::Digest() const {
  uint64_t h = MixU64(kFnvOffset, lineage_sum_);
  h = MixU64(h, location_sum_);
  h = MixU64(h, sentinel_sum_);
  h = MixU64(h, control_flag_ ? 1 : 0);
  h = MixU64(h, static_cast<uint64_t>(epoch_));
  for (const auto &[w, q] : tasks_) {
    if (q.empty()) continue;
    h = MixU64(h, static_cast<uint64_t>(w));
    for (const auto &e : q) h = HashEntry(h, e);
  }
  for (const auto &[c, w] : mapping_) {
    h = MixU64(h, static_cast<uint64_t>(c.stage));
    h = MixU64(h, static_cast<uint64_t>(c.channel));
    h = MixU64(h, static_cast<uint64_t>(w));
  }
  return h;
}

std::vector<std::string> GcsState::CheckInvariants() const {
  std::vector<std::string> out;
  for (const auto &[w, q] : tasks_) {
    for (const auto &e : q) {
      if (e.kind == QueueKind::kChannel && !e.prescribed && lineage_.contains(e.name)) {
        out.push_back("task " + e.name.ToString() + " is both committed and outstanding on worker " +
                      std::to_string(w));
      }
    }
  }
  return out;
}

// ---- transaction application --------------------------------------------------

class TxnApplier {
 public:
  TxnApplier(GcsState &s, SimTime now) : s_(s), now_(now) {}

  TxnStatus Run(const Transaction &txn, const CrashHook &hook) {
    size_t writes = 0;
    try {
      for (const auto &op : txn.ops) {
        auto [status, wrote] = Apply(op);
        if (status != TxnStatus::kOk) {
          Rollback();
          return status;
        }
        if (wrote) {
          if (hook) hook(writes);
          ++writes;
        }
      }
    } catch (const SimulatedCrash &) {
      Rollback();
      return TxnStatus::kCrashed;
    }
    return TxnStatus::kOk;
  }

 private:
  using Step = std::pair<TxnStatus, bool>;  // status, performed a write

  void Rollback() {
    for (auto it = undo_.rbegin(); it != undo_.rend(); ++it) (*it)();
    undo_.clear();
  }

  void PutLineage(const LineageEntry &e) {
    s_.lineage_.emplace(e.task, e);
    s_.applied_at_[e.task] = now_;
    s_.lineage_sum_ += LineageHash(e);
    ChannelId ch = e.task.Channel();
    int64_t old = s_.Frontier(ch);
    s_.frontier_[ch] = std::max(old, e.task.seq);
    undo_.push_back([this, e, ch, old] {
      s_.lineage_.erase(e.task);
      s_.applied_at_.erase(e.task);
      s_.lineage_sum_ -= LineageHash(e);
      if (old < 0) s_.frontier_.erase(ch);
      else s_.frontier_[ch] = old;
    });
  }

  void PushBack(WorkerId w, QueueEntry e) {
    s_.tasks_[w].push_back(std::move(e));
    undo_.push_back([this, w] { s_.tasks_[w].pop_back(); });
  }

  Step Apply(const GcsOp &op) {
    return std::visit(
        Overloaded{
            [&](const gcsop::CheckEpoch &o) -> Step {
              return {o.epoch == s_.epoch_ ? TxnStatus::kOk : TxnStatus::kStaleEpoch, false};
            },
            [&](const gcsop::CheckFlagClear &) -> Step {
              return {s_.control_flag_ ? TxnStatus::kBarrier : TxnStatus::kOk, false};
            },
            [&](const gcsop::InsertLineage &o) -> Step {
              auto it = s_.lineage_.find(o.entry.task);
              if (it != s_.lineage_.end()) {
                if (!(it->second == o.entry)) return {TxnStatus::kLineageConflict, false};
                return {o.allow_equal ? TxnStatus::kOk : TxnStatus::kDuplicateCommit, false};
              }
              PutLineage(o.entry);
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::RemoveTask &o) -> Step {
              auto qit = s_.tasks_.find(o.worker);
              if (qit == s_.tasks_.end()) return {TxnStatus::kMissingTask, false};
              auto &q = qit->second;
              auto it = std::find(q.begin(), q.end(), o.entry);
              if (it == q.end()) return {TxnStatus::kMissingTask, false};
              size_t pos = static_cast<size_t>(it - q.begin());
              QueueEntry saved = *it;
              q.erase(it);
              undo_.push_back([this, w = o.worker, pos, saved] {
                auto &qq = s_.tasks_[w];
                qq.insert(qq.begin() + static_cast<std::ptrdiff_t>(pos), saved);
              });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::AppendTask &o) -> Step {
              PushBack(o.worker, o.entry);
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::AppendSuccessor &o) -> Step {
              QueueEntry e;
              e.kind = QueueKind::kChannel;
              e.name = o.name;
              e.prescribed = s_.Lineage(o.name);
              PushBack(o.worker, std::move(e));
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::SetSentinel &o) -> Step {
              auto old = s_.Sentinel(o.channel);
              if (old) s_.sentinel_sum_ -= SentinelHash(o.channel, *old);
              s_.sentinels_[o.channel] = o.count;
              s_.sentinel_sum_ += SentinelHash(o.channel, o.count);
              undo_.push_back([this, ch = o.channel, count = o.count, old] {
                s_.sentinel_sum_ -= SentinelHash(ch, count);
                if (old) {
                  s_.sentinels_[ch] = *old;
                  s_.sentinel_sum_ += SentinelHash(ch, *old);
                } else {
                  s_.sentinels_.erase(ch);
                }
              });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::SetLocation &o) -> Step {
              WorkerId old = s_.Location(o.name);
              if (old != kNoWorker) s_.location_sum_ -= LocationHash(o.name, old);
              s_.locations_[o.name] = o.worker;
              s_.location_sum_ += LocationHash(o.name, o.worker);
              undo_.push_back([this, n = o.name, w = o.worker, old] {
                s_.location_sum_ -= LocationHash(n, w);
                if (old != kNoWorker) {
                  s_.locations_[n] = old;
                  s_.location_sum_ += LocationHash(n, old);
                } else {
                  s_.locations_.erase(n);
                }
              });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::SetFlag &) -> Step {
              if (s_.control_flag_) return {TxnStatus::kFlagAlreadySet, false};
              s_.control_flag_ = true;
              undo_.push_back([this] { s_.control_flag_ = false; });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::ClearFlag &o) -> Step {
              if (!s_.control_flag_) return {TxnStatus::kFlagNotSet, false};
              if (o.new_epoch != s_.epoch_ + 1) return {TxnStatus::kBadEpoch, false};
              s_.control_flag_ = false;
              s_.epoch_ = o.new_epoch;
              undo_.push_back([this] {
                s_.control_flag_ = true;
                --s_.epoch_;
              });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::ReplaceQueues &o) -> Step {
              TaskQueues old = s_.tasks_;
              s_.tasks_ = o.queues;
              undo_.push_back([this, old = std::move(old)] { s_.tasks_ = old; });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::SetMapping &o) -> Step {
              WorkerId old = s_.Owner(o.channel);
              s_.mapping_[o.channel] = o.worker;
              undo_.push_back([this, ch = o.channel, old] {
                if (old == kNoWorker) s_.mapping_.erase(ch);
                else s_.mapping_[ch] = old;
              });
              return {TxnStatus::kOk, true};
            },
            [&](const gcsop::ResetJob &) -> Step {
              GcsState saved = s_;
              s_.lineage_.clear();
              s_.applied_at_.clear();
              s_.sentinels_.clear();
              s_.locations_.clear();
              s_.frontier_.clear();
              s_.lineage_sum_ = s_.location_sum_ = s_.sentinel_sum_ = 0;
              undo_.push_back([this, saved = std::move(saved)] { s_ = saved; });
              return {TxnStatus::kOk, true};
            }},
        op);
  }

  GcsState &s_;
  SimTime now_;
  std::vector<std::function<void()>> undo_;
};

TxnStatus ApplyToState(GcsState &state, const Transaction &txn, SimTime now, const CrashHook &hook) {
  TxnApplier applier(state, now);
  return applier.Run(txn, hook);
}

// ---- JSON codec for ops -------------------------------------------------------

json TaskNameToJson(const TaskName &n) { return {n.stage, n.channel, n.seq}; }

TaskName TaskNameFromJson(const json &j) {
  return {j.at(0).get<StageId>(), j.at(1).get<int32_t>(), j.at(2).get<int64_t>()};
}

json QueueEntryToJson(const QueueEntry &e) {
  json j{{"kind", KindName(e.kind)}, {"name", TaskNameToJson(e.name)}};
  if (e.prescribed) j["prescribed"] = LineageToJson(*e.prescribed);
  if (!e.targets.empty()) {
    j["targets"] = json::array();
    for (const auto &t : e.targets) j["targets"].push_back(ChannelToJson(t));
  }
  return j;
}

QueueEntry QueueEntryFromJson(const json &j) {
  QueueEntry e;
  e.kind = ParseKind(j.at("kind").get<std::string>());
  e.name = TaskNameFromJson(j.at("name"));
  if (j.contains("prescribed")) e.prescribed = LineageFromJson(j.at("prescribed"));
  if (j.contains("targets")) {
    for (const auto &t : j.at("targets")) e.targets.push_back(ChannelFromJson(t));
  }
  return e;
}

json OpToJson(const GcsOp &op) {
  return std::visit(
      Overloaded{
          [](const gcsop::CheckEpoch &o) -> json { return {{"op", "check_epoch"}, {"epoch", o.epoch}}; },
          [](const gcsop::CheckFlagClear &) -> json { return {{"op", "check_flag_clear"}}; },
          [](const gcsop::InsertLineage &o) -> json {
            return {{"op", "insert_lineage"}, {"entry", LineageToJson(o.entry)}, {"allow_equal", o.allow_equal}};
          },
          [](const gcsop::RemoveTask &o) -> json {
            return {{"op", "remove_task"}, {"worker", o.worker}, {"entry", QueueEntryToJson(o.entry)}};
          },
          [](const gcsop::AppendTask &o) -> json {
            return {{"op", "append_task"}, {"worker", o.worker}, {"entry", QueueEntryToJson(o.entry)}};
          },
          [](const gcsop::AppendSuccessor &o) -> json {
            return {{"op", "append_successor"}, {"worker", o.worker}, {"name", TaskNameToJson(o.name)}};
          },
          [](const gcsop::SetSentinel &o) -> json {
            return {{"op", "set_sentinel"}, {"channel", ChannelToJson(o.channel)}, {"count", o.count}};
          },
          [](const gcsop::SetLocation &o) -> json {
            return {{"op", "set_location"}, {"name", TaskNameToJson(o.name)}, {"worker", o.worker}};
          },
          [](const gcsop::SetFlag &) -> json { return {{"op", "set_flag"}}; },
          [](const gcsop::ClearFlag &o) -> json { return {{"op", "clear_flag"}, {"new_epoch", o.new_epoch}}; },
          [](const gcsop::ReplaceQueues &o) -> json {
            json qs = json::array();
            for (const auto &[w, q] : o.queues) {
              json entries = json::array();
              for (const auto &e : q) entries.push_back(QueueEntryToJson(e));
              qs.push_back({w, entries});
            }
            return {{"op", "replace_queues"}, {"queues", qs}};
          },
          [](const gcsop::SetMapping &o) -> json {
            return {{"op", "set_mapping"}, {"channel", ChannelToJson(o.channel)}, {"worker", o.worker}};
          },
          [](const gcsop::ResetJob &) -> json { return {{"op", "reset_job"}}; }},
      op);
}

GcsOp OpFromJson(const json &j) {
  std::string name = j.at("op").get<std::string>();
  if (name == "check_epoch") return gcsop::CheckEpoch{j.at("epoch").get<int64_t>()};
  if (name == "check_flag_clear") return gcsop::CheckFlagClear{};
  if (name == "insert_lineage") {
    return gcsop::InsertLineage{LineageFromJson(j.at("entry")), j.at("allow_equal").get<bool>()};
  }
  if (name == "remove_task") return gcsop::RemoveTask{j.at("worker").get<WorkerId>(), QueueEntryFromJson(j.at("entry"))};
  if (name == "append_task") return gcsop::AppendTask{j.at("worker").get<WorkerId>(), QueueEntryFromJson(j.at("entry"))};
  if (name == "append_successor") {
    return gcsop::AppendSuccessor{j.at("worker").get<WorkerId>(), TaskNameFromJson(j.at("name"))};
  }
  if (name == "set_sentinel") return gcsop::SetSentinel{ChannelFromJson(j.at("channel")), j.at("count").get<int64_t>()};
  if (name == "set_location") return gcsop::SetLocation{TaskNameFromJson(j.at("name")), j.at("worker").get<WorkerId>()};
  if (name == "set_flag") return gcsop::SetFlag{};
  if (name == "clear_flag") return gcsop::ClearFlag{j.at("new_epoch").get<int64_t>()};
  if (name == "replace_queues") {
    gcsop::ReplaceQueues o;
    for (const auto &wq : j.at("queues")) {
      auto &q = o.queues[wq.at(0).get<WorkerId>()];
      for (const auto &e : wq.at(1)) q.push_back(QueueEntryFromJson(e));
    }
    return o;
  }
  if (name == "set_mapping") return gcsop::SetMapping{ChannelFromJson(j.at("channel")), j.at("worker").get<WorkerId>()};
  if (name == "reset_job") return gcsop::ResetJob{};
  throw std::runtime_error("unknown gcs op '" + name + "'");
}

// ---- Gcs --------------------------------------------------------------------------

TxnResult Gcs::Apply(const Transaction &txn, SimTime now, const CrashHook &hook) {
  std::lock_guard lock(mu_);
  uint64_t pre = state_.Digest();
  TxnStatus status = ApplyToState(state_, txn, now, hook);
  TxnResult res{status, next_txn_id_++};
  if (log_ != nullptr) {
    json ops = json::array();
    for (const auto &op : txn.ops) ops.push_back(OpToJson(op));
    json rec{{"type", "txn"},
             {"id", res.txn_id},
             {"t", now},
             {"epoch", state_.epoch()},
             {"kind", txn.kind},
             {"actor", txn.actor},
             {"status", TxnStatusName(status)},
             {"ops", ops},
             {"pre", pre},
             {"post", state_.Digest()}};
    if (txn.attempt >= 0) rec["attempt"] = txn.attempt;
    log_->Append(std::move(rec));
  }
  return res;
}

TxnResult Gcs::CommitTaskCompletion(WorkerId worker, const QueueEntry &task, const LineageEntry &lineage,
                                    std::optional<TaskName> successor, int64_t epoch, SimTime now,
                                    std::optional<int64_t> sentinel, WorkerId location, int64_t attempt,
                                    const CrashHook &hook) {
  Transaction txn;
  txn.kind = "commit";
  txn.actor = worker;
  txn.attempt = attempt;
  txn.ops.push_back(gcsop::CheckEpoch{epoch});
  txn.ops.push_back(gcsop::CheckFlagClear{});
  txn.ops.push_back(gcsop::InsertLineage{lineage, task.prescribed.has_value()});
  txn.ops.push_back(gcsop::RemoveTask{worker, task});
  if (successor) txn.ops.push_back(gcsop::AppendSuccessor{worker, *successor});
  if (sentinel) txn.ops.push_back(gcsop::SetSentinel{task.name.Channel(), *sentinel});
  if (location != kNoWorker) txn.ops.push_back(gcsop::SetLocation{task.name, location});
  return Apply(txn, now, hook);
}

std::optional<LineageEntry> Gcs::ReadLineage(const TaskName &name, SimTime now) const {
  std::lock_guard lock(mu_);
  auto e = state_.Lineage(name);
  if (!e) return std::nullopt;
  if (state_.AppliedAt(name) + read_lag_ > now) return std::nullopt;
  return e;
}

std::optional<SimTime> Gcs::VisibleAt(const TaskName &name) const {
  std::lock_guard lock(mu_);
  if (!state_.lineage().contains(name)) return std::nullopt;
  return state_.AppliedAt(name) + read_lag_;
}

PollResult Gcs::PollTasks(WorkerId worker) const {
  std::lock_guard lock(mu_);
  PollResult r;
  auto it = state_.tasks().find(worker);
  if (it != state_.tasks().end()) r.tasks = it->second;
  r.control_flag = state_.control_flag();
  r.epoch = state_.epoch();
  return r;
}

TxnStatus Gcs::SetControlFlag(SimTime now) {
  Transaction txn{"set_flag", kNoWorker, -1, {gcsop::SetFlag{}}};
  return Apply(txn, now).status;
}

TxnStatus Gcs::ClearControlFlag(int64_t new_epoch, SimTime now) {
  Transaction txn{"clear_flag", kNoWorker, -1, {gcsop::ClearFlag{new_epoch}}};
  return Apply(txn, now).status;
}

GcsState Gcs::Snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

}  // namespace walq
