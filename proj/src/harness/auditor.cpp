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

#include "walq/harness/auditor.hpp"

#include <algorithm>

namespace walq {

using nlohmann::json;

namespace {

std::map<ChannelId, uint64_t> OutDigests(const json &exec) {
  std::map<ChannelId, uint64_t> out;
  for (const auto &o : exec.at("out")) {
    out[ChannelId{o.at(0).get<StageId>(), o.at(1).get<int32_t>()}] = o.at(2).get<uint64_t>();
  }
  return out;
}

}  // namespace

void Auditor::Observe(const json &rec) {
  const std::string type = rec.value("type", "");
  try {
    if (type == "txn") {
      OnTxn(rec);
    } else if (type == "exec") {
      OnExec(rec);
    } else if (type == "push") {
      if (rec.at("status") == "target_down") failed_pushes_.insert(rec.at("attempt").get<int64_t>());
    } else if (type == "recovery") {
      OnRecovery(rec);
    }
  } catch (const json::exception &e) {
    Violation("malformed " + type + " record: " + e.what());
  } catch (const std::runtime_error &e) {
    Violation("malformed " + type + " record: " + e.what());
  }
}

void Auditor::OnTxn(const json &rec) {
  const uint64_t id = rec.at("id").get<uint64_t>();
  const std::string tag = "txn " + std::to_string(id);
  if (shadow_.Digest() != rec.at("pre").get<uint64_t>()) Violation(tag + ": pre-state digest mismatch");

  Transaction txn;
  txn.kind = rec.at("kind").get<std::string>();
  txn.actor = rec.at("actor").get<WorkerId>();
  txn.attempt = rec.value("attempt", int64_t{-1});
  for (const auto &op : rec.at("ops")) txn.ops.push_back(OpFromJson(op));

  // Names re-committed by this transaction (before it is applied).
  std::vector<TaskName> recommits;
  for (const auto &op : txn.ops) {
    if (const auto *ins = std::get_if<gcsop::InsertLineage>(&op)) {
      if (shadow_.Lineage(ins->entry.task)) recommits.push_back(ins->entry.task);
    }
  }
  TxnStatus recorded = ParseTxnStatus(rec.at("status").get<std::string>());
  TxnStatus replayed = ApplyToState(shadow_, txn, rec.at("t").get<SimTime>());
  if (recorded != replayed) {
    Violation(tag + ": recorded status " + TxnStatusName(recorded) + " but replay gives " + TxnStatusName(replayed));
  }
  if (shadow_.Digest() != rec.at("post").get<uint64_t>()) Violation(tag + ": post-state digest mismatch");
  for (const auto &v : shadow_.CheckInvariants()) Violation(tag + ": " + v);
  if (replayed != TxnStatus::kOk) return;

  if (txn.kind == "commit" || txn.kind == "input_done") {
    TaskName name;
    for (const auto &op : txn.ops) {
      if (const auto *rm = std::get_if<gcsop::RemoveTask>(&op)) name = rm->entry.name;
    }
    if (failed_pushes_.contains(txn.attempt)) {
      Violation(tag + ": task " + name.ToString() + " committed after its push failed (attempt " +
                std::to_string(txn.attempt) + ")");
    }
    for (const auto &r : recommits) {
      auto it = rewind_allowed_.find(r.Channel());
      if (it == rewind_allowed_.end() || r.seq > it->second) {
        Violation(tag + ": task " + r.ToString() + " re-executed outside every declared rewind");
      }
    }
    auto eit = execs_.find(txn.attempt);
    if (eit == execs_.end()) {
      Violation(tag + ": commit of " + name.ToString() + " has no exec record");
      return;
    }
    auto digests = OutDigests(eit->second);
    auto [cit, fresh] = committed_out_.emplace(name, digests);
    if (!fresh) {
      for (const auto &[target, d] : digests) {
        auto old = cit->second.find(target);
        if (old != cit->second.end() && old->second != d) {
          Violation(tag + ": output of " + name.ToString() + " for " + target.ToString() +
                    " differs from its first commit");
        }
      }
    }
  }
}

void Auditor::OnExec(const json &rec) {
  const int64_t attempt = rec.at("attempt").get<int64_t>();
  const TaskName name = TaskNameFromJson(rec.at("task"));
  const std::string kind = rec.at("kind").get<std::string>();
  execs_[attempt] = rec;
  if (kind == "replay" && !declared_replays_.contains(name)) {
    Violation("replay of " + name.ToString() + " was never declared by a recovery");
  }
  if (kind == "input" && !declared_inputs_.contains(name)) {
    Violation("input task " + name.ToString() + " was never declared by a recovery");
  }
  if (kind != "channel") return;
  ChannelId consumer = name.Channel();
  for (const auto &in : rec.at("inputs")) {
    TaskName src{in.at(0).get<StageId>(), in.at(1).get<int32_t>(), in.at(2).get<int64_t>()};
    if (!shadow_.Lineage(src)) {
      Violation("gating: " + name.ToString() + " consumed " + src.ToString() + " before its lineage committed");
      continue;
    }
    auto cit = committed_out_.find(src);
    if (cit == committed_out_.end()) continue;
    auto dit = cit->second.find(consumer);
    if (dit != cit->second.end() && dit->second != in.at(3).get<uint64_t>()) {
      Violation("task " + name.ToString() + " consumed a payload of " + src.ToString() +
                " that differs from the committed one");
    }
  }
}

void Auditor::OnRecovery(const json &rec) {
  if (rec.value("restart", false)) {
    // The job restarts from scratch: names are reused by fresh executions.
    committed_out_.clear();
    rewind_allowed_.clear();
    return;
  }
  for (const auto &r : rec.at("rewinds")) {
    ChannelId ch{r.at(0).get<StageId>(), r.at(1).get<int32_t>()};
    int64_t f = r.at(2).get<int64_t>();
    auto [it, inserted] = rewind_allowed_.emplace(ch, f);
    if (!inserted) it->second = std::max(it->second, f);
  }
  for (const auto &r : rec.at("replays")) declared_replays_.insert(TaskNameFromJson(r.at("name")));
  for (const auto &r : rec.at("inputs")) declared_inputs_.insert(TaskNameFromJson(r.at("name")));
}

std::vector<std::string> AuditTrace(const AuditLog &log) {
  Auditor a;
  for (const auto &rec : log.records()) a.Observe(rec);
  return a.violations();
}

}  // namespace walq
