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

#include "walq/plan/plan.hpp"

#include <algorithm>
#include <queue>
#include <set>

namespace walq {

const char *PlanErrorName(PlanErrorCode code) {
  switch (code) {
    case PlanErrorCode::kCyclicPlan: return "CyclicPlan";
    case PlanErrorCode::kDanglingEdge: return "DanglingEdge";
    case PlanErrorCode::kMissingPartitioner: return "MissingPartitioner";
    case PlanErrorCode::kInvalidStage: return "InvalidStage";
  }
  return "?";
}

PlanError::PlanError(PlanErrorCode code, StageId stage, const std::string &detail)
    : std::runtime_error(std::string(PlanErrorName(code)) + " at stage " + std::to_string(stage) + ": " + detail),
      code_(code),
      stage_(stage) {}

const StageSpec &ValidatedPlan::stage(StageId id) const { return plan_.stages.at(index_.at(id)); }

int ValidatedPlan::UpstreamIndex(StageId consumer, ChannelId producer) const {
  const auto &up = upstream_.at(consumer);
  for (size_t i = 0; i < up.size(); ++i) {
    if (up[i].channel == producer) return static_cast<int>(i);
  }
  return -1;
}

std::vector<ChannelId> ValidatedPlan::AllChannels() const {
  std::vector<ChannelId> out;
  for (StageId s : topo_) {
    for (int c = 0; c < stage(s).channels; ++c) out.push_back({s, c});
  }
  return out;
}

size_t ValidatedPlan::NumSplits(ChannelId ch) const {
  const auto &reader = std::get<InputReader>(stage(ch.stage).op);
  size_t total = plan_.datasets.at(reader.dataset).batches.size();
  size_t n = static_cast<size_t>(stage(ch.stage).channels);
  size_t c = static_cast<size_t>(ch.channel);
  return total > c ? (total - c + n - 1) / n : 0;
}

std::vector<Batch> ValidatedPlan::SplitsFor(ChannelId ch) const {
  const auto &reader = std::get<InputReader>(stage(ch.stage).op);
  const auto &batches = plan_.datasets.at(reader.dataset).batches;
  std::vector<Batch> out;
  size_t n = static_cast<size_t>(stage(ch.stage).channels);
  for (size_t i = static_cast<size_t>(ch.channel); i < batches.size(); i += n) out.push_back(batches[i]);
  return out;
}

ValidatedPlan ValidatePlan(QueryPlan plan) {
  ValidatedPlan vp;
  if (plan.stages.empty()) throw PlanError(PlanErrorCode::kInvalidStage, -1, "plan has no stages");
  for (size_t i = 0; i < plan.stages.size(); ++i) {
    const auto &s = plan.stages[i];
    if (!vp.index_.emplace(s.id, i).second) {
      throw PlanError(PlanErrorCode::kInvalidStage, s.id, "duplicate stage id");
    }
    if (s.channels < 1) throw PlanError(PlanErrorCode::kInvalidStage, s.id, "channel count must be >= 1");
    if (s.stateful != IsStateful(s.op)) {
      throw PlanError(PlanErrorCode::kInvalidStage, s.id,
                      std::string("stateful flag does not match operator ") + OperatorName(s.op));
    }
    if (auto *r = std::get_if<InputReader>(&s.op); r && !plan.datasets.contains(r->dataset)) {
      throw PlanError(PlanErrorCode::kInvalidStage, s.id, "unknown dataset '" + r->dataset + "'");
    }
    vp.producers_[s.id];
    vp.consumers_[s.id];
  }
  std::set<std::pair<StageId, StageId>> seen_edges;
  for (const auto &[from, to] : plan.edges) {
    if (!vp.index_.contains(from)) {
      throw PlanError(PlanErrorCode::kDanglingEdge, from, "edge references missing stage " + std::to_string(from));
    }
    if (!vp.index_.contains(to)) {
      throw PlanError(PlanErrorCode::kDanglingEdge, to, "edge references missing stage " + std::to_string(to));
    }
    if (from == to) throw PlanError(PlanErrorCode::kCyclicPlan, from, "self edge");
    if (!seen_edges.insert({from, to}).second) continue;
    vp.producers_[to].push_back(from);
    vp.consumers_[from].push_back(to);
  }
  for (auto &[id, v] : vp.producers_) std::sort(v.begin(), v.end());
  for (auto &[id, v] : vp.consumers_) std::sort(v.begin(), v.end());

  // Kahn's algorithm with a min-heap gives the ascending-id tie break.
  std::map<StageId, size_t> indegree;
  for (const auto &[id, p] : vp.producers_) indegree[id] = p.size();
  std::priority_queue<StageId, std::vector<StageId>, std::greater<>> ready;
  for (const auto &[id, d] : indegree) {
    if (d == 0) ready.push(id);
  }
  while (!ready.empty()) {
    StageId s = ready.top();
    ready.pop();
    vp.topo_.push_back(s);
    for (StageId c : vp.consumers_[s]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (vp.topo_.size() != plan.stages.size()) {
    StageId offender = -1;
    for (const auto &[id, d] : indegree) {
      if (d > 0) {
        offender = id;
        break;
      }
    }
    throw PlanError(PlanErrorCode::kCyclicPlan, offender, "stage lies on a cycle");
  }

  for (const auto &s : plan.stages) {
    const auto &prods = vp.producers_[s.id];
    if (IsSource(s.op) && !prods.empty()) {
      throw PlanError(PlanErrorCode::kInvalidStage, s.id, "input reader cannot have producers");
    }
    if (!IsSource(s.op) && prods.empty()) {
      throw PlanError(PlanErrorCode::kInvalidStage, s.id, "non-source stage has no producer");
    }
    if (!vp.consumers_[s.id].empty() && s.partition_key.empty()) {
      throw PlanError(PlanErrorCode::kMissingPartitioner, s.id, "stage feeds consumers but has no partition key");
    }
    if (auto *probe = std::get_if<HashJoinProbe>(&s.op)) {
      if (!std::binary_search(prods.begin(), prods.end(), probe->build_stage)) {
        throw PlanError(PlanErrorCode::kInvalidStage, s.id, "probe build_stage is not a producer");
      }
      if (!std::holds_alternative<HashJoinBuild>(plan.stages[vp.index_[probe->build_stage]].op)) {
        throw PlanError(PlanErrorCode::kInvalidStage, s.id, "probe build_stage is not a hash join build");
      }
      if (prods.size() < 2) throw PlanError(PlanErrorCode::kInvalidStage, s.id, "probe has no probe-side producer");
    }
    auto &up = vp.upstream_[s.id];
    for (StageId p : prods) {
      InputSide side = InputSide::kMain;
      if (auto *probe = std::get_if<HashJoinProbe>(&s.op); probe && probe->build_stage == p) side = InputSide::kBuild;
      const auto &producer = plan.stages[vp.index_[p]];
      std::string need = RequiredPartitionKey(s.op, side);
      if (!need.empty() && producer.partition_key != need && s.channels > 1) {
        throw PlanError(PlanErrorCode::kMissingPartitioner, p,
                        "producer must partition on '" + need + "' to feed stage " + std::to_string(s.id));
      }
      for (int c = 0; c < producer.channels; ++c) up.push_back({{p, c}, side});
    }
  }
  vp.plan_ = std::move(plan);
  return vp;
}

std::vector<StageId> TopologicalStageOrder(const ValidatedPlan &plan) { return plan.topo_order(); }

}  // namespace walq
