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

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "walq/common/ids.hpp"
#include "walq/plan/batch.hpp"
#include "walq/plan/operators.hpp"

namespace walq {

struct Dataset {
  Schema schema;
  std::vector<Batch> batches;
};

struct StageSpec {
  StageId id = 0;
  int channels = 1;
  OperatorKind op;
  /// Column the stage's output is hash-partitioned on for its consumers.
  std::string partition_key;
  bool stateful = false;
};

struct QueryPlan {
  std::vector<StageSpec> stages;
  std::vector<std::pair<StageId, StageId>> edges;  // producer -> consumer
  std::map<std::string, Dataset> datasets;
};

enum class PlanErrorCode { kCyclicPlan, kDanglingEdge, kMissingPartitioner, kInvalidStage };

const char *PlanErrorName(PlanErrorCode code);

class PlanError : public std::runtime_error {
 public:
  PlanError(PlanErrorCode code, StageId stage, const std::string &detail);
  PlanErrorCode code() const { return code_; }
  StageId stage() const { return stage_; }

 private:
  PlanErrorCode code_;
  StageId stage_;
};

struct UpstreamChannel {
  ChannelId channel;
  InputSide side = InputSide::kMain;
};

/// A plan that passed validation, with derived topology.
class ValidatedPlan {
 public:
  const QueryPlan &plan() const { return plan_; }
  const StageSpec &stage(StageId id) const;
  bool HasStage(StageId id) const { return index_.contains(id); }
  const std::vector<StageId> &topo_order() const { return topo_; }
  const std::vector<StageId> &producers(StageId id) const { return producers_.at(id); }
  const std::vector<StageId> &consumers(StageId id) const { return consumers_.at(id); }
  /// Upstream channel list of a stage: channels of its producers in ascending
  /// producer id. Its length is the stage's C; lineage index i points into it.
  const std::vector<UpstreamChannel> &upstream(StageId id) const { return upstream_.at(id); }
  int UpstreamIndex(StageId consumer, ChannelId producer) const;
  bool IsSink(StageId id) const { return consumers_.at(id).empty(); }
  std::vector<ChannelId> AllChannels() const;
  /// Input splits read by a source channel: batches c, c+n, c+2n, ...
  std::vector<Batch> SplitsFor(ChannelId ch) const;
  size_t NumSplits(ChannelId ch) const;

 private:
  friend ValidatedPlan ValidatePlan(QueryPlan plan);
  QueryPlan plan_;
  std::map<StageId, size_t> index_;
  std::vector<StageId> topo_;
  std::map<StageId, std::vector<StageId>> producers_;
  std::map<StageId, std::vector<StageId>> consumers_;
  std::map<StageId, std::vector<UpstreamChannel>> upstream_;
};

/// Checks structure and derives topology; throws PlanError naming the stage.
ValidatedPlan ValidatePlan(QueryPlan plan);

/// Producers before consumers, ties broken by ascending stage id.
std::vector<StageId> TopologicalStageOrder(const ValidatedPlan &plan);

}  // namespace walq
