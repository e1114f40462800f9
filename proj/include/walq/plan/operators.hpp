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

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "walq/common/ids.hpp"
#include "walq/plan/batch.hpp"

namespace walq {

enum class CompareOp { kLt, kLe, kGt, kGe, kEq, kNe };
enum class MapFn { kAdd, kMul, kMod };
enum class AggFn { kCount, kSum, kMin, kMax };

struct InputReader {
  std::string dataset;
};

/// Keeps rows where `column <op> literal`.
struct Filter {
  std::string column;
  CompareOp op = CompareOp::kGt;
  Value literal = int64_t{0};
};

/// Writes `fn(column, operand)` into `output` (appended, or replaced in place
/// when `output` already exists).
struct Map {
  std::string column;
  MapFn fn = MapFn::kAdd;
  int64_t operand = 0;
  std::string output;
};

struct HashJoinBuild {
  std::string key;
};

/// Joins probe-side rows on `key` against the build side's `build_key`. The
/// build side is the HashJoinBuild stage `build_stage`.
struct HashJoinProbe {
  std::string key;
  std::string build_key;
  StageId build_stage = 0;
};

struct AggSpec {
  AggFn fn = AggFn::kCount;
  std::string column;
  std::string output;
};

struct Aggregate {
  std::vector<std::string> group_by;
  std::vector<AggSpec> aggs;
};

using OperatorKind = std::variant<InputReader, Filter, Map, HashJoinBuild, HashJoinProbe, Aggregate>;

const char *OperatorName(const OperatorKind &op);
bool IsStateful(const OperatorKind &op);
bool IsSource(const OperatorKind &op);

/// Build-side hash table: row store plus key -> row indices in insertion order.
struct JoinTable {
  std::string key;
  Batch rows;
  std::map<Value, std::vector<uint32_t>> index;
  bool operator==(const JoinTable &) const = default;
};

struct AggTable {
  Schema group_schema;
  Schema agg_schema;
  std::map<std::vector<Value>, std::vector<Value>> groups;
  bool operator==(const AggTable &) const = default;
};

/// Per-channel operator state threaded between consecutive tasks of a channel.
using ChannelState = std::variant<std::monostate, JoinTable, AggTable>;

ChannelState InitialState(const OperatorKind &op);
uint64_t StateDigest(const ChannelState &state);

/// Which upstream a batch list came from. Only HashJoinProbe distinguishes.
enum class InputSide { kMain, kBuild };

struct KernelResult {
  ChannelState state;
  Batch output;
};

/// Pure: applies one task's inputs to `state`. Sources pass their split through.
KernelResult ExecuteKernel(const OperatorKind &op, ChannelState state, std::span<const Batch> inputs,
                           InputSide side = InputSide::kMain);

/// End-of-stream output (join build table, aggregate groups); empty otherwise.
Batch FinalizeKernel(const OperatorKind &op, const ChannelState &state);

/// Column a producer must hash-partition on when feeding this operator from
/// `side`; empty when any partitioning works.
std::string RequiredPartitionKey(const OperatorKind &op, InputSide side);

uint64_t PartitionHash(const Value &key);
int PartitionOf(const Value &key, int num_channels);

/// Splits rows by PartitionOf(row[key], n). With an empty key every row goes
/// to channel 0 (only valid for n == 1 or row-less batches).
std::vector<Batch> PartitionBatch(const Batch &batch, const std::string &key, int n);

}  // namespace walq
