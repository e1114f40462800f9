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

#include "walq/plan/operators.hpp"

#include <bit>

#include "walq/common/hash.hpp"

namespace walq {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr uint64_t kPartitionMultiplier = 0x9e3779b97f4a7c15ULL;

bool Compare(const Value &lhs, CompareOp op, const Value &rhs) {
  switch (op) {
    case CompareOp::kLt: return lhs < rhs;
    case CompareOp::kLe: return lhs <= rhs;
    case CompareOp::kGt: return lhs > rhs;
    case CompareOp::kGe: return lhs >= rhs;
    case CompareOp::kEq: return lhs == rhs;
    case CompareOp::kNe: return lhs != rhs;
  }
  return false;
}

Batch RunFilter(const Filter &f, std::span<const Batch> inputs) {
  Batch out;
  for (const auto &in : inputs) {
    if (in.schema().empty()) continue;
    size_t col = in.ColumnIndex(f.column);
    if (in.schema()[col].type != TypeOf(f.literal)) {
      throw SchemaMismatch("filter: literal type does not match column '" + f.column + "'");
    }
    Batch part(in.schema());
    for (size_t r = 0; r < in.row_count(); ++r) {
      if (Compare(in.At(col, r), f.op, f.literal)) part.AppendRowFrom(in, r);
    }
    if (out.schema().empty()) out = Batch(in.schema());
    out.Append(part);
  }
  return out;
}

template <class T>
T ApplyMap(MapFn fn, T x, int64_t operand) {
  switch (fn) {
    case MapFn::kAdd: return x + static_cast<T>(operand);
    case MapFn::kMul: return x * static_cast<T>(operand);
    case MapFn::kMod:
      if constexpr (std::is_same_v<T, int64_t>) {
        if (operand == 0) throw SchemaMismatch("map: modulo by zero");
        int64_t m = x % operand;
        return m < 0 ? m + (operand < 0 ? -operand : operand) : m;
      } else {
        throw SchemaMismatch("map: modulo requires an int64 column");
      }
  }
  return x;
}

Batch RunMap(const Map &m, std::span<const Batch> inputs) {
  Batch out;
  for (const auto &in : inputs) {
    if (in.schema().empty()) continue;
    size_t col = in.ColumnIndex(m.column);
    ColumnData result;
    if (auto *ints = std::get_if<std::vector<int64_t>>(&in.column(col))) {
      std::vector<int64_t> v(ints->size());
      for (size_t i = 0; i < v.size(); ++i) v[i] = ApplyMap<int64_t>(m.fn, (*ints)[i], m.operand);
      result = std::move(v);
    } else if (auto *dbl = std::get_if<std::vector<double>>(&in.column(col))) {
      std::vector<double> v(dbl->size());
      for (size_t i = 0; i < v.size(); ++i) v[i] = ApplyMap<double>(m.fn, (*dbl)[i], m.operand);
      result = std::move(v);
    } else {
      throw SchemaMismatch("map: column '" + m.column + "' is not numeric");
    }
    Schema schema = in.schema();
    std::vector<ColumnData> cols;
    for (size_t c = 0; c < in.num_columns(); ++c) cols.push_back(in.column(c));
    DataType out_type = in.schema()[col].type;
    if (in.HasColumn(m.output)) {
      size_t oc = in.ColumnIndex(m.output);
      schema[oc].type = out_type;
      cols[oc] = std::move(result);
    } else {
      schema.push_back({m.output, out_type});
      cols.push_back(std::move(result));
    }
    Batch part(std::move(schema), std::move(cols));
    if (out.schema().empty()) out = Batch(part.schema());
    out.Append(part);
  }
  return out;
}

void BuildInto(JoinTable &table, std::span<const Batch> inputs) {
  for (const auto &in : inputs) {
    if (in.schema().empty()) continue;
    size_t key = in.ColumnIndex(table.key);
    if (table.rows.schema().empty()) {
      table.rows = Batch(in.schema());
    } else if (table.rows.schema() != in.schema()) {
      throw SchemaMismatch("join build: inconsistent build-side schema");
    }
    for (size_t r = 0; r < in.row_count(); ++r) {
      table.index[in.At(key, r)].push_back(static_cast<uint32_t>(table.rows.row_count()));
      table.rows.AppendRowFrom(in, r);
    }
  }
}

Batch Probe(const HashJoinProbe &p, const JoinTable &table, std::span<const Batch> inputs) {
  Batch out;
  const Schema &build_schema = table.rows.schema();
  for (const auto &in : inputs) {
    if (in.schema().empty()) continue;
    size_t key = in.ColumnIndex(p.key);
    if (build_schema.empty()) continue;
    std::vector<size_t> build_cols;
    Schema schema = in.schema();
    for (size_t c = 0; c < build_schema.size(); ++c) {
      if (in.HasColumn(build_schema[c].name)) continue;
      build_cols.push_back(c);
      schema.push_back(build_schema[c]);
    }
    if (out.schema().empty()) out = Batch(schema);
    if (out.schema() != schema) throw SchemaMismatch("join probe: inconsistent probe-side schema");
    for (size_t r = 0; r < in.row_count(); ++r) {
      auto it = table.index.find(in.At(key, r));
      if (it == table.index.end()) continue;
      for (uint32_t br : it->second) {
        std::vector<Value> row = in.Row(r);
        for (size_t c : build_cols) row.push_back(table.rows.At(c, br));
        out.AppendRow(row);
      }
    }
  }
  return out;
}

void AggregateInto(const Aggregate &a, AggTable &table, std::span<const Batch> inputs) {
  for (const auto &in : inputs) {
    if (in.schema().empty()) continue;
    std::vector<size_t> key_cols;
    for (const auto &g : a.group_by) key_cols.push_back(in.ColumnIndex(g));
    std::vector<size_t> agg_cols;
    Schema agg_schema;
    for (const auto &spec : a.aggs) {
      if (spec.fn == AggFn::kCount) {
        agg_cols.push_back(SIZE_MAX);
        agg_schema.push_back({spec.output, DataType::kInt64});
        continue;
      }
      size_t c = in.ColumnIndex(spec.column);
      DataType t = in.schema()[c].type;
      if (spec.fn == AggFn::kSum && t != DataType::kInt64) {
        throw SchemaMismatch("aggregate: sum requires int64 column '" + spec.column + "'");
      }
      agg_cols.push_back(c);
      agg_schema.push_back({spec.output, t});
    }
    Schema group_schema;
    for (size_t c : key_cols) group_schema.push_back(in.schema()[c]);
    if (table.group_schema.empty() && table.agg_schema.empty()) {
      table.group_schema = group_schema;
      table.agg_schema = agg_schema;
    } else if (table.group_schema != group_schema || table.agg_schema != agg_schema) {
      throw SchemaMismatch("aggregate: inconsistent input schema");
    }
    for (size_t r = 0; r < in.row_count(); ++r) {
      std::vector<Value> key;
      for (size_t c : key_cols) key.push_back(in.At(c, r));
      auto [it, fresh] = table.groups.try_emplace(std::move(key));
      auto &acc = it->second;
      for (size_t i = 0; i < a.aggs.size(); ++i) {
        const auto &spec = a.aggs[i];
        if (spec.fn == AggFn::kCount) {
          if (fresh) acc.push_back(int64_t{1});
          else acc[i] = std::get<int64_t>(acc[i]) + 1;
          continue;
        }
        Value v = in.At(agg_cols[i], r);
        if (fresh) {
          acc.push_back(v);
        } else if (spec.fn == AggFn::kSum) {
          acc[i] = std::get<int64_t>(acc[i]) + std::get<int64_t>(v);
        } else if (spec.fn == AggFn::kMin) {
          if (v < acc[i]) acc[i] = v;
        } else if (v > acc[i]) {
          acc[i] = v;
        }
      }
    }
  }
}

}  // namespace

const char *OperatorName(const OperatorKind &op) {
  return std::visit(Overloaded{[](const InputReader &) { return "input"; },
                               [](const Filter &) { return "filter"; },
                               [](const Map &) { return "map"; },
                               [](const HashJoinBuild &) { return "hash_join_build"; },
                               [](const HashJoinProbe &) { return "hash_join_probe"; },
                               [](const Aggregate &) { return "aggregate"; }},
                    op);
}

bool IsStateful(const OperatorKind &op) {
  return std::holds_alternative<HashJoinBuild>(op) || std::holds_alternative<HashJoinProbe>(op) ||
         std::holds_alternative<Aggregate>(op);
}

bool IsSource(const OperatorKind &op) { return std::holds_alternative<InputReader>(op); }

ChannelState InitialState(const OperatorKind &op) {
  if (auto *b = std::get_if<HashJoinBuild>(&op)) return JoinTable{b->key, {}, {}};
  if (auto *p = std::get_if<HashJoinProbe>(&op)) return JoinTable{p->build_key, {}, {}};
  if (std::holds_alternative<Aggregate>(op)) return AggTable{};
  return std::monostate{};
}

uint64_t StateDigest(const ChannelState &state) {
  return std::visit(Overloaded{[](const std::monostate &) { return kFnvOffset; },
                               [](const JoinTable &t) { return MixU64(Fnv1a(t.key), t.rows.Digest()); },
                               [](const AggTable &t) {
                                 Batch flat;
                                 Schema schema = t.group_schema;
                                 schema.insert(schema.end(), t.agg_schema.begin(), t.agg_schema.end());
                                 flat = Batch(schema);
                                 for (const auto &[k, v] : t.groups) {
                                   std::vector<Value> row = k;
                                   row.insert(row.end(), v.begin(), v.end());
                                   flat.AppendRow(row);
                                 }
                                 return flat.Digest();
                               }},
                    state);
}

KernelResult ExecuteKernel(const OperatorKind &op, ChannelState state, std::span<const Batch> inputs,
                           InputSide side) {
  KernelResult res;
  std::visit(
      Overloaded{
          [&](const InputReader &) {
            for (const auto &in : inputs) {
              if (res.output.schema().empty()) res.output = Batch(in.schema());
              res.output.Append(in);
            }
          },
          [&](const Filter &f) { res.output = RunFilter(f, inputs); },
          [&](const Map &m) { res.output = RunMap(m, inputs); },
          [&](const HashJoinBuild &) {
            auto *table = std::get_if<JoinTable>(&state);
            if (table == nullptr) throw SchemaMismatch("join build: state is not a join table");
            BuildInto(*table, inputs);
          },
          [&](const HashJoinProbe &p) {
            auto *table = std::get_if<JoinTable>(&state);
            if (table == nullptr) throw SchemaMismatch("join probe: state is not a join table");
            if (side == InputSide::kBuild) {
              BuildInto(*table, inputs);
            } else {
              res.output = Probe(p, *table, inputs);
            }
          },
          [&](const Aggregate &a) {
            auto *table = std::get_if<AggTable>(&state);
            if (table == nullptr) throw SchemaMismatch("aggregate: state is not an aggregate table");
            AggregateInto(a, *table, inputs);
          }},
      op);
  res.state = std::move(state);
  return res;
}

Batch FinalizeKernel(const OperatorKind &op, const ChannelState &state) {
  if (std::holds_alternative<HashJoinBuild>(op)) {
    return std::get<JoinTable>(state).rows;
  }
  if (std::holds_alternative<Aggregate>(op)) {
    const auto &t = std::get<AggTable>(state);
    if (t.group_schema.empty() && t.agg_schema.empty()) return Batch();
    Schema schema = t.group_schema;
    schema.insert(schema.end(), t.agg_schema.begin(), t.agg_schema.end());
    Batch out(schema);
    for (const auto &[k, v] : t.groups) {
      std::vector<Value> row = k;
      row.insert(row.end(), v.begin(), v.end());
      out.AppendRow(row);
    }
    return out;
  }
  return Batch();
}

std::string RequiredPartitionKey(const OperatorKind &op, InputSide side) {
  if (auto *b = std::get_if<HashJoinBuild>(&op)) return b->key;
  if (auto *p = std::get_if<HashJoinProbe>(&op)) return side == InputSide::kBuild ? p->build_key : p->key;
  if (auto *a = std::get_if<Aggregate>(&op)) return a->group_by.empty() ? std::string() : a->group_by.front();
  return {};
}

uint64_t PartitionHash(const Value &key) {
  uint64_t bits = 0;
  if (auto *i = std::get_if<int64_t>(&key)) {
    bits = static_cast<uint64_t>(*i);
  } else if (auto *d = std::get_if<double>(&key)) {
    bits = std::bit_cast<uint64_t>(*d == 0.0 ? 0.0 : *d);
  } else {
    bits = Fnv1a(std::get<std::string>(key));
  }
  return bits * kPartitionMultiplier;
}

int PartitionOf(const Value &key, int num_channels) {
  return static_cast<int>((PartitionHash(key) >> 32) % static_cast<uint64_t>(num_channels));
}

std::vector<Batch> PartitionBatch(const Batch &batch, const std::string &key, int n) {
  std::vector<Batch> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.emplace_back(batch.schema());
  if (batch.empty()) return out;
  if (key.empty()) {
    if (n != 1) throw SchemaMismatch("partition: no partition key for a multi-channel consumer");
    out[0] = batch;
    return out;
  }
  size_t col = batch.ColumnIndex(key);
  for (size_t r = 0; r < batch.row_count(); ++r) {
    out[PartitionOf(batch.At(col, r), n)].AppendRowFrom(batch, r);
  }
  return out;
}

}  // namespace walq
