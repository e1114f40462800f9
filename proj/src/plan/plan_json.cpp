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

#include "walq/plan/plan_json.hpp"

#include <fstream>
#include <random>

namespace walq {

using nlohmann::json;

namespace {

CompareOp ParseCompare(const std::string &s) {
  if (s == "<") return CompareOp::kLt;
  if (s == "<=") return CompareOp::kLe;
  if (s == ">") return CompareOp::kGt;
  if (s == ">=") return CompareOp::kGe;
  if (s == "==") return CompareOp::kEq;
  if (s == "!=") return CompareOp::kNe;
  throw PlanFormatError("unknown comparison '" + s + "'");
}

const char *CompareName(CompareOp op) {
  switch (op) {
    case CompareOp::kLt: return "<";
    case CompareOp::kLe: return "<=";
    case CompareOp::kGt: return ">";
    case CompareOp::kGe: return ">=";
    case CompareOp::kEq: return "==";
    case CompareOp::kNe: return "!=";
  }
  return "?";
}

MapFn ParseMapFn(const std::string &s) {
  if (s == "add") return MapFn::kAdd;
  if (s == "mul") return MapFn::kMul;
  if (s == "mod") return MapFn::kMod;
  throw PlanFormatError("unknown map function '" + s + "'");
}

const char *MapFnName(MapFn fn) {
  switch (fn) {
    case MapFn::kAdd: return "add";
    case MapFn::kMul: return "mul";
    case MapFn::kMod: return "mod";
  }
  return "?";
}

AggFn ParseAggFn(const std::string &s) {
  if (s == "count") return AggFn::kCount;
  if (s == "sum") return AggFn::kSum;
  if (s == "min") return AggFn::kMin;
  if (s == "max") return AggFn::kMax;
  throw PlanFormatError("unknown aggregate function '" + s + "'");
}

const char *AggFnName(AggFn fn) {
  switch (fn) {
    case AggFn::kCount: return "count";
    case AggFn::kSum: return "sum";
    case AggFn::kMin: return "min";
    case AggFn::kMax: return "max";
  }
  return "?";
}

Value ValueFromJson(const json &j) {
  if (j.is_number_integer()) return j.get<int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw PlanFormatError("literal must be a number or string");
}

json ValueToJson(const Value &v) {
  if (auto *i = std::get_if<int64_t>(&v)) return *i;
  if (auto *d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

OperatorKind ParseOperator(const json &j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "input") return InputReader{j.at("dataset").get<std::string>()};
  if (kind == "filter") {
    return Filter{j.at("column").get<std::string>(), ParseCompare(j.at("op").get<std::string>()),
                  ValueFromJson(j.at("value"))};
  }
  if (kind == "map") {
    return Map{j.at("column").get<std::string>(), ParseMapFn(j.at("fn").get<std::string>()),
               j.at("operand").get<int64_t>(), j.at("output").get<std::string>()};
  }
  if (kind == "hash_join_build") return HashJoinBuild{j.at("key").get<std::string>()};
  if (kind == "hash_join_probe") {
    return HashJoinProbe{j.at("key").get<std::string>(), j.value("build_key", j.at("key").get<std::string>()),
                         j.at("build_stage").get<StageId>()};
  }
  if (kind == "aggregate") {
    Aggregate a;
    a.group_by = j.at("group_by").get<std::vector<std::string>>();
    for (const auto &spec : j.at("aggs")) {
      AggSpec s;
      s.fn = ParseAggFn(spec.at("fn").get<std::string>());
      s.column = spec.value("column", std::string());
      s.output = spec.at("as").get<std::string>();
      if (s.fn != AggFn::kCount && s.column.empty()) throw PlanFormatError("aggregate needs a column");
      a.aggs.push_back(std::move(s));
    }
    return a;
  }
  throw PlanFormatError("unknown operator kind '" + kind + "'");
}

json OperatorToJson(const OperatorKind &op) {
  json j;
  j["kind"] = OperatorName(op);
  if (auto *r = std::get_if<InputReader>(&op)) {
    j["dataset"] = r->dataset;
  } else if (auto *f = std::get_if<Filter>(&op)) {
    j["column"] = f->column;
    j["op"] = CompareName(f->op);
    j["value"] = ValueToJson(f->literal);
  } else if (auto *m = std::get_if<Map>(&op)) {
    j["column"] = m->column;
    j["fn"] = MapFnName(m->fn);
    j["operand"] = m->operand;
    j["output"] = m->output;
  } else if (auto *b = std::get_if<HashJoinBuild>(&op)) {
    j["key"] = b->key;
  } else if (auto *p = std::get_if<HashJoinProbe>(&op)) {
    j["key"] = p->key;
    j["build_key"] = p->build_key;
    j["build_stage"] = p->build_stage;
  } else {
    const auto &a = std::get<Aggregate>(op);
    j["group_by"] = a.group_by;
    j["aggs"] = json::array();
    for (const auto &s : a.aggs) {
      json spec{{"fn", AggFnName(s.fn)}, {"as", s.output}};
      if (!s.column.empty()) spec["column"] = s.column;
      j["aggs"].push_back(spec);
    }
  }
  return j;
}

Schema SchemaFromJson(const json &j) {
  Schema schema;
  for (const auto &f : j) schema.push_back({f.at("name").get<std::string>(), ParseDataType(f.at("type").get<std::string>())});
  return schema;
}

json SchemaToJson(const Schema &schema) {
  json j = json::array();
  for (const auto &f : schema) j.push_back({{"name", f.name}, {"type", DataTypeName(f.type)}});
  return j;
}

Dataset ParseDataset(const json &j, const std::filesystem::path &base_dir) {
  if (j.contains("file")) {
    std::filesystem::path p = j.at("file").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    std::ifstream in(p);
    if (!in) throw PlanFormatError("cannot open dataset file " + p.string());
    json inner;
    try {
      inner = json::parse(in);
    } catch (const json::exception &e) {
      throw PlanFormatError("dataset file " + p.string() + ": " + e.what());
    }
    return ParseDataset(inner, p.parent_path());
  }
  Schema schema = SchemaFromJson(j.at("schema"));
  if (j.contains("generate")) {
    const auto &g = j.at("generate");
    GeneratorSpec spec;
    spec.rows = g.at("rows").get<size_t>();
    spec.batch_rows = g.value("batch_rows", size_t{64});
    spec.seed = g.value("seed", uint64_t{0});
    const auto &ranges = g.at("ranges");
    for (const auto &f : schema) {
      auto r = ranges.at(f.name).get<std::vector<int64_t>>();
      if (r.size() != 2 || r[0] > r[1]) throw PlanFormatError("bad generator range for '" + f.name + "'");
      spec.columns.push_back({f, {r[0], r[1]}});
    }
    return GenerateDataset(spec);
  }
  Dataset ds;
  ds.schema = schema;
  for (const auto &b : j.at("batches")) ds.batches.push_back(BatchFromJson(b, schema));
  return ds;
}

}  // namespace

json BatchToJson(const Batch &batch) {
  json j = json::object();
  for (size_t c = 0; c < batch.num_columns(); ++c) {
    json col = json::array();
    for (size_t r = 0; r < batch.row_count(); ++r) col.push_back(ValueToJson(batch.At(c, r)));
    j[batch.schema()[c].name] = col;
  }
  return j;
}

Batch BatchFromJson(const json &doc, const Schema &schema) {
  std::vector<ColumnData> cols;
  for (const auto &f : schema) {
    const auto &col = doc.at(f.name);
    switch (f.type) {
      case DataType::kInt64: cols.emplace_back(col.get<std::vector<int64_t>>()); break;
      case DataType::kFloat64: cols.emplace_back(col.get<std::vector<double>>()); break;
      case DataType::kUtf8: cols.emplace_back(col.get<std::vector<std::string>>()); break;
    }
  }
  return Batch(schema, std::move(cols));
}

Dataset GenerateDataset(const GeneratorSpec &spec) {
  std::mt19937_64 rng(spec.seed);
  Dataset ds;
  for (const auto &[f, r] : spec.columns) ds.schema.push_back(f);
  size_t batch_rows = std::max<size_t>(1, spec.batch_rows);
  for (size_t start = 0; start < spec.rows; start += batch_rows) {
    Batch b(ds.schema);
    size_t n = std::min(batch_rows, spec.rows - start);
    for (size_t i = 0; i < n; ++i) {
      std::vector<Value> row;
      for (const auto &[f, r] : spec.columns) {
        // Raw engine output keeps generation identical across standard libraries.
        uint64_t span = static_cast<uint64_t>(r.second - r.first) + 1;
        int64_t x = r.first + static_cast<int64_t>(span == 0 ? rng() : rng() % span);
        switch (f.type) {
          case DataType::kInt64: row.emplace_back(x); break;
          case DataType::kFloat64: row.emplace_back(static_cast<double>(x) / 4.0); break;
          case DataType::kUtf8: row.emplace_back("s" + std::to_string(x)); break;
        }
      }
      b.AppendRow(row);
    }
    ds.batches.push_back(std::move(b));
  }
  return ds;
}

QueryPlan ParsePlanJson(const json &doc, const std::filesystem::path &base_dir) {
  try {
    int version = doc.at("version").get<int>();
    if (version != kPlanFormatVersion) {
      throw PlanFormatError("unsupported plan version " + std::to_string(version));
    }
    QueryPlan plan;
    if (doc.contains("datasets")) {
      for (const auto &[name, ds] : doc.at("datasets").items()) plan.datasets[name] = ParseDataset(ds, base_dir);
    }
    for (const auto &s : doc.at("stages")) {
      StageSpec spec;
      spec.id = s.at("id").get<StageId>();
      spec.channels = s.value("channels", 1);
      spec.op = ParseOperator(s.at("operator"));
      spec.partition_key = s.value("partition_key", std::string());
      spec.stateful = s.contains("stateful") ? s.at("stateful").get<bool>() : IsStateful(spec.op);
      plan.stages.push_back(std::move(spec));
    }
    if (doc.contains("edges")) {
      for (const auto &e : doc.at("edges")) plan.edges.emplace_back(e.at(0).get<StageId>(), e.at(1).get<StageId>());
    }
    return plan;
  } catch (const json::exception &e) {
    throw PlanFormatError(std::string("malformed plan: ") + e.what());
  } catch (const SchemaMismatch &e) {
    throw PlanFormatError(std::string("malformed plan: ") + e.what());
  }
}

QueryPlan LoadPlanFile(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw PlanFormatError("cannot open plan file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw PlanFormatError("plan file " + path.string() + ": " + e.what());
  }
  return ParsePlanJson(doc, path.parent_path());
}

json PlanToJson(const QueryPlan &plan) {
  json doc;
  doc["version"] = kPlanFormatVersion;
  doc["datasets"] = json::object();
  for (const auto &[name, ds] : plan.datasets) {
    json d;
    d["schema"] = SchemaToJson(ds.schema);
    d["batches"] = json::array();
    for (const auto &b : ds.batches) d["batches"].push_back(BatchToJson(b));
    doc["datasets"][name] = d;
  }
  doc["stages"] = json::array();
  for (const auto &s : plan.stages) {
    json j{{"id", s.id}, {"channels", s.channels}, {"operator", OperatorToJson(s.op)}, {"stateful", s.stateful}};
    if (!s.partition_key.empty()) j["partition_key"] = s.partition_key;
    doc["stages"].push_back(j);
  }
  doc["edges"] = json::array();
  for (const auto &[a, b] : plan.edges) doc["edges"].push_back({a, b});
  return doc;
}

}  // namespace walq
