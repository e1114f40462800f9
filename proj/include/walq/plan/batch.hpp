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
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace walq {

enum class DataType : uint8_t { kInt64 = 0, kFloat64 = 1, kUtf8 = 2 };

const char *DataTypeName(DataType t);
DataType ParseDataType(const std::string &name);

using Value = std::variant<int64_t, double, std::string>;
using ColumnData = std::variant<std::vector<int64_t>, std::vector<double>, std::vector<std::string>>;

struct Field {
  std::string name;
  DataType type = DataType::kInt64;
  bool operator==(const Field &) const = default;
};

using Schema = std::vector<Field>;

class SchemaMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Columnar batch of rows. All columns have length row_count().
class Batch {
 public:
  Batch() = default;
  explicit Batch(Schema schema);
  Batch(Schema schema, std::vector<ColumnData> columns);

  const Schema &schema() const { return schema_; }
  size_t row_count() const { return rows_; }
  size_t num_columns() const { return columns_.size(); }
  bool empty() const { return rows_ == 0; }

  const ColumnData &column(size_t i) const { return columns_.at(i); }
  /// Index of the named column; throws SchemaMismatch when absent.
  size_t ColumnIndex(const std::string &name) const;
  bool HasColumn(const std::string &name) const;

  Value At(size_t col, size_t row) const;
  void AppendRow(std::span<const Value> row);
  /// Appends row `row` of `other`, which must have an identical schema.
  void AppendRowFrom(const Batch &other, size_t row);
  std::vector<Value> Row(size_t row) const;

  /// Appends all rows of `other`. An empty-schema batch adopts other's schema.
  void Append(const Batch &other);

  std::vector<uint8_t> Serialize() const;
  static Batch Deserialize(std::span<const uint8_t> bytes);
  size_t SerializedSize() const;
  uint64_t Digest() const;

  bool operator==(const Batch &) const = default;

 private:
  Schema schema_;
  std::vector<ColumnData> columns_;
  size_t rows_ = 0;
};

ColumnData EmptyColumn(DataType t);
DataType TypeOf(const Value &v);
std::string ValueToString(const Value &v);

/// Order-insensitive digest of the multiset of rows across `batches`.
/// Empty batches (including schema-less ones) contribute nothing.
uint64_t CanonicalDigest(std::span<const Batch> batches);

}  // namespace walq
