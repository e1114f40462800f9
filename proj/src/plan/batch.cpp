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

#include "walq/plan/batch.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "walq/common/hash.hpp"

namespace walq {

namespace {

constexpr uint8_t kMagic[4] = {'W', 'Q', 'B', 'F'};
constexpr uint16_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(std::vector<uint8_t> &out) : out_(out) {}
  void U8(uint8_t v) { out_.push_back(v); }
  void U16(uint16_t v) { Le(v, 2); }
  void U32(uint32_t v) { Le(v, 4); }
  void U64(uint64_t v) { Le(v, 8); }
  void Str(const std::string &s) {
    U32(static_cast<uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

 private:
  void Le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> &out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}
  uint8_t U8() { return static_cast<uint8_t>(Le(1)); }
  uint16_t U16() { return static_cast<uint16_t>(Le(2)); }
  uint32_t U32() { return static_cast<uint32_t>(Le(4)); }
  uint64_t U64() { return Le(8); }
  std::string Str() {
    uint32_t n = U32();
    Need(n);
    std::string s(reinterpret_cast<const char *>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  void Need(size_t n) const {
    if (pos_ + n > in_.size()) throw std::runtime_error("batch decode: truncated input");
  }
  uint64_t Le(int n) {
    Need(n);
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

size_t ColumnLength(const ColumnData &c) {
  return std::visit([](const auto &v) { return v.size(); }, c);
}

void EncodeValue(Writer &w, const Value &v) {
  w.U8(static_cast<uint8_t>(v.index()));
  if (auto *i = std::get_if<int64_t>(&v)) {
    w.U64(static_cast<uint64_t>(*i));
  } else if (auto *d = std::get_if<double>(&v)) {
    w.U64(std::bit_cast<uint64_t>(*d));
  } else {
    w.Str(std::get<std::string>(v));
  }
}

}  // namespace

const char *DataTypeName(DataType t) {
  switch (t) {
    case DataType::kInt64: return "int64";
    case DataType::kFloat64: return "float64";
    case DataType::kUtf8: return "utf8";
  }
  return "?";
}

DataType ParseDataType(const std::string &name) {
  if (name == "int64") return DataType::kInt64;
  if (name == "float64") return DataType::kFloat64;
  if (name == "utf8") return DataType::kUtf8;
  throw SchemaMismatch("unknown data type '" + name + "'");
}

ColumnData EmptyColumn(DataType t) {
  switch (t) {
    case DataType::kInt64: return std::vector<int64_t>{};
    case DataType::kFloat64: return std::vector<double>{};
    case DataType::kUtf8: return std::vector<std::string>{};
  }
  return std::vector<int64_t>{};
}

DataType TypeOf(const Value &v) { return static_cast<DataType>(v.index()); }

std::string ValueToString(const Value &v) {
  if (auto *i = std::get_if<int64_t>(&v)) return std::to_string(*i);
  if (auto *d = std::get_if<double>(&v)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *d);
    return buf;
  }
  return std::get<std::string>(v);
}

Batch::Batch(Schema schema) : schema_(std::move(schema)) {
  for (const auto &f : schema_) columns_.push_back(EmptyColumn(f.type));
}

Batch::Batch(Schema schema, std::vector<ColumnData> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (schema_.size() != columns_.size()) throw SchemaMismatch("batch: column count does not match schema");
  for (size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].index() != static_cast<size_t>(schema_[i].type)) {
      throw SchemaMismatch("batch: column '" + schema_[i].name + "' has wrong type");
    }
    size_t n = ColumnLength(columns_[i]);
    if (i == 0) rows_ = n;
    if (n != rows_) throw SchemaMismatch("batch: ragged columns");
  }
}

size_t Batch::ColumnIndex(const std::string &name) const {
  for (size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].name == name) return i;
  }
  throw SchemaMismatch("no column named '" + name + "'");
}

bool Batch::HasColumn(const std::string &name) const {
  return std::any_of(schema_.begin(), schema_.end(), [&](const Field &f) { return f.name == name; });
}

Value Batch::At(size_t col, size_t row) const {
  return std::visit([row](const auto &v) -> Value { return v.at(row); }, columns_.at(col));
}

std::vector<Value> Batch::Row(size_t row) const {
  std::vector<Value> out;
  out.reserve(columns_.size());
  for (size_t c = 0; c < columns_.size(); ++c) out.push_back(At(c, row));
  return out;
}

void Batch::AppendRow(std::span<const Value> row) {
  if (row.size() != columns_.size()) throw SchemaMismatch("append: row width does not match schema");
  for (size_t c = 0; c < row.size(); ++c) {
    if (row[c].index() != columns_[c].index()) {
      throw SchemaMismatch("append: value type mismatch in column '" + schema_[c].name + "'");
    }
  }
  for (size_t c = 0; c < row.size(); ++c) {
    std::visit(
        [&](auto &col) {
          using T = typename std::decay_t<decltype(col)>::value_type;
          col.push_back(std::get<T>(row[c]));
        },
        columns_[c]);
  }
  ++rows_;
}

void Batch::AppendRowFrom(const Batch &other, size_t row) {
  for (size_t c = 0; c < columns_.size(); ++c) {
    std::visit(
        [&](auto &col) {
          using V = std::decay_t<decltype(col)>;
          col.push_back(std::get<V>(other.columns_[c]).at(row));
        },
        columns_[c]);
  }
  ++rows_;
}

void Batch::Append(const Batch &other) {
  if (other.schema_.empty()) return;
  if (schema_.empty() && rows_ == 0) {
    *this = other;
    return;
  }
  if (schema_ != other.schema_) throw SchemaMismatch("append: schemas differ");
  for (size_t c = 0; c < columns_.size(); ++c) {
    std::visit(
        [&](auto &col) {
          using V = std::decay_t<decltype(col)>;
          const auto &src = std::get<V>(other.columns_[c]);
          col.insert(col.end(), src.begin(), src.end());
        },
        columns_[c]);
  }
  rows_ += other.rows_;
}

std::vector<uint8_t> Batch::Serialize() const {
  std::vector<uint8_t> out;
  Writer w(out);
  for (uint8_t b : kMagic) w.U8(b);
  w.U16(kFormatVersion);
  w.U32(static_cast<uint32_t>(schema_.size()));
  w.U64(rows_);
  for (const auto &f : schema_) {
    w.Str(f.name);
    w.U8(static_cast<uint8_t>(f.type));
  }
  for (const auto &col : columns_) {
    if (auto *ints = std::get_if<std::vector<int64_t>>(&col)) {
      for (int64_t v : *ints) w.U64(static_cast<uint64_t>(v));
    } else if (auto *dbl = std::get_if<std::vector<double>>(&col)) {
      for (double v : *dbl) w.U64(std::bit_cast<uint64_t>(v));
    } else {
      for (const auto &s : std::get<std::vector<std::string>>(col)) w.Str(s);
    }
  }
  return out;
}

Batch Batch::Deserialize(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  for (uint8_t b : kMagic) {
    if (r.U8() != b) throw std::runtime_error("batch decode: bad magic");
  }
  if (uint16_t v = r.U16(); v != kFormatVersion) {
    throw std::runtime_error("batch decode: unsupported version " + std::to_string(v));
  }
  uint32_t ncols = r.U32();
  uint64_t nrows = r.U64();
  Schema schema;
  for (uint32_t i = 0; i < ncols; ++i) {
    Field f;
    f.name = r.Str();
    uint8_t t = r.U8();
    if (t > 2) throw std::runtime_error("batch decode: bad type tag");
    f.type = static_cast<DataType>(t);
    schema.push_back(std::move(f));
  }
  std::vector<ColumnData> cols;
  for (const auto &f : schema) {
    switch (f.type) {
      case DataType::kInt64: {
        std::vector<int64_t> v(nrows);
        for (auto &x : v) x = static_cast<int64_t>(r.U64());
        cols.emplace_back(std::move(v));
        break;
      }
      case DataType::kFloat64: {
        std::vector<double> v(nrows);
        for (auto &x : v) x = std::bit_cast<double>(r.U64());
        cols.emplace_back(std::move(v));
        break;
      }
      case DataType::kUtf8: {
        std::vector<std::string> v(nrows);
        for (auto &x : v) x = r.Str();
        cols.emplace_back(std::move(v));
        break;
      }
    }
  }
  if (!r.AtEnd()) throw std::runtime_error("batch decode: trailing bytes");
  Batch b(std::move(schema), std::move(cols));
  if (ncols == 0) b.rows_ = 0;
  return b;
}

size_t Batch::SerializedSize() const {
  size_t n = 4 + 2 + 4 + 8;
  for (const auto &f : schema_) n += 4 + f.name.size() + 1;
  for (const auto &col : columns_) {
    if (auto *s = std::get_if<std::vector<std::string>>(&col)) {
      for (const auto &x : *s) n += 4 + x.size();
    } else {
      n += 8 * rows_;
    }
  }
  return n;
}

uint64_t Batch::Digest() const {
  auto bytes = Serialize();
  return Fnv1a(bytes);
}

uint64_t CanonicalDigest(std::span<const Batch> batches) {
  std::vector<std::vector<uint8_t>> rows;
  const Schema *schema = nullptr;
  for (const auto &b : batches) {
    if (b.empty()) continue;
    if (schema == nullptr) {
      schema = &b.schema();
    } else if (*schema != b.schema()) {
      throw SchemaMismatch("canonical digest: result batches have differing schemas");
    }
    for (size_t r = 0; r < b.row_count(); ++r) {
      std::vector<uint8_t> enc;
      Writer w(enc);
      for (size_t c = 0; c < b.num_columns(); ++c) EncodeValue(w, b.At(c, r));
      rows.push_back(std::move(enc));
    }
  }
  std::sort(rows.begin(), rows.end());
  uint64_t h = kFnvOffset;
  if (schema != nullptr) {
    for (const auto &f : *schema) {
      h = Fnv1a(f.name, h);
      h = MixU64(h, static_cast<uint64_t>(f.type));
    }
  }
  h = MixU64(h, rows.size());
  for (const auto &r : rows) {
    h = MixU64(h, r.size());
    h = Fnv1a(r, h);
  }
  return h;
}

}  // namespace walq
