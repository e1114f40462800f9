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

#include <filesystem>
#include <istream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace walq {

/// Audit log format: newline-delimited JSON. Line 1 is a header
/// {"type":"header","format":"walq-audit","version":1}; every following line
/// is one record with a "type" field (txn, exec, push, recovery, kill, ...).
constexpr int kAuditLogVersion = 1;

class AuditParseError : public std::runtime_error {
 public:
  AuditParseError(size_t line, const std::string &detail)
      : std::runtime_error("audit log line " + std::to_string(line) + ": " + detail), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class AuditLog {
 public:
  AuditLog() = default;
  AuditLog(const AuditLog &other) : records_(other.records_) {}
  AuditLog &operator=(const AuditLog &other) {
    records_ = other.records_;
    return *this;
  }

  void Append(nlohmann::json record);
  const std::vector<nlohmann::json> &records() const { return records_; }
  std::vector<nlohmann::json> &mutable_records() { return records_; }

  std::string ToText() const;
  void WriteTo(const std::filesystem::path &path) const;
  static AuditLog Parse(std::istream &in);
  static AuditLog Load(const std::filesystem::path &path);

 private:
  std::mutex mu_;
  std::vector<nlohmann::json> records_;
};

}  // namespace walq
