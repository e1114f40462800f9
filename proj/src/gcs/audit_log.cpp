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

#include "walq/gcs/audit_log.hpp"

#include <fstream>
#include <sstream>

namespace walq {

void AuditLog::Append(nlohmann::json record) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(record));
}

std::string AuditLog::ToText() const {
  std::ostringstream out;
  nlohmann::json header{{"type", "header"}, {"format", "walq-audit"}, {"version", kAuditLogVersion}};
  out << header.dump() << '\n';
  for (const auto &r : records_) out << r.dump() << '\n';
  return out.str();
}

void AuditLog::WriteTo(const std::filesystem::path &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write audit log " + path.string());
  out << ToText();
}

AuditLog AuditLog::Parse(std::istream &in) {
  AuditLog log;
  std::string line;
  size_t lineno = 0;
  bool saw_header = false;
  bool last_had_newline = true;
  while (std::getline(in, line)) {
    ++lineno;
    last_had_newline = !in.eof();
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw AuditParseError(lineno, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type")) throw AuditParseError(lineno, "record has no type");
    if (!saw_header) {
      if (j["type"] != "header" || j.value("format", "") != "walq-audit") {
        throw AuditParseError(lineno, "missing walq-audit header");
      }
      if (j.value("version", 0) != kAuditLogVersion) throw AuditParseError(lineno, "unsupported version");
      saw_header = true;
      continue;
    }
    log.records_.push_back(std::move(j));
  }
  if (!saw_header) throw AuditParseError(lineno + 1, "empty log");
  if (!last_had_newline) throw AuditParseError(lineno, "truncated record (no trailing newline)");
  if (log.records_.empty() || log.records_.back().value("type", "") != "end") {
    throw AuditParseError(lineno, "truncated log (no end record)");
  }
  return log;
}

AuditLog AuditLog::Load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open audit log " + path.string());
  return Parse(in);
}

}  // namespace walq
