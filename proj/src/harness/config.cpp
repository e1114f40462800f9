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

#include "walq/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>


namespace walq {

using nlohmann::json;

SimTime ToTicks(double units) { return static_cast<SimTime>(std::llround(units * kTicksPerUnit)); }
double ToUnits(SimTime ticks) { return static_cast<double>(ticks) / kTicksPerUnit; }

namespace {

void ReadCost(const json &j, const char *key, double &field) {
  if (!j.contains(key)) return;
  double v = j.at(key).get<double>();
  if (!(v >= 0) || !std::isfinite(v)) throw ConfigError(std::string("cost.") + key + " must be a finite value >= 0");
  field = v;
}

}  // namespace

SimConfig ApplyConfigJson(SimConfig c, const json &doc) {
  try {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (doc.contains("version") && doc.at("version").get<int>() != kConfigFormatVersion) {
      throw ConfigError("unsupported config version " + doc.at("version").dump());
    }
    static const std::set<std::string> known{"version", "workers",  "seed",     "strategy",
                                             "batching", "blocking", "read_lag", "cost"};
    for (const auto &[k, v] : doc.items()) {
      if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    if (doc.contains("workers")) c.workers = doc.at("workers").get<int>();
    if (doc.contains("seed")) c.seed = doc.at("seed").get<uint64_t>();
    if (doc.contains("strategy")) c.strategy.kind = ParseStrategy(doc.at("strategy").get<std::string>());
    if (doc.contains("batching")) c.strategy.batching = ParseBatchingPolicy(doc.at("batching").get<std::string>());
    if (doc.contains("blocking")) c.blocking = doc.at("blocking").get<bool>();
    if (doc.contains("read_lag")) c.read_lag = doc.at("read_lag").get<double>();
    if (doc.contains("cost")) {
      const json &k = doc.at("cost");
      static const std::set<std::string> costs{"kernel_per_row",      "task_fixed",       "net_per_byte",
                                               "net_per_partition",   "local_disk_per_byte", "durable_per_byte",
                                               "gcs_txn",             "detection_interval",  "recovery_cost"};
      for (const auto &[key, v] : k.items()) {
        if (!costs.contains(key)) throw ConfigError("unknown cost key '" + key + "'");
      }
      ReadCost(k, "kernel_per_row", c.cost.kernel_per_row);
      ReadCost(k, "task_fixed", c.cost.task_fixed);
      ReadCost(k, "net_per_byte", c.cost.net_per_byte);
      ReadCost(k, "net_per_partition", c.cost.net_per_partition);
      ReadCost(k, "local_disk_per_byte", c.cost.local_disk_per_byte);
      ReadCost(k, "durable_per_byte", c.cost.durable_per_byte);
      ReadCost(k, "gcs_txn", c.cost.gcs_txn);
      ReadCost(k, "detection_interval", c.cost.detection_interval);
      ReadCost(k, "recovery_cost", c.cost.recovery_cost);
    }
  } catch (const json::exception &e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.read_lag < 0) throw ConfigError("read_lag must be >= 0");
  if (c.cost.detection_interval <= 0) throw ConfigError("cost.detection_interval must be > 0");
  return c;
}

SimConfig LoadConfigFile(const std::filesystem::path &path, SimConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return ApplyConfigJson(std::move(base), doc);
}

json ConfigToJson(const SimConfig &c) {
  return {{"version", kConfigFormatVersion},
          {"workers", c.workers},
          {"seed", c.seed},
          {"strategy", StrategyName(c.strategy.kind)},
          {"batching", c.strategy.batching.ToString()},
          {"blocking", c.blocking},
          {"read_lag", c.read_lag},
          {"cost",
           {{"kernel_per_row", c.cost.kernel_per_row},
            {"task_fixed", c.cost.task_fixed},
            {"net_per_byte", c.cost.net_per_byte},
            {"net_per_partition", c.cost.net_per_partition},
            {"local_disk_per_byte", c.cost.local_disk_per_byte},
            {"durable_per_byte", c.cost.durable_per_byte},
            {"gcs_txn", c.cost.gcs_txn},
            {"detection_interval", c.cost.detection_interval},
            {"recovery_cost", c.cost.recovery_cost}}}};
}

std::optional<WorkerId> ParseKillTarget(const std::string &text) {
  const std::string prefix = "worker=";
  std::string v = text.rfind(prefix, 0) == 0 ? text.substr(prefix.size()) : text;
  if (v == "random") return std::nullopt;
  size_t used = 0;
  int id = -1;
  try {
    id = std::stoi(v, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size() || id < 0) {
    throw ConfigError("bad kill target '" + text + "' (want worker=<id|random>)");
  }
  return id;
}

FaultTrigger ParseTrigger(const std::string &text) {
  auto number = [&](const std::string &s) {
    size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !(v >= 0)) {
      throw ConfigError("bad trigger '" + text + "' (want a fraction, t=<time>, <time>s or commits=<n>)");
    }
    return v;
  };
  FaultTrigger t;
  if (text.rfind("t=", 0) == 0) {
    t.kind = FaultTrigger::Kind::kTime;
    t.value = number(text.substr(2));
  } else if (text.rfind("commits=", 0) == 0) {
    t.kind = FaultTrigger::Kind::kCommits;
    t.value = number(text.substr(8));
  } else if (!text.empty() && text.back() == 's') {
    t.kind = FaultTrigger::Kind::kTime;
    t.value = number(text.substr(0, text.size() - 1));
  } else {
    t.kind = FaultTrigger::Kind::kProgress;
    t.value = number(text);
    if (t.value > 1) throw ConfigError("progress fraction '" + text + "' must be in [0, 1]");
  }
  return t;
}

namespace {

std::vector<std::pair<std::string, std::string>> MetricFields(const RunMetrics &m) {
  auto hex = [](uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
  };
  std::ostringstream units;
  units << std::fixed << std::setprecision(6) << ToUnits(m.makespan);
  std::ostringstream ovh;
  ovh << std::fixed << std::setprecision(4) << m.overhead;
  return {{"makespan", units.str()},
          {"makespan_ticks", std::to_string(m.makespan)},
          {"overhead", ovh.str()},
          {"recoveries", std::to_string(m.recoveries)},
          {"rewinds", std::to_string(m.rewinds)},
          {"replays", std::to_string(m.replays)},
          {"input_tasks", std::to_string(m.input_tasks)},
          {"reconstructed_partitions", std::to_string(m.reconstructed)},
          {"committed_tasks", std::to_string(m.committed_tasks)},
          {"task_attempts", std::to_string(m.task_attempts)},
          {"push_failures", std::to_string(m.push_failures)},
          {"bytes_pushed", std::to_string(m.bytes_pushed)},
          {"bytes_collected", std::to_string(m.bytes_collected)},
          {"bytes_local", std::to_string(m.bytes_local)},
          {"bytes_durable", std::to_string(m.bytes_durable)},
          {"bytes_replayed", std::to_string(m.bytes_replayed)},
          {"lineage_bytes", std::to_string(m.lineage_bytes)},
          {"gcs_txns", std::to_string(m.txn_count)},
          {"result_digest", hex(m.result_digest)}};
}

}  // namespace

std::string MetricsToKeyValue(const RunMetrics &m) {
  std::string out;
  for (const auto &[k, v] : MetricFields(m)) out += k + "=" + v + "\n";
  return out;
}

json MetricsToJson(const RunMetrics &m) {
  json j = json::object();
  for (const auto &[k, v] : MetricFields(m)) j[k] = v;
  return j;
}

}  // namespace walq
