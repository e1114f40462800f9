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

// walq: run a plan on the simulated cluster, sweep ablations, or verify an
// audit log offline.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "walq/coordinator/recovery.hpp"
#include "walq/harness/auditor.hpp"
#include "walq/harness/config.hpp"
#include "walq/harness/simulator.hpp"
#include "walq/harness/strategies.hpp"
#include "walq/plan/plan_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace walq;

namespace {

constexpr int kExitViolations = 1;
constexpr int kExitError = 2;
constexpr int kSummaryVersion = 1;

struct CommonArgs {
  std::string plan;
  std::string config;
  std::vector<std::string> kills;
  std::vector<std::string> ats;
  std::string strategy;
  std::string batching;
  std::optional<int> workers;
  std::optional<uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App *cmd, CommonArgs &a, bool need_plan) {
  auto *plan = cmd->add_option("--plan", a.plan, "Plan file (JSON)")->envname("WALQ_PLAN");
  if (need_plan) plan->required();
  cmd->add_option("--config", a.config, "Simulator config file (JSON)")->envname("WALQ_CONFIG");
  cmd->add_option("--kill", a.kills, "Fault target worker=<id|random> (repeatable)")->envname("WALQ_KILL");
  cmd->add_option("--at", a.ats, "Fault trigger per --kill: fraction in [0,1], t=<time>, or commits=<n>")
      ->envname("WALQ_AT");
  cmd->add_option("--strategy", a.strategy, "wal | spool | restart")->envname("WALQ_STRATEGY");
  cmd->add_option("--batching", a.batching, "dynamic | static:B")->envname("WALQ_BATCHING");
  cmd->add_option("--workers", a.workers, "Worker count")->envname("WALQ_WORKERS");
  cmd->add_option("--seed", a.seed, "Seed")->envname("WALQ_SEED");
  cmd->add_option("--out", a.out, "Output directory")->envname("WALQ_OUT");
}

SimConfig BuildConfig(const CommonArgs &a) {
  SimConfig c;
  if (!a.config.empty()) c = LoadConfigFile(a.config, c);
  if (!a.strategy.empty()) c.strategy.kind = ParseStrategy(a.strategy);
  if (!a.batching.empty()) c.strategy.batching = ParseBatchingPolicy(a.batching);
  if (a.workers) {
    if (*a.workers < 1) throw ConfigError("--workers must be >= 1");
    c.workers = *a.workers;
  }
  if (a.seed) c.seed = *a.seed;
  return c;
}

FaultSpec BuildFaults(const CommonArgs &a) {
  if (a.ats.size() > a.kills.size()) throw ConfigError("--at given without a matching --kill");
  FaultSpec f;
  for (size_t i = 0; i < a.kills.size(); ++i) {
    Fault fault;
    fault.worker = ParseKillTarget(a.kills[i]);
    fault.trigger = ParseTrigger(i < a.ats.size() ? a.ats[i] : "0.5");
    f.faults.push_back(fault);
  }
  return f;
}

ValidatedPlan LoadPlan(const std::string &path) {
  if (!fs::exists(path)) throw ConfigError("plan file not found: " + path);
  return ValidatePlan(LoadPlanFile(path));
}

void WriteFile(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

json FaultsJson(const CommonArgs &a) {
  json j = json::array();
  for (size_t i = 0; i < a.kills.size(); ++i) {
    j.push_back({{"kill", a.kills[i]}, {"at", i < a.ats.size() ? a.ats[i] : "0.5"}});
  }
  return j;
}

int CmdRun(const CommonArgs &a) {
  ValidatedPlan plan = LoadPlan(a.plan);
  SimConfig config = BuildConfig(a);
  FaultSpec faults = BuildFaults(a);
  RunResult res = Run(plan, config, faults);
  auto violations = AuditTrace(res.log);

  fs::path out = a.out.empty() ? fs::path("walq-out") : fs::path(a.out);
  fs::create_directories(out);
  char digest[32];
  std::snprintf(digest, sizeof digest, "%016llx\n", static_cast<unsigned long long>(res.metrics.result_digest));
  WriteFile(out / "result_digest.txt", digest);
  WriteFile(out / "metrics.txt", MetricsToKeyValue(res.metrics));
  json summary{{"version", kSummaryVersion},
               {"plan", a.plan},
               {"config", ConfigToJson(config)},
               {"faults", FaultsJson(a)},
               {"metrics", MetricsToJson(res.metrics)},
               {"violations", violations}};
  WriteFile(out / "summary.json", summary.dump(2) + "\n");
  res.log.WriteTo(out / "audit.log");

  std::cout << MetricsToKeyValue(res.metrics);
  if (!violations.empty()) {
    for (const auto &v : violations) std::cerr << "violation: " << v << "\n";
    return kExitViolations;
  }
  return 0;
}

struct AblateArgs {
  std::string strategies = "wal,spool,restart";
  std::string batchings = "dynamic,static:4";
  std::string worker_counts;
};

std::vector<std::string> SplitList(const std::string &s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    if (comma > start) out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

int CmdAblate(const CommonArgs &a, const AblateArgs &ab) {
  ValidatedPlan plan = LoadPlan(a.plan);
  SimConfig config = BuildConfig(a);
  FaultSpec faults = BuildFaults(a);
  std::vector<StrategyKind> kinds;
  for (const auto &s : SplitList(ab.strategies)) kinds.push_back(ParseStrategy(s));
  std::vector<BatchingPolicy> policies;
  for (const auto &b : SplitList(ab.batchings)) policies.push_back(ParseBatchingPolicy(b));
  std::vector<int> workers;
  for (const auto &w : SplitList(ab.worker_counts)) {
    size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(w, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != w.size() || n < 1) throw ConfigError("bad worker count '" + w + "'");
    workers.push_back(n);
  }
  if (ab.worker_counts.empty()) workers.push_back(config.workers);

  std::string table;
  char line[256];
  std::snprintf(line, sizeof line, "%-7s %-10s %-8s %-10s %12s %9s %8s %8s %8s %9s\n", "workers", "mode", "strategy",
                "batching", "makespan", "overhead", "rewinds", "replays", "inputs", "recovered");
  table += line;
  json rows = json::array();
  auto emit = [&](int w, const char *mode, const FtStrategy &s, const RunMetrics &m) {
    std::snprintf(line, sizeof line, "%-7d %-10s %-8s %-10s %12.4f %9.4f %8lld %8lld %8lld %9lld\n", w, mode,
                  StrategyName(s.kind), s.batching.ToString().c_str(), ToUnits(m.makespan), m.overhead,
                  static_cast<long long>(m.rewinds), static_cast<long long>(m.replays),
                  static_cast<long long>(m.input_tasks), static_cast<long long>(m.reconstructed));
    table += line;
    rows.push_back({{"workers", w},
                    {"mode", mode},
                    {"strategy", StrategyName(s.kind)},
                    {"batching", s.batching.ToString()},
                    {"metrics", MetricsToJson(m)}});
  };
  if (!kinds.empty() && !policies.empty()) {
    for (int w : workers) {
      SimConfig c = config;
      c.workers = w;
      SimConfig base = c;
      base.strategy = FtStrategy{StrategyKind::kRestart, BatchingPolicy::Dynamic()};
      const double baseline = static_cast<double>(Run(plan, base).metrics.makespan);
      for (StrategyKind k : kinds) {
        for (const auto &p : policies) {
          c.strategy = FtStrategy{k, p};
          RunMetrics m = Run(plan, c, faults).metrics;
          m.overhead = static_cast<double>(m.makespan) / baseline;
          emit(w, "pipelined", c.strategy, m);
        }
      }
      // Blocking counterpart of the configured strategy; its pipelined row is
      // emitted only when it is not already one of the cells above.
      c.strategy = config.strategy;
      bool have_pipelined = std::find(kinds.begin(), kinds.end(), c.strategy.kind) != kinds.end() &&
                            std::find(policies.begin(), policies.end(), c.strategy.batching) != policies.end();
      if (!have_pipelined || !faults.empty()) {
        RunMetrics piped = Run(plan, c).metrics;
        piped.overhead = static_cast<double>(piped.makespan) / baseline;
        emit(w, "pipelined", c.strategy, piped);
      }
      RunMetrics blocked = RunBlocking(plan, c);
      blocked.overhead = static_cast<double>(blocked.makespan) / baseline;
      emit(w, "blocking", c.strategy, blocked);
    }
  }
  std::cout << table;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    WriteFile(fs::path(a.out) / "ablation.txt", table);
    WriteFile(fs::path(a.out) / "ablation.json",
              json{{"version", kSummaryVersion}, {"plan", a.plan}, {"rows", rows}}.dump(2) + "\n");
  }
  return 0;
}

int CmdVerify(const std::string &path) {
  AuditLog log = AuditLog::Load(path);
  auto violations = AuditTrace(log);
  for (const auto &v : violations) std::cout << "violation: " << v << "\n";
  if (!violations.empty()) {
    std::cerr << path << ": " << violations.size() << " violation(s)\n";
    return kExitViolations;
  }
  std::cout << path << ": clean (" << log.records().size() << " records)\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"walq: pipelined query engine on a simulated cluster with write-ahead lineage recovery"};
  app.require_subcommand(1);

  CommonArgs run_args;
  auto *run = app.add_subcommand("run", "Run a plan, write result digest, metrics, summary and audit log");
  AddCommon(run, run_args, true);

  CommonArgs ablate_args;
  AblateArgs ab;
  auto *ablate = app.add_subcommand("ablate", "Sweep strategies x batching x worker counts");
  AddCommon(ablate, ablate_args, true);
  ablate->add_option("--strategies", ab.strategies, "Comma-separated strategies")->capture_default_str();
  ablate->add_option("--batchings", ab.batchings, "Comma-separated batching policies")->capture_default_str();
  ablate->add_option("--worker-counts", ab.worker_counts, "Comma-separated worker counts (default: --workers)");

  std::string log_path;
  auto *verify = app.add_subcommand("verify", "Check an audit log offline");
  verify->add_option("log", log_path, "Audit log path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  }
  try {
    if (*run) return CmdRun(run_args);
    if (*ablate) return CmdAblate(ablate_args, ab);
    if (*verify) return CmdVerify(log_path);
  } catch (const AuditParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const PlanError &e) {
    std::cerr << "error: plan rejected: " << e.what() << "\n";
    return kExitError;
  } catch (const DeadlockError &e) {
    std::cerr << "error: " << e.what() << "\n" << e.dump();
    return kExitError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
