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

#include "walq/plan/reference.hpp"

#include "walq/common/hash.hpp"

namespace walq {

uint64_t ResultDigest(const ResultSet &result) {
  uint64_t h = kFnvOffset;
  for (const auto &[stage, batches] : result) {
    h = MixU64(h, static_cast<uint64_t>(stage));
    h = MixU64(h, CanonicalDigest(batches));
  }
  return h;
}

ResultSet EvaluateReference(const ValidatedPlan &plan) {
  std::map<StageId, Batch> outputs;
  for (StageId s : plan.topo_order()) {
    const auto &spec = plan.stage(s);
    ChannelState state = InitialState(spec.op);
    Batch out;
    auto absorb = [&](const Batch &b) {
      if (out.schema().empty()) out = Batch(b.schema());
      out.Append(b);
    };
    if (IsSource(spec.op)) {
      const auto &ds = plan.plan().datasets.at(std::get<InputReader>(spec.op).dataset);
      auto res = ExecuteKernel(spec.op, std::move(state), ds.batches);
      state = std::move(res.state);
      absorb(res.output);
    } else {
      for (InputSide side : {InputSide::kBuild, InputSide::kMain}) {
        std::vector<Batch> inputs;
        for (StageId p : plan.producers(s)) {
          auto *probe = std::get_if<HashJoinProbe>(&spec.op);
          InputSide ps = (probe && probe->build_stage == p) ? InputSide::kBuild : InputSide::kMain;
          if (ps == side) inputs.push_back(outputs.at(p));
        }
        if (inputs.empty()) continue;
        auto res = ExecuteKernel(spec.op, std::move(state), inputs, side);
        state = std::move(res.state);
        absorb(res.output);
      }
    }
    absorb(FinalizeKernel(spec.op, state));
    outputs[s] = std::move(out);
  }
  ResultSet result;
  for (StageId s : plan.topo_order()) {
    if (plan.IsSink(s)) result[s].push_back(outputs[s]);
  }
  return result;
}

}  // namespace walq
