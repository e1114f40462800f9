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

#include "walq/worker/choose_inputs.hpp"

#include <stdexcept>

namespace walq {

std::string BatchingPolicy::ToString() const {
  if (kind == Kind::kDynamic) return "dynamic";
  return "static:" + std::to_string(batch_size);
}

BatchingPolicy ParseBatchingPolicy(const std::string &text) {
  if (text == "dynamic") return BatchingPolicy::Dynamic();
  const std::string prefix = "static:";
  if (text.rfind(prefix, 0) == 0) {
    size_t used = 0;
    int64_t b = 0;
    try {
      b = std::stoll(text.substr(prefix.size()), &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != text.size() - prefix.size() || b < 1) {
      throw std::invalid_argument("bad static batch size in '" + text + "' (want static:B with B >= 1)");
    }
    return BatchingPolicy::Static(b);
  }
  throw std::invalid_argument("unknown batching policy '" + text + "' (want dynamic or static:B)");
}

std::optional<InputSelection> ChooseInputs(std::span<const int64_t> eligible, std::span<const int64_t> remaining,
                                           const BatchingPolicy &policy) {
  if (policy.kind == BatchingPolicy::Kind::kDynamic) {
    std::optional<InputSelection> best;
    for (size_t i = 0; i < eligible.size(); ++i) {
      if (eligible[i] > 0 && (!best || eligible[i] > best->count)) {
        best = InputSelection{static_cast<int32_t>(i), eligible[i]};
      }
    }
    return best;
  }
  for (size_t i = 0; i < eligible.size(); ++i) {
    if (eligible[i] >= policy.batch_size) return InputSelection{static_cast<int32_t>(i), policy.batch_size};
  }
  // Tail of a finished channel: everything left is eligible but fewer than B.
  for (size_t i = 0; i < eligible.size(); ++i) {
    if (eligible[i] > 0 && i < remaining.size() && remaining[i] == eligible[i]) {
      return InputSelection{static_cast<int32_t>(i), eligible[i]};
    }
  }
  return std::nullopt;
}

}  // namespace walq
