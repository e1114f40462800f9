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
#include <optional>
#include <span>
#include <string>

namespace walq {

struct BatchingPolicy {
  enum class Kind { kDynamic, kStatic };
  Kind kind = Kind::kDynamic;
  int64_t batch_size = 1;  // B, static only

  static BatchingPolicy Dynamic() { return {}; }
  static BatchingPolicy Static(int64_t b) { return {Kind::kStatic, b}; }
  std::string ToString() const;
  bool operator==(const BatchingPolicy &) const = default;
};

/// Parses "dynamic" or "static:B".
BatchingPolicy ParseBatchingPolicy(const std::string &text);

struct InputSelection {
  int32_t upstream_index = 0;
  int64_t count = 0;
  bool operator==(const InputSelection &) const = default;
};

/// Picks one upstream channel and a count from per-channel eligible
/// (contiguous, committed) output counts. `remaining[i]` is the number of
/// outputs of channel i not yet consumed when its sentinel is known, or -1.
std::optional<InputSelection> ChooseInputs(std::span<const int64_t> eligible, std::span<const int64_t> remaining,
                                           const BatchingPolicy &policy);

}  // namespace walq
