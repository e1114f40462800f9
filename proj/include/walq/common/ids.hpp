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

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>

namespace walq {

using StageId = int32_t;
using WorkerId = int32_t;
using SimTime = int64_t;  // ticks

constexpr WorkerId kNoWorker = -1;
// Pseudo-owner for partitions spooled to the durable store.
constexpr WorkerId kDurableStore = -2;

/// One data-parallel instance of a stage.
struct ChannelId {
  StageId stage = 0;
  int32_t channel = 0;

  auto operator<=>(const ChannelId &) const = default;
  std::string ToString() const;
};

/// (stage, channel, seq). A task's output partition carries the task's name.
struct TaskName {
  StageId stage = 0;
  int32_t channel = 0;
  int64_t seq = 0;

  auto operator<=>(const TaskName &) const = default;
  ChannelId Channel() const { return {stage, channel}; }
  std::string ToString() const;
};

inline std::string ChannelId::ToString() const {
  return "(" + std::to_string(stage) + "," + std::to_string(channel) + ")";
}

inline std::string TaskName::ToString() const {
  return "(" + std::to_string(stage) + "," + std::to_string(channel) + "," + std::to_string(seq) + ")";
}

inline std::ostream &operator<<(std::ostream &os, const TaskName &n) { return os << n.ToString(); }
inline std::ostream &operator<<(std::ostream &os, const ChannelId &c) { return os << c.ToString(); }

}  // namespace walq
