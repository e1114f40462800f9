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
#include <map>
#include <optional>
#include <vector>

#include "walq/common/ids.hpp"
#include "walq/plan/batch.hpp"

namespace walq {

/// Pseudo-channel addressing the head node's result collector.
inline constexpr ChannelId kSinkTarget{-1, 0};

/// Receive side of the push exchange: partitions pushed to one worker, keyed
/// by consumer channel and producer task name. Payloads are retained after
/// consumption so a rewound consumer on the same worker can read them again.
class ExchangeBuffer {
 public:
  enum class InsertResult { kInserted, kReplaced, kDropped };

  /// An unconsumed entry is replaced (an uncommitted attempt may be redone
  /// with different inputs under the same name); a consumed one is kept and
  /// the re-push dropped.
  InsertResult Insert(ChannelId consumer, const TaskName &name, Batch batch);
  const Batch *Find(ChannelId consumer, const TaskName &name) const;
  void MarkConsumed(ChannelId consumer, const TaskName &name);
  bool IsConsumed(ChannelId consumer, const TaskName &name) const;
  size_t size() const;
  void Clear() { slots_.clear(); }

 private:
  struct Slot {
    Batch batch;
    bool consumed = false;
  };
  std::map<ChannelId, std::map<TaskName, Slot>> slots_;
};

/// Upstream backup of task outputs, one serialized slice per target channel.
/// Volatile: the owner clears it when its worker dies.
class LocalBackupStore {
 public:
  void Put(const TaskName &name, ChannelId target, const Batch &slice);
  std::optional<Batch> Get(const TaskName &name, ChannelId target) const;
  bool Has(const TaskName &name) const { return slices_.contains(name); }
  uint64_t bytes() const { return bytes_; }
  void Clear();

 private:
  std::map<TaskName, std::map<ChannelId, std::vector<uint8_t>>> slices_;
  uint64_t bytes_ = 0;
};

}  // namespace walq
