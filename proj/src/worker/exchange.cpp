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

#include "walq/worker/exchange.hpp"

namespace walq {

ExchangeBuffer::InsertResult ExchangeBuffer::Insert(ChannelId consumer, const TaskName &name, Batch batch) {
  auto &slots = slots_[consumer];
  auto it = slots.find(name);
  if (it == slots.end()) {
    slots.emplace(name, Slot{std::move(batch), false});
    return InsertResult::kInserted;
  }
  if (it->second.consumed) return InsertResult::kDropped;
  it->second.batch = std::move(batch);
  return InsertResult::kReplaced;
}

const Batch *ExchangeBuffer::Find(ChannelId consumer, const TaskName &name) const {
  auto cit = slots_.find(consumer);
  if (cit == slots_.end()) return nullptr;
  auto it = cit->second.find(name);
  return it == cit->second.end() ? nullptr : &it->second.batch;
}

void ExchangeBuffer::MarkConsumed(ChannelId consumer, const TaskName &name) {
  auto cit = slots_.find(consumer);
  if (cit == slots_.end()) return;
  auto it = cit->second.find(name);
  if (it != cit->second.end()) it->second.consumed = true;
}

bool ExchangeBuffer::IsConsumed(ChannelId consumer, const TaskName &name) const {
  auto cit = slots_.find(consumer);
  if (cit == slots_.end()) return false;
  auto it = cit->second.find(name);
  return it != cit->second.end() && it->second.consumed;
}

size_t ExchangeBuffer::size() const {
  size_t n = 0;
  for (const auto &[c, s] : slots_) n += s.size();
  return n;
}

void LocalBackupStore::Put(const TaskName &name, ChannelId target, const Batch &slice) {
  auto bytes = slice.Serialize();
  auto &slot = slices_[name][target];
  bytes_ -= slot.size();
  bytes_ += bytes.size();
  slot = std::move(bytes);
}

std::optional<Batch> LocalBackupStore::Get(const TaskName &name, ChannelId target) const {
  auto it = slices_.find(name);
  if (it == slices_.end()) return std::nullopt;
  auto sit = it->second.find(target);
  if (sit == it->second.end()) return std::nullopt;
  return Batch::Deserialize(sit->second);
}

void LocalBackupStore::Clear() {
  slices_.clear();
  bytes_ = 0;
}

}  // namespace walq
