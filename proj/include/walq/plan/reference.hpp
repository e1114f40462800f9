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

#include <map>
#include <vector>

#include "walq/plan/plan.hpp"

namespace walq {

/// Final outputs per sink stage (stages without consumers).
using ResultSet = std::map<StageId, std::vector<Batch>>;

/// Order-insensitive digest over all sink stages.
uint64_t ResultDigest(const ResultSet &result);

/// Single-threaded, single-channel evaluation of the whole plan.
ResultSet EvaluateReference(const ValidatedPlan &plan);

}  // namespace walq
