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

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "walq/plan/plan.hpp"

namespace walq {

/// Current plan file format version.
constexpr int kPlanFormatVersion = 1;

class PlanFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a plan document. Relative dataset "file" references resolve
/// against `base_dir`.
QueryPlan ParsePlanJson(const nlohmann::json &doc, const std::filesystem::path &base_dir = {});
QueryPlan LoadPlanFile(const std::filesystem::path &path);

/// Serializes with datasets inlined.
nlohmann::json PlanToJson(const QueryPlan &plan);

nlohmann::json BatchToJson(const Batch &batch);
Batch BatchFromJson(const nlohmann::json &doc, const Schema &schema);

/// Deterministic synthetic data: columns drawn uniformly from [lo, hi].
struct GeneratorSpec {
  size_t rows = 0;
  size_t batch_rows = 1;
  uint64_t seed = 0;
  std::vector<std::pair<Field, std::pair<int64_t, int64_t>>> columns;
};
Dataset GenerateDataset(const GeneratorSpec &spec);

}  // namespace walq
