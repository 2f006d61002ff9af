// Copyright 2026 The ppcl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// Persistence: a binary tensor container for weights, and JSON for plans,
// configs and reports.
//
// Container layout (all integers little-endian):
//   "PPCL" | version u32 | count u32 |
//   count x { name_len u16 | name (UTF-8) | rank u8 | dims u64[rank] |
//             dtype u8 (0 = f64) | payload f64[prod(dims)] }
// Loading checks every length against the remaining bytes before allocating
// and returns nothing on error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppcl/distill.h"
#include "ppcl/model.h"
#include "ppcl/plan.h"
#include "ppcl/probes.h"

namespace ppcl {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr int kPlanVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class UnsupportedVersionError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class TruncatedPayloadError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class DuplicateNameError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
class UnknownDtypeError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};
/// Container is well-formed but lacks or mislabels a tensor a reader needs.
class MissingTensorError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class PlanFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for NaN/Inf in a JSON document; the message names the field path.
class NonFiniteFieldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered named tensors with unique names.
class TensorContainer {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  friend bool operator==(const TensorContainer& a, const TensorContainer& b);

 private:
  std::vector<NamedTensor> entries_;
};

std::vector<std::uint8_t> encode_container(const TensorContainer& c);
TensorContainer decode_container(std::span<const std::uint8_t> bytes);

/// Writes bytes to a sibling temporary file and renames it over path.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void save_container(const TensorContainer& c, const std::filesystem::path& path);
TensorContainer load_container(const std::filesystem::path& path);

// Domain objects <-> containers. Model tensors use the visit_model names plus
// "model.spec" and "model.spans".
TensorContainer model_to_container(const DualStreamModel& m);
DualStreamModel model_from_container(const TensorContainer& c);

/// "probe.{i}.W" and "probe.{i}.final_loss".
TensorContainer probes_to_container(std::span<const LinearProbe> probes);
std::vector<LinearProbe> probes_from_container(const TensorContainer& c);

/// "depth.{u}-{v}.<block tensor>" and "width.{kind}.{j}.<projector>", each with
/// ".initial_loss", ".final_loss" and ".curve".
TensorContainer parts_to_container(const TrainedParts& parts);
TrainedParts parts_from_container(const TensorContainer& c, const ModelSpec& spec);

// JSON.
nlohmann::json spec_to_json(const ModelSpec& spec);
/// Missing keys keep the values already in base.
ModelSpec spec_from_json(const nlohmann::json& j, ModelSpec base = {});

nlohmann::json plan_to_json(const PruningPlan& plan);
/// Parses and validates; throws PlanFormatError or IntervalError.
PruningPlan plan_from_json(const nlohmann::json& j);

void save_plan(const PruningPlan& plan, const std::filesystem::path& path);
PruningPlan load_plan(const std::filesystem::path& path);

/// Throws NonFiniteFieldError naming the first non-finite number's path.
void check_finite_json(const nlohmann::json& j, const std::string& path = "$");

/// Key-sorted, two-space indented text with a trailing newline.
std::string dump_json(const nlohmann::json& j);

/// Finite-checked, deterministic, atomic.
void write_report(const nlohmann::json& report, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace ppcl
