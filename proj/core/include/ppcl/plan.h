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
// Pruning plan: which teacher layers are replaced and by what.
//
// Depth intervals replace teacher layers u..v with one student block. Width
// targets replace parts of a single surviving teacher layer j: the text
// stream except QKV (two projectors fed from layer j-1), or the FFN of both
// streams. Each entry is bound to its trained part or to the original
// teacher weights.

#pragma once

#include <string_view>
#include <vector>

#include "ppcl/detector.h"
#include "ppcl/model.h"

namespace ppcl {

enum class Binding { kStudent, kTeacher };

std::string_view binding_name(Binding b);
Binding parse_binding(std::string_view name);

enum class WidthKind { kText, kFfn };

std::string_view width_kind_name(WidthKind k);
WidthKind parse_width_kind(std::string_view name);

struct PlannedInterval {
  DetectedInterval interval;
  Binding binding = Binding::kStudent;

  friend bool operator==(const PlannedInterval&, const PlannedInterval&) = default;
};

struct WidthTarget {
  WidthKind kind = WidthKind::kFfn;
  int layer = 0;
  /// Layer feeding the text projectors; 0 for FFN targets.
  int source = 0;
  Binding binding = Binding::kStudent;

  friend bool operator==(const WidthTarget&, const WidthTarget&) = default;
};

struct PruningPlan {
  ModelSpec spec;
  Strategy strategy = Strategy::kLinearProbe;
  std::vector<PlannedInterval> intervals;
  std::vector<WidthTarget> width;

  IntervalSet interval_set() const;
  std::vector<int> text_targets() const;
  std::vector<int> ffn_targets() const;
  /// Layers that belong to no interval.
  std::vector<int> survivors() const;
  /// Throws IntervalError on overlapping, out-of-range or short intervals,
  /// and on width targets that are not one-to-one survivors, collide with
  /// another target, or (text) do not take their inputs from layer j - 1.
  void validate() const;

  friend bool operator==(const PruningPlan&, const PruningPlan&) = default;
};

/// Binds every interval to its student block and validates the result.
PruningPlan make_plan(const ModelSpec& spec, const IntervalSet& intervals,
                      std::vector<WidthTarget> width = {});

}  // namespace ppcl
