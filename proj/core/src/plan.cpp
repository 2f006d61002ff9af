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
#include "ppcl/plan.h"

#include <algorithm>
#include <set>
#include <string>

namespace ppcl {

std::string_view binding_name(Binding b) {
  return b == Binding::kStudent ? "student" : "use-teacher";
}

Binding parse_binding(std::string_view name) {
  if (name == "student") return Binding::kStudent;
  if (name == "use-teacher") return Binding::kTeacher;
  throw IntervalError("unknown binding '" + std::string(name) + "'");
}

std::string_view width_kind_name(WidthKind k) { return k == WidthKind::kText ? "txt" : "ffn"; }

WidthKind parse_width_kind(std::string_view name) {
  if (name == "txt") return WidthKind::kText;
  if (name == "ffn") return WidthKind::kFfn;
  throw IntervalError("unknown width target kind '" + std::string(name) + "'");
}

IntervalSet PruningPlan::interval_set() const {
  IntervalSet set{{}, strategy};
  for (const auto& p : intervals) set.intervals.push_back(p.interval);
  return set;
}

std::vector<int> PruningPlan::text_targets() const {
  std::vector<int> out;
  for (const auto& w : width) {
    if (w.kind == WidthKind::kText) out.push_back(w.layer);
  }
  return out;
}

std::vector<int> PruningPlan::ffn_targets() const {
  std::vector<int> out;
  for (const auto& w : width) {
    if (w.kind == WidthKind::kFfn) out.push_back(w.layer);
  }
  return out;
}

std::vector<int> PruningPlan::survivors() const {
  std::vector<int> out;
  for (int i = 1; i <= spec.layers; ++i) {
    const bool covered = std::ranges::any_of(
        intervals, [i](const PlannedInterval& p) { return p.interval.span.contains(i); });
    if (!covered) out.push_back(i);
  }
  return out;
}

void PruningPlan::validate() const {
  spec.validate();
  interval_set().validate(spec.layers);
  const std::vector<int> alive = survivors();
  auto survives = [&](int layer) { return std::ranges::binary_search(alive, layer); };
  std::set<int> taken;
  std::set<int> text;
  for (const auto& w : width) {
    const std::string label = std::string(width_kind_name(w.kind)) + " target " +
                              std::to_string(w.layer);
    if (w.layer < 1 || w.layer > spec.layers) throw IntervalError(label + " is out of range");
    if (!survives(w.layer)) throw IntervalError(label + " lies inside a depth interval");
    if (!taken.insert(w.layer).second) throw IntervalError(label + " is listed twice");
    if (w.kind == WidthKind::kText) {
      if (w.source != w.layer - 1 || w.source < 1 || !survives(w.source)) {
        throw IntervalError(label + " needs source layer " + std::to_string(w.layer - 1) +
                            " to be a surviving layer");
      }
      text.insert(w.layer);
    } else if (w.source != 0) {
      throw IntervalError(label + " must not name a source layer");
    }
  }
  for (int j : text) {
    if (text.contains(j - 1)) {
      throw IntervalError("txt target " + std::to_string(j) + " reads from txt target " +
                          std::to_string(j - 1));
    }
  }
}

PruningPlan make_plan(const ModelSpec& spec, const IntervalSet& intervals,
                      std::vector<WidthTarget> width) {
  PruningPlan plan;
  plan.spec = spec;
  plan.strategy = intervals.strategy;
  for (const auto& d : intervals.intervals) plan.intervals.push_back({d, Binding::kStudent});
  plan.width = std::move(width);
  std::ranges::stable_sort(plan.width, [](const WidthTarget& a, const WidthTarget& b) {
    return a.layer < b.layer;
  });
  plan.validate();
  return plan;
}

}  // namespace ppcl
