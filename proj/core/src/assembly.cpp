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
#include "ppcl/assembly.h"

#include <algorithm>
#include <string>
#include <tuple>

namespace ppcl {

DualStreamModel assemble_student(const DualStreamModel& teacher, const PruningPlan& plan,
                                 const TrainedParts& parts) {
  plan.validate();
  if (plan.spec != teacher.spec() || teacher.depth() != static_cast<std::size_t>(plan.spec.layers)) {
    throw AssemblyError("assemble_student: plan was made for a different teacher ModelSpec");
  }
  std::vector<Block> blocks;
  std::vector<Interval> spans;
  int layer = 1;
  std::size_t next_interval = 0;
  while (layer <= plan.spec.layers) {
    if (next_interval < plan.intervals.size() &&
        plan.intervals[next_interval].interval.span.first == layer) {
      const PlannedInterval& p = plan.intervals[next_interval++];
      const Interval span = p.interval.span;
      if (p.binding == Binding::kStudent) {
        const DepthStudentPart* part = parts.find_depth(span);
        if (!part) {
          throw AssemblyError("assemble_student: interval [" + std::to_string(span.first) + "," +
                              std::to_string(span.last) + "] is bound to a missing student part");
        }
        blocks.push_back(part->block);
        spans.push_back(span);
      } else {
        for (int l = span.first; l <= span.last; ++l) {
          blocks.push_back(teacher.layer(l));
          spans.push_back({l, l});
        }
      }
      layer = span.last + 1;
      continue;
    }
    const WidthTarget* target = nullptr;
    for (const auto& w : plan.width) {
      if (w.layer == layer && w.binding == Binding::kStudent) target = &w;
    }
    if (target) {
      const ProjectorPart* part = parts.find_width(target->kind, layer);
      if (!part) {
        throw AssemblyError("assemble_student: " + std::string(width_kind_name(target->kind)) +
                            " target " + std::to_string(layer) + " is bound to a missing part");
      }
      blocks.push_back(projected_block(teacher, *part));
    } else {
      blocks.push_back(teacher.layer(layer));
    }
    spans.push_back({layer, layer});
    ++layer;
  }
  return DualStreamModel(teacher.spec(), teacher.embedding(), std::move(blocks), std::move(spans));
}

PruningPlan bind_for_budget(const DualStreamModel& teacher, const PruningPlan& plan,
                            const TrainedParts& parts, std::int64_t max_params) {
  PruningPlan out = plan;
  // (loss, kind order, layer, index into intervals or width)
  std::vector<std::tuple<double, int, int, std::size_t>> order;
  for (std::size_t i = 0; i < out.intervals.size(); ++i) {
    out.intervals[i].binding = Binding::kTeacher;
    if (const auto* p = parts.find_depth(out.intervals[i].interval.span)) {
      order.emplace_back(p->final_loss, 0, p->span.first, i);
    }
  }
  for (std::size_t i = 0; i < out.width.size(); ++i) {
    out.width[i].binding = Binding::kTeacher;
    if (const auto* p = parts.find_width(out.width[i].kind, out.width[i].layer)) {
      order.emplace_back(p->final_loss, 1, p->layer, i);
    }
  }
  std::ranges::sort(order);
  std::int64_t count = param_count(assemble_student(teacher, out, parts));
  for (const auto& [loss, kind, layer, index] : order) {
    if (count <= max_params) break;
    if (kind == 0) {
      out.intervals[index].binding = Binding::kStudent;
    } else {
      out.width[index].binding = Binding::kStudent;
    }
    count = param_count(assemble_student(teacher, out, parts));
  }
  if (count > max_params) {
    throw AssemblyError("bind_for_budget: smallest assembly has " + std::to_string(count) +
                        " parameters, budget is " + std::to_string(max_params));
  }
  return out;
}

}  // namespace ppcl
