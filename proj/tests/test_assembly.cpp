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
#include <doctest.h>

#include "ppcl/assembly.h"
#include "support.h"

using namespace ppcl;

namespace {

IntervalSet spans(std::initializer_list<Interval> list) {
  IntervalSet s;
  for (const Interval& i : list) s.intervals.push_back({i, std::nullopt});
  return s;
}

TrainedParts init_parts(const DualStreamModel& m, const PruningPlan& plan) {
  TrainedParts parts;
  for (const auto& p : plan.intervals) parts.depth.push_back(init_depth_part(m, p.interval.span));
  return parts;
}

}  // namespace

TEST_SUITE("plan") {
  TEST_CASE("survivors and target lists") {
    const ModelSpec spec;
    const PruningPlan plan = make_plan(spec, spans({{3, 4}, {5, 7}}),
                                       {{WidthKind::kText, 10, 9, Binding::kStudent},
                                        {WidthKind::kFfn, 12, 0, Binding::kStudent}});
    CHECK(plan.survivors() == std::vector<int>{1, 2, 8, 9, 10, 11, 12});
    CHECK(plan.text_targets() == std::vector<int>{10});
    CHECK(plan.ffn_targets() == std::vector<int>{12});
  }

  TEST_CASE("invalid width targets are rejected") {
    const ModelSpec spec;
    const IntervalSet s = spans({{3, 5}});
    auto plan_with = [&](std::vector<WidthTarget> w) { return make_plan(spec, s, std::move(w)); };
    CHECK_THROWS_AS(plan_with({{WidthKind::kFfn, 4, 0, Binding::kStudent}}), IntervalError);
    CHECK_THROWS_AS(plan_with({{WidthKind::kFfn, 8, 0, Binding::kStudent},
                               {WidthKind::kText, 8, 7, Binding::kStudent}}),
                    IntervalError);
    CHECK_THROWS_AS(plan_with({{WidthKind::kText, 6, 5, Binding::kStudent}}), IntervalError);
    CHECK_THROWS_AS(plan_with({{WidthKind::kText, 9, 7, Binding::kStudent}}), IntervalError);
    CHECK_THROWS_AS(plan_with({{WidthKind::kText, 9, 8, Binding::kStudent},
                               {WidthKind::kText, 10, 9, Binding::kStudent}}),
                    IntervalError);
    CHECK_THROWS_AS(plan_with({{WidthKind::kFfn, 13, 0, Binding::kStudent}}), IntervalError);
    CHECK_NOTHROW(plan_with({{WidthKind::kText, 9, 8, Binding::kStudent},
                             {WidthKind::kText, 11, 10, Binding::kStudent}}));
  }

  TEST_CASE("overlapping intervals are rejected") {
    CHECK_THROWS_AS(make_plan(ModelSpec{}, spans({{5, 7}, {6, 9}})), IntervalError);
    CHECK_NOTHROW(make_plan(ModelSpec{}, IntervalSet{}));
  }
}

TEST_SUITE("assembly") {
  TEST_CASE("all use-teacher reproduces the teacher bit for bit") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    PruningPlan plan = make_plan(spec, spans({{3, 5}, {8, 9}}),
                                 {{WidthKind::kFfn, 12, 0, Binding::kTeacher}});
    for (auto& p : plan.intervals) p.binding = Binding::kTeacher;
    const DualStreamModel s = assemble_student(m, plan, TrainedParts{});
    CHECK(s.depth() == m.depth());
    CHECK(param_count(s) == param_count(m));
    const auto data = CalibrationSet::generate(spec, 32, {0.5}, 77);
    for (std::size_t c = 0; c < data.cell_count(); ++c) {
      CHECK(run_model(s, data.cell_input(c), 0.5).bit_equal(run_model(m, data.cell_input(c), 0.5)));
    }
  }

  TEST_CASE("two student intervals on 12 layers leave 9 blocks") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    const PruningPlan plan = make_plan(spec, spans({{3, 4}, {5, 7}}));
    const DualStreamModel s = assemble_student(m, plan, init_parts(m, plan));
    CHECK(s.depth() == 9);
    CHECK(s.spans()[2] == Interval{3, 4});
    CHECK(s.spans()[3] == Interval{5, 7});
    CHECK(s.spans()[4] == Interval{8, 8});
  }

  TEST_CASE("toggling an interval to the teacher adds (len - 1) blocks of parameters") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    PruningPlan plan = make_plan(spec, spans({{1, 2}, {3, 5}, {8, 9}}));
    const TrainedParts parts = init_parts(m, plan);
    const std::int64_t block = param_count(m.layer(1));
    for (std::size_t i = 0; i < plan.intervals.size(); ++i) {
      PruningPlan toggled = plan;
      toggled.intervals[i].binding = Binding::kTeacher;
      const std::int64_t diff = param_count(assemble_student(m, toggled, parts)) -
                                param_count(assemble_student(m, plan, parts));
      CHECK(diff == (plan.intervals[i].interval.span.length() - 1) * block);
    }
  }

  TEST_CASE("width parts swap in projectors") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    const auto trace =
        *forward_model(m, CalibrationSet::generate(spec, 2, {0.5}, 1), true).trace;
    const PruningPlan plan = make_plan(spec, {}, {{WidthKind::kFfn, 12, 0, Binding::kStudent}});
    TrainedParts parts;
    parts.width.push_back(init_projector_part(trace, plan.width[0], spec));
    const DualStreamModel s = assemble_student(m, plan, parts);
    CHECK(param_count(m) - param_count(s) == 2 * 7296);
  }

  TEST_CASE("a student binding without its part is an error") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    const PruningPlan plan = make_plan(spec, spans({{3, 5}}));
    CHECK_THROWS_AS(assemble_student(m, plan, TrainedParts{}), AssemblyError);
  }

  TEST_CASE("budget binding picks the lowest-loss parts first") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    const PruningPlan plan = make_plan(spec, spans({{1, 2}, {3, 5}, {8, 9}}));
    TrainedParts parts = init_parts(m, plan);
    parts.depth[0].final_loss = 0.3;
    parts.depth[1].final_loss = 0.2;
    parts.depth[2].final_loss = 0.1;
    const std::int64_t block = param_count(m.layer(1));
    const std::int64_t teacher = param_count(m);

    const PruningPlan one = bind_for_budget(m, plan, parts, teacher - block);
    CHECK(one.intervals[0].binding == Binding::kTeacher);
    CHECK(one.intervals[1].binding == Binding::kTeacher);
    CHECK(one.intervals[2].binding == Binding::kStudent);

    const PruningPlan two = bind_for_budget(m, plan, parts, teacher - 2 * block);
    CHECK(two.intervals[1].binding == Binding::kStudent);
    CHECK(two.intervals[0].binding == Binding::kTeacher);
    CHECK(param_count(assemble_student(m, two, parts)) <= teacher - 2 * block);

    const PruningPlan none = bind_for_budget(m, plan, parts, teacher);
    for (const auto& p : none.intervals) CHECK(p.binding == Binding::kTeacher);

    CHECK_THROWS_AS(bind_for_budget(m, plan, parts, teacher - 10 * block), AssemblyError);
  }
}
