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
#pragma once

#include <cstdint>
#include <stdexcept>

#include "ppcl/distill.h"
#include "ppcl/model.h"
#include "ppcl/plan.h"

namespace ppcl {

class AssemblyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Builds a student from teacher layers and trained parts. A student-bound
/// interval [u, v] becomes one block standing for layers u..v; a student-bound
/// width target swaps projectors into its layer. Use-teacher entries keep the
/// original layers. Throws AssemblyError when a student binding has no part.
DualStreamModel assemble_student(const DualStreamModel& teacher, const PruningPlan& plan,
                                 const TrainedParts& parts);

/// Rebinds the plan so the assembly has at most max_params parameters,
/// switching entries from use-teacher to student in order of increasing final
/// distillation loss (ties: depth parts first, then lower layer). Throws
/// AssemblyError if binding every available part still exceeds the budget.
PruningPlan bind_for_budget(const DualStreamModel& teacher, const PruningPlan& plan,
                            const TrainedParts& parts, std::int64_t max_params);

}  // namespace ppcl
