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

#include <functional>

#include "ppcl/autograd.h"

namespace ppcl {

/// Scalar-valued function recorded on the given tape from a single input leaf.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Max over elements of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace ppcl
