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

#include <stdexcept>

#include "ppcl/tensor.h"

namespace ppcl {

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower-triangular L with A = L L^T. Throws SingularMatrixError when a pivot
/// falls below rel_tol * max(diag(A)).
Tensor cholesky(const Tensor& a, double rel_tol = 1e-13);

/// Solves A X = B for symmetric positive definite A.
Tensor solve_spd(const Tensor& a, const Tensor& b, double rel_tol = 1e-13);

}  // namespace ppcl
