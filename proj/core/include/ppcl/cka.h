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

// Linear-kernel centered kernel alignment.
//
// Inputs are token x feature matrices. cka() first centers each feature over
// tokens and divides by the global Frobenius norm, then compares centered
// Gram matrices through the biased HSIC estimator (plain Frobenius inner
// product; the 1/(n-1)^2 factor cancels in the ratio).

#pragma once

#include <span>

#include "ppcl/model.h"
#include "ppcl/tensor.h"

namespace ppcl {

/// H X X^T H with H = I - 11^T / n. No feature preprocessing.
Tensor gram_centered(const Tensor& x);

/// Frobenius inner product of two Gram matrices of the same shape.
double hsic(const Tensor& gx, const Tensor& gy);

/// Per-feature mean removal followed by division by the Frobenius norm.
/// Returns an all-zero matrix for zero-variance input.
Tensor center_and_normalize(const Tensor& x);

/// CKA in [0, 1]. Zero-variance input gives 0 and logs a warning.
double cka(const Tensor& x, const Tensor& y);

/// Mean of per-cell cka over matching (sample, timestep) grids.
double cka_avg(std::span<const Tensor> a, std::span<const Tensor> b);

/// Mean cka between layer la of trace a and layer lb of trace b, with
/// layer 0 meaning the model input.
double cka_avg(const ActivationTrace& a, int la, const ActivationTrace& b, int lb);

}  // namespace ppcl
