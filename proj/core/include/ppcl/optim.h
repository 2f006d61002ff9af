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
#include <span>
#include <vector>

#include "ppcl/autograd.h"
#include "ppcl/tensor.h"

namespace ppcl {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.02;
  double eps = 1e-8;
};

/// First and second moments for a fixed, ordered list of parameters.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  static AdamWState zeros_like(std::span<Tensor* const> params);
};

/// One decoupled-weight-decay Adam update. grads[i] may be null (treated as
/// zero). Throws ShapeError if params, grads and state disagree.
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                AdamWState& state, double lr, const AdamWConfig& config = {});

/// Convenience: pulls each parameter's gradient from a consumed tape.
void adamw_step(std::span<Tensor* const> params, const Tape& tape, AdamWState& state, double lr,
                const AdamWConfig& config = {});

}  // namespace ppcl
