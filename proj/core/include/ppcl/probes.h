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
// Residual linear probes: one per teacher layer, imitating the block's map
// from its input T_{i-1} to its output T_i with x -> x + W x.
//
// The probe acts on each token's d-dimensional feature vector (text and image
// tokens alike). Inputs here are token-major (one token per row), so applying
// the probe to a stacked batch is X + X W^T. ls_init also accepts the
// feature-major orientation directly.

#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "ppcl/model.h"
#include "ppcl/optim.h"
#include "ppcl/tensor.h"

namespace ppcl {

struct LinearProbe {
  int layer = 0;
  Tensor weight;  ///< d x d
  bool trained = false;
  double final_loss = 0.0;
};

/// Second-moment statistics of a fit problem with X = inputs and
/// R = targets - inputs, both feature-major.
struct FitStatistics {
  Tensor xx;              ///< X X^T
  Tensor rx;              ///< R X^T
  std::size_t count = 0;  ///< number of examples (columns of X)
};

/// Statistics from token-major stacks (rows are examples).
FitStatistics fit_statistics(const Tensor& inputs, const Tensor& targets);

/// 1e-6 * tr(X X^T) / d.
double default_damping(const FitStatistics& stats);

/// W = R X^T (X X^T + damping I)^{-1}. With damping = 0 a singular X X^T
/// raises SingularMatrixError. nullopt selects default_damping.
Tensor ls_init(const FitStatistics& stats, std::optional<double> damping = std::nullopt);

/// Feature-major form: x and y are d x N.
Tensor ls_init(const Tensor& x, const Tensor& y, std::optional<double> damping = std::nullopt);

/// Token-major rows: x + x W^T.
Tensor probe_forward(const LinearProbe& probe, const Tensor& x);

/// Mean squared residual of probe_forward(x) against targets.
double fit_loss(const LinearProbe& probe, const Tensor& inputs, const Tensor& targets);

/// Ridge-damped affine least squares on token-major rows: targets ~ x W + b.
/// nullopt damping selects 1e-6 * tr(Xc^T Xc) / d on the centered inputs.
Linear fit_affine(const Tensor& inputs, const Tensor& targets,
                  std::optional<double> damping = std::nullopt);

/// Mean squared residual of an affine map.
double affine_mse(const Linear& map, const Tensor& inputs, const Tensor& targets);

struct ProbeTrainConfig {
  int steps = 500;
  double lr = 1e-5;
  std::optional<double> damping;
  AdamWConfig adam;
};

/// Full-batch AdamW on the mean squared fit loss. The gradient is formed from
/// the fit statistics, which gives the same value as differentiating the
/// stacked loss but costs O(d^3) per step instead of O(N d^2).
LinearProbe train_probe(LinearProbe probe, const Tensor& inputs, const Tensor& targets,
                        int steps, double lr, const AdamWConfig& adam = {});

/// ls_init followed by train_probe for every layer, reading only layer i's
/// traced input and output for probe i.
std::vector<LinearProbe> train_probes(const ActivationTrace& trace, const ProbeTrainConfig& config);

}  // namespace ppcl
