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

#include "ppcl/optim.h"

#include <cmath>
#include <string>

namespace ppcl {

AdamWState AdamWState::zeros_like(std::span<Tensor* const> params) {
  AdamWState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape(), 0.0);
    s.v.emplace_back(p->shape(), 0.0);
  }
  return s;
}

void adamw_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                AdamWState& state, double lr, const AdamWConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adamw_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(state.m.size()) +
                     " moment slots");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor* g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if ((g && g->shape() != p.shape()) || m.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("adamw_step: parameter " + std::to_string(i) + " has shape " +
                       p.shape_string() + " but gradient/state disagree");
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      p[j] -= lr * config.weight_decay * p[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

void adamw_step(std::span<Tensor* const> params, const Tape& tape, AdamWState& state, double lr,
                const AdamWConfig& config) {
  std::vector<const Tensor*> grads;
  grads.reserve(params.size());
  for (const Tensor* p : params) grads.push_back(tape.gradient(*p));
  adamw_step(params, grads, state, lr, config);
}

}  // namespace ppcl
