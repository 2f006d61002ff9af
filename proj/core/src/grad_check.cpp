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

#include "ppcl/grad_check.h"

#include <algorithm>
#include <cmath>

namespace ppcl {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape(false);
  return scalar(f(tape, tape.constant(x)));
}

}  // namespace

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  Tensor analytic(x.shape(), 0.0);
  {
    Tape tape;
    tape.add_trainable(x);
    Var loss = f(tape, tape.param(x));
    tape.backward(loss);
    if (const Tensor* g = tape.gradient(x)) analytic = *g;
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace ppcl
