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
#include "ppcl/linalg.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace ppcl {

Tensor cholesky(const Tensor& a, double rel_tol) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw ShapeError("cholesky: expected a square matrix, got " + a.shape_string());
  }
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double floor = rel_tol * max_diag;
  Tensor l = Tensor::matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > floor)) {
      throw SingularMatrixError("cholesky: pivot " + std::to_string(j) + " is " +
                                std::to_string(d) + ", matrix is singular or not positive definite");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Tensor solve_spd(const Tensor& a, const Tensor& b, double rel_tol) {
  if (b.rank() != 2 || b.rows() != a.rows()) {
    throw ShapeError("solve_spd: right-hand side " + b.shape_string() + " does not match " +
                     a.shape_string());
  }
  const Tensor l = cholesky(a, rel_tol);
  const std::size_t n = a.rows(), m = b.cols();
  Tensor x = b;
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

}  // namespace ppcl
