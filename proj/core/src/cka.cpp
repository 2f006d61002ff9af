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

#include "ppcl/cka.h"

#include <cmath>
#include <string>
#include <vector>

#include "ppcl/log.h"

namespace ppcl {

namespace {

void check_features(const Tensor& x, const char* what) {
  if (x.rank() != 2 || x.rows() < 2) {
    throw ShapeError(std::string(what) + ": need a matrix with at least 2 rows, got " +
                     x.shape_string());
  }
  if (!x.all_finite()) throw NonFiniteError(std::string(what) + ": non-finite input");
}

}  // namespace

Tensor gram_centered(const Tensor& x) {
  check_features(x, "gram_centered");
  const std::size_t n = x.rows();
  Tensor k = mat::matmul_bt(x, x);
  std::vector<double> row_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k(i, j);
    row_mean[i] = s / static_cast<double>(n);
    total += s;
  }
  const double grand = total / static_cast<double>(n * n);
  // K is symmetric, so column means equal row means.
  Tensor g = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) g(i, j) = k(i, j) - row_mean[i] - row_mean[j] + grand;
  }
  return g;
}

double hsic(const Tensor& gx, const Tensor& gy) {
  if (gx.shape() != gy.shape() || gx.rank() != 2 || gx.rows() != gx.cols()) {
    throw ShapeError("hsic: Gram shapes " + gx.shape_string() + " and " + gy.shape_string() +
                     " must be equal and square");
  }
  return mat::frobenius_dot(gx, gy);
}

Tensor center_and_normalize(const Tensor& x) {
  check_features(x, "center_and_normalize");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor c = x;
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x(i, j);
    const double mean = s / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) c(i, j) -= mean;
  }
  const double norm = mat::frobenius_norm(c);
  if (norm == 0.0) return Tensor::matrix(n, d);
  for (double& v : c.values()) v /= norm;
  return c;
}

double cka(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows()) {
    throw ShapeError("cka: row counts differ, " + x.shape_string() + " vs " + y.shape_string());
  }
  const Tensor gx = gram_centered(center_and_normalize(x));
  const Tensor gy = gram_centered(center_and_normalize(y));
  const double xx = hsic(gx, gx);
  const double yy = hsic(gy, gy);
  if (xx == 0.0 || yy == 0.0) {
    warn("cka: zero-variance input, returning 0");
    return 0.0;
  }
  return hsic(gx, gy) / std::sqrt(xx * yy);
}

double cka_avg(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("cka_avg: grids have " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " cells");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += cka(a[i], b[i]);
  return total / static_cast<double>(a.size());
}

double cka_avg(const ActivationTrace& a, int la, const ActivationTrace& b, int lb) {
  if (a.cell_count() != b.cell_count()) {
    throw ShapeError("cka_avg: traces have " + std::to_string(a.cell_count()) + " and " +
                     std::to_string(b.cell_count()) + " cells");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < a.cell_count(); ++c) {
    if (a.cells[c].timestep != b.cells[c].timestep) {
      throw ShapeError("cka_avg: timestep grids differ at cell " + std::to_string(c));
    }
    total += cka(a.state(la, c), b.state(lb, c));
  }
  return total / static_cast<double>(a.cell_count());
}

}  // namespace ppcl
