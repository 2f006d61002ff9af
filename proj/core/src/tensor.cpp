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

#include "ppcl/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace ppcl {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank2(const Tensor& t, const char* kernel) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(kernel) + ": expected rank-2 tensor, got " + t.shape_string());
  }
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw ShapeError("Tensor: payload of " + std::to_string(data_.size()) +
                     " values does not match shape " + ppcl::shape_string(shape_));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::randn(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t = matrix(rows, cols);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
std::size_t Tensor::cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const { return ppcl::shape_string(shape_); }

bool Tensor::bit_equal(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

namespace mat {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dims differ, " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: inner dims differ, " + a.shape_string() + " x " +
                     b.shape_string() + "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_at");
  require_rank2(b, "matmul_at");
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at: inner dims differ, " + a.shape_string() + "^T x " +
                     b.shape_string());
  }
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data() + p * n;
    const double* brow = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      double* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "row_slice");
  if (begin + count > a.rows()) {
    throw ShapeError("row_slice: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + a.shape_string());
  }
  std::vector<double> data(a.data() + begin * a.cols(), a.data() + (begin + count) * a.cols());
  return Tensor({count, a.cols()}, std::move(data));
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor::matrix(0, 0);
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "vstack");
    if (p.cols() != c) {
      throw ShapeError("vstack: column counts differ, " + std::to_string(c) + " vs " +
                       std::to_string(p.cols()));
    }
    r += p.rows();
  }
  std::vector<double> data;
  data.reserve(r * c);
  for (const Tensor& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  return Tensor({r, c}, std::move(data));
}

double frobenius_dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("frobenius_dot: shapes differ, " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Tensor& a) { return std::sqrt(frobenius_dot(a, a)); }

double trace(const Tensor& a) {
  require_rank2(a, "trace");
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) s += a(i, i);
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: shapes differ, " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mat

}  // namespace ppcl
