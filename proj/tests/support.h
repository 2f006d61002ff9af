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
// Shared helpers and independent oracles for the test binaries.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ppcl/autograd.h"
#include "ppcl/detector.h"
#include "ppcl/model.h"
#include "ppcl/tensor.h"

namespace ppcl::test {

inline Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  }
  return m;
}

inline Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
    }
  }
  return t;
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Random orthogonal matrix from the Q factor of a Gaussian matrix.
inline Eigen::MatrixXd random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = to_eigen(Tensor::randn(n, n, rng));
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                       static_cast<Eigen::Index>(n));
}

/// Linear CKA written straight from its definition with an explicit
/// centering matrix H.
inline double cka_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  auto prep = [](Eigen::MatrixXd m) {
    m.rowwise() -= m.colwise().mean();
    const double n = m.norm();
    return n > 0.0 ? Eigen::MatrixXd(m / n) : m;
  };
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) -
                            Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd xp = prep(x), yp = prep(y);
  const Eigen::MatrixXd gx = h * xp * xp.transpose() * h;
  const Eigen::MatrixXd gy = h * yp * yp.transpose() * h;
  const double xy = (gx.array() * gy.array()).sum();
  const double xx = (gx.array() * gx.array()).sum();
  const double yy = (gy.array() * gy.array()).sum();
  return xy / std::sqrt(xx * yy);
}

/// Residual least squares through the Moore-Penrose pseudoinverse:
/// W = (Y - X) pinv(X), feature-major d x N inputs.
inline Eigen::MatrixXd ls_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return (y - x) * x.completeOrthogonalDecomposition().pseudoInverse();
}

/// Interval extraction by enumeration: for each start u, collect every k in
/// [u+2, M] whose first difference rises, take the smallest (v = k - 1) or M,
/// then filter by tau. Differences are recomputed from the raw values.
inline std::vector<Interval> brute_force_intervals(const CkaTable& t, double tau, int first_u = 1) {
  const int m = t.layers();
  std::vector<Interval> out;
  int u = first_u;
  while (u < m) {
    std::vector<double> c(static_cast<std::size_t>(m + 1), 0.0);
    for (int k = u; k <= m; ++k) c[static_cast<std::size_t>(k)] = t.cka(u, k);
    std::vector<int> rises;
    for (int k = u + 2; k <= m; ++k) {
      const double dk = c[static_cast<std::size_t>(k - 1)] - c[static_cast<std::size_t>(k)];
      const double dprev = c[static_cast<std::size_t>(k - 2)] - c[static_cast<std::size_t>(k - 1)];
      if (dk > dprev) rises.push_back(k);
    }
    const int v = rises.empty() ? m : rises.front() - 1;
    if (c[static_cast<std::size_t>(v)] >= tau) out.push_back({u, v});
    u = v + 1;
  }
  return out;
}

/// Scalar test function over one leaf: weighted sum of a kernel's output.
struct KernelCase {
  std::string name;
  std::size_t rows, cols;
  std::function<Var(Tape&, Var)> build;
};

inline Var weighted_sum(Tape& tape, Var v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor& val = v.value();
  return sum(mul(v, tape.constant(Tensor::randn(val.rows(), val.cols(), rng))));
}

/// One case per kernel, plus the broadcast forms of add and mul.
inline std::vector<KernelCase> kernel_cases() {
  auto fixed = [](std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor::randn(r, c, rng);
  };
  std::vector<KernelCase> cases;
  cases.push_back({"matmul_left", 4, 5, [=](Tape& t, Var x) {
                     return weighted_sum(t, matmul(x, t.constant(fixed(5, 3, 11))), 1);
                   }});
  cases.push_back({"matmul_right", 5, 3, [=](Tape& t, Var x) {
                     return weighted_sum(t, matmul(t.constant(fixed(4, 5, 12)), x), 2);
                   }});
  cases.push_back({"matmul_square", 4, 4, [](Tape& t, Var x) {
                     return weighted_sum(t, matmul(x, x), 3);
                   }});
  cases.push_back({"add", 3, 4, [=](Tape& t, Var x) {
                     return weighted_sum(t, add(x, t.constant(fixed(3, 4, 13))), 4);
                   }});
  cases.push_back({"add_broadcast", 1, 4, [=](Tape& t, Var x) {
                     return weighted_sum(t, add(t.constant(fixed(3, 4, 14)), x), 5);
                   }});
  cases.push_back({"sub", 3, 4, [=](Tape& t, Var x) {
                     return weighted_sum(t, sub(t.constant(fixed(3, 4, 15)), x), 6);
                   }});
  cases.push_back({"scale", 3, 4, [](Tape& t, Var x) {
                     return weighted_sum(t, scale(x, -1.7), 7);
                   }});
  cases.push_back({"mul", 3, 4, [](Tape& t, Var x) { return weighted_sum(t, mul(x, x), 8); }});
  cases.push_back({"mul_broadcast", 1, 4, [=](Tape& t, Var x) {
                     return weighted_sum(t, mul(t.constant(fixed(3, 4, 16)), x), 9);
                   }});
  cases.push_back({"transpose", 3, 5, [](Tape& t, Var x) {
                     return weighted_sum(t, transpose(x), 10);
                   }});
  cases.push_back({"concat_rows", 2, 4, [=](Tape& t, Var x) {
                     const Var parts[] = {x, t.constant(fixed(3, 4, 17)), scale(x, 2.0)};
                     return weighted_sum(t, concat_rows(parts), 11);
                   }});
  cases.push_back({"slice_rows", 6, 3, [](Tape& t, Var x) {
                     return weighted_sum(t, slice_rows(x, 2, 3), 12);
                   }});
  cases.push_back({"layer_norm", 4, 6, [](Tape& t, Var x) {
                     return weighted_sum(t, layer_norm(x), 13);
                   }});
  cases.push_back({"softmax_rows", 4, 5, [](Tape& t, Var x) {
                     return weighted_sum(t, softmax_rows(x), 14);
                   }});
  cases.push_back({"gelu", 4, 5, [](Tape& t, Var x) { return weighted_sum(t, gelu(x), 15); }});
  cases.push_back({"l2_normalize_rows", 4, 5, [](Tape& t, Var x) {
                     return weighted_sum(t, l2_normalize_rows(x), 16);
                   }});
  cases.push_back({"mse", 3, 4, [=](Tape& t, Var x) {
                     return mse(x, t.constant(fixed(3, 4, 18)));
                   }});
  cases.push_back({"sum", 3, 4, [](Tape& t, Var x) { return sum(mul(x, x)); }});
  return cases;
}

/// Small teacher settings that keep the unit tests fast.
inline ModelSpec small_spec(std::uint64_t seed = 7) {
  ModelSpec s;
  s.layers = 6;
  s.dim = 16;
  s.heads = 2;
  s.text_tokens = 4;
  s.image_tokens = 8;
  s.planted = {{2, 4}};
  s.seed = seed;
  return s;
}

}  // namespace ppcl::test
