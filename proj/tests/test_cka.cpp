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
#include <doctest.h>

#include "ppcl/cka.h"
#include "ppcl/log.h"
#include "support.h"

using namespace ppcl;

TEST_SUITE("cka") {
  TEST_CASE("identical rows give a zero centered Gram") {
    const Tensor x = Tensor::from_rows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
    const Tensor g = gram_centered(x);
    for (double v : g.values()) CHECK(v == 0.0);
  }

  TEST_CASE("centered Gram rows sum to zero") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor g = gram_centered(Tensor::randn(9, 5, rng, 3.0));
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
        CHECK(std::abs(s) <= 1e-10);
      }
    }
  }

  TEST_CASE("3x2 integer Gram matches H X X^T H computed by hand") {
    const Tensor x = Tensor::from_rows({{1, 2}, {3, 4}, {5, 7}});
    const double nine[3][3] = {{85, 7, -92}, {7, 1, -8}, {-92, -8, 100}};
    const Tensor g = gram_centered(x);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(g(i, j) == doctest::Approx(nine[i][j] / 9.0).epsilon(1e-14));
    }
  }

  TEST_CASE("hsic basic algebra") {
    std::mt19937_64 rng(3);
    const Tensor gx = gram_centered(Tensor::randn(6, 4, rng));
    const Tensor gy = gram_centered(Tensor::randn(6, 3, rng));
    CHECK(hsic(gx, gx) >= 0.0);
    CHECK(hsic(gx, Tensor::matrix(6, 6)) == 0.0);
    CHECK(hsic(gx, gy) == hsic(gy, gx));
    CHECK_THROWS_AS(hsic(gx, Tensor::matrix(5, 5)), ShapeError);
  }

  TEST_CASE("cka invariants over random matrices") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 5 + trial % 11, d = 2 + trial % 7;
      const Tensor x = Tensor::randn(n, d, rng);
      const Tensor y = Tensor::randn(n, 1 + trial % 5, rng);
      const Tensor o = test::from_eigen(test::random_orthogonal(d, rng));
      CHECK(std::abs(cka(x, x) - 1.0) <= 1e-10);
      CHECK(std::abs(cka(mat::scale(x, 3.0), y) - cka(x, y)) <= 1e-10);
      CHECK(std::abs(cka(mat::matmul(x, o), x) - 1.0) <= 1e-10);
      CHECK(std::abs(cka(x, y) - cka(y, x)) <= 1e-12);
      const double c = cka(x, y);
      CHECK(c >= -1e-12);
      CHECK(c <= 1.0 + 1e-12);
      CHECK(std::abs(c - test::cka_oracle(test::to_eigen(x), test::to_eigen(y))) <= 1e-10);
    }
  }

  TEST_CASE("zero-variance input returns 0 with a warning") {
    std::mt19937_64 rng(5);
    const auto before = warning_count();
    CHECK(cka(Tensor::matrix(4, 3, 2.5), Tensor::randn(4, 3, rng)) == 0.0);
    CHECK(warning_count() == before + 1);
  }

  TEST_CASE("mismatched row counts and non-finite values throw") {
    CHECK_THROWS_AS(cka(Tensor::matrix(4, 2, 1.0), Tensor::matrix(5, 2, 1.0)), ShapeError);
    Tensor bad = Tensor::from_rows({{1, 2}, {std::nan(""), 0}});
    CHECK_THROWS_AS(cka(bad, bad), NonFiniteError);
  }

  TEST_CASE("cka_avg of constant per-cell values returns that value") {
    std::mt19937_64 rng(6);
    const Tensor x = Tensor::randn(6, 3, rng), y = Tensor::randn(6, 3, rng);
    const std::vector<Tensor> a(5, x), b(5, y);
    CHECK(cka_avg(a, b) == doctest::Approx(cka(x, y)).epsilon(1e-15));
  }

  TEST_CASE("2 samples x 2 timesteps equals the mean of four cka calls") {
    std::mt19937_64 rng(7);
    ActivationTrace a, b;
    a.layers = b.layers = 1;
    std::vector<Tensor> xs, ys;
    for (int s = 0; s < 2; ++s) {
      for (double t : {0.25, 0.75}) {
        xs.push_back(Tensor::randn(5, 4, rng));
        ys.push_back(Tensor::randn(5, 4, rng));
        a.cells.push_back({t, {Tensor::randn(5, 4, rng), xs.back()}, {}});
        b.cells.push_back({t, {Tensor::randn(5, 4, rng), ys.back()}, {}});
      }
    }
    double mean = 0.0;
    for (int i = 0; i < 4; ++i) mean += cka(xs[i], ys[i]);
    CHECK(cka_avg(a, 1, b, 1) == doctest::Approx(mean / 4.0).epsilon(1e-15));
    CHECK(cka_avg(a, 1, a, 1) == doctest::Approx(1.0).epsilon(1e-12));
    b.cells[2].timestep = 0.5;
    CHECK_THROWS_AS(cka_avg(a, 1, b, 1), ShapeError);
  }
}
