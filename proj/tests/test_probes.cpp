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

#include "ppcl/linalg.h"
#include "ppcl/probes.h"
#include "support.h"

using namespace ppcl;

namespace {

Tensor eye(std::size_t n) { return Tensor::identity(n); }

}  // namespace

TEST_SUITE("probes") {
  TEST_CASE("identity layer gives W = 0, doubling layer gives W = I") {
    std::mt19937_64 rng(1);
    const Tensor x = Tensor::randn(6, 40, rng);
    CHECK(mat::max_abs_diff(ls_init(x, x, 0.0), Tensor::matrix(6, 6)) == 0.0);
    CHECK(mat::max_abs_diff(ls_init(x, mat::scale(x, 2.0), 0.0), eye(6)) < 1e-12);
  }

  TEST_CASE("Y = A X recovers A - I at zero damping") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t d = 3 + trial % 6;
      const Tensor x = Tensor::randn(d, 4 * d + 7, rng);
      const Tensor a = Tensor::randn(d, d, rng);
      const Tensor w = ls_init(x, mat::matmul(a, x), 0.0);
      const Tensor expect = mat::sub(a, eye(d));
      CHECK(mat::frobenius_norm(mat::sub(w, expect)) <= 1e-8);
    }
  }

  TEST_CASE("zero damping matches the pseudoinverse solution on noisy targets") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t d = 4 + trial % 5;
      const Tensor x = Tensor::randn(d, 3 * d + 5, rng);
      const Tensor y = Tensor::randn(d, 3 * d + 5, rng);
      const Eigen::MatrixXd oracle = test::ls_oracle(test::to_eigen(x), test::to_eigen(y));
      CHECK(test::rel_frobenius(test::to_eigen(ls_init(x, y, 0.0)), oracle) <= 1e-8);
    }
  }

  TEST_CASE("statistics and direct forms agree") {
    std::mt19937_64 rng(4);
    const Tensor x = Tensor::randn(50, 5, rng), y = Tensor::randn(50, 5, rng);
    const FitStatistics s = fit_statistics(x, y);
    CHECK(s.count == 50);
    const Tensor a = ls_init(s);
    const Tensor b = ls_init(mat::transpose(x), mat::transpose(y));
    CHECK(mat::max_abs_diff(a, b) < 1e-12);
  }

  TEST_CASE("default damping is 1e-6 tr(XX^T)/d") {
    std::mt19937_64 rng(5);
    const Tensor x = Tensor::randn(30, 4, rng);
    const FitStatistics s = fit_statistics(x, x);
    CHECK(default_damping(s) == doctest::Approx(1e-6 * mat::trace(s.xx) / 4.0).epsilon(1e-15));
  }

  TEST_CASE("zero damping on singular XX^T is an error; default damping is not") {
    const Tensor x = Tensor::from_rows({{1, 2, 3, 4}, {2, 4, 6, 8}});
    CHECK_THROWS_AS(ls_init(x, x, 0.0), SingularMatrixError);
    CHECK_NOTHROW(ls_init(x, x));
    CHECK_THROWS_AS(ls_init(x, x, -1.0), std::invalid_argument);
  }

  TEST_CASE("exactly linear layer: loss stays tiny through training") {
    std::mt19937_64 rng(6);
    const Tensor x = Tensor::randn(200, 8, rng);
    const Tensor a = Tensor::randn(8, 8, rng, 0.3);
    const Tensor y = mat::add(x, mat::matmul_bt(x, a));
    LinearProbe p{1, ls_init(fit_statistics(x, y), 0.0), false, 0.0};
    CHECK(fit_loss(p, x, y) <= 1e-10);
    p = train_probe(p, x, y, 100, 1e-5);
    CHECK(p.trained);
    CHECK(fit_loss(p, x, y) <= 1e-10);
  }

  TEST_CASE("zero steps leave the probe bit-unchanged") {
    std::mt19937_64 rng(7);
    const Tensor x = Tensor::randn(20, 4, rng), y = Tensor::randn(20, 4, rng);
    const LinearProbe p{2, Tensor::randn(4, 4, rng), false, 0.0};
    const LinearProbe q = train_probe(p, x, y, 0, 1e-3);
    CHECK(q.weight.bit_equal(p.weight));
  }

  TEST_CASE("training from zero reduces the fit loss") {
    std::mt19937_64 rng(8);
    const Tensor x = Tensor::randn(100, 6, rng);
    const Tensor y = mat::add(x, mat::matmul_bt(x, Tensor::randn(6, 6, rng, 0.5)));
    const LinearProbe zero{1, Tensor::matrix(6, 6), false, 0.0};
    const LinearProbe trained = train_probe(zero, x, y, 300, 1e-2);
    CHECK(fit_loss(trained, x, y) < 0.05 * fit_loss(zero, x, y));
    CHECK(trained.final_loss == doctest::Approx(fit_loss(trained, x, y)).epsilon(1e-9));
  }

  TEST_CASE("probe_forward is x + x W^T and linear") {
    std::mt19937_64 rng(9);
    const LinearProbe zero{1, Tensor::matrix(5, 5), false, 0.0};
    const Tensor x = Tensor::randn(7, 5, rng), y = Tensor::randn(7, 5, rng);
    CHECK(probe_forward(zero, x).bit_equal(x));
    const LinearProbe p{1, Tensor::randn(5, 5, rng), false, 0.0};
    const Tensor lhs = probe_forward(p, mat::add(x, y));
    const Tensor rhs = mat::add(probe_forward(p, x), probe_forward(p, y));
    CHECK(mat::max_abs_diff(lhs, rhs) <= 1e-12);
    CHECK_THROWS_AS(probe_forward(p, Tensor::matrix(3, 4)), ShapeError);
  }

  TEST_CASE("chained probes equal the product of (I + W) maps") {
    std::mt19937_64 rng(10);
    const std::size_t d = 6;
    std::vector<LinearProbe> chain;
    for (int i = 0; i < 4; ++i) chain.push_back({i + 1, Tensor::randn(d, d, rng, 0.3), false, 0.0});
    const Tensor x = Tensor::randn(9, d, rng);
    Tensor stepwise = x;
    Eigen::MatrixXd product = Eigen::MatrixXd::Identity(6, 6);
    for (const auto& p : chain) {
      stepwise = probe_forward(p, stepwise);
      product = (Eigen::MatrixXd::Identity(6, 6) + test::to_eigen(p.weight)) * product;
    }
    const Eigen::MatrixXd composed = test::to_eigen(x) * product.transpose();
    CHECK((composed - test::to_eigen(stepwise)).norm() <= 1e-12 * composed.norm());
  }

  TEST_CASE("planted damped layers are fit nearly exactly and beat the identity map") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    const auto data = CalibrationSet::generate(spec, 8, {0.1, 0.4, 0.7, 1.0}, 43);
    const auto trace = *forward_model(m, data, true).trace;
    ProbeTrainConfig cfg;
    cfg.steps = 100;
    const auto probes = train_probes(trace, cfg);
    REQUIRE(probes.size() == static_cast<std::size_t>(spec.layers));
    for (int layer : {4, 5, 9}) {
      const Tensor x = trace.stacked_state(layer - 1), y = trace.stacked_state(layer);
      const Tensor r = mat::sub(y, x);
      const double energy = mat::frobenius_dot(r, r) / static_cast<double>(r.size());
      const LinearProbe& p = probes[static_cast<std::size_t>(layer - 1)];
      CHECK(p.layer == layer);
      CHECK(p.trained);
      const double output = mat::frobenius_dot(y, y) / static_cast<double>(y.size());
      CHECK(fit_loss(p, x, y) < energy);
      CHECK(fit_loss(p, x, y) < 1e-6 * output);
    }
  }

  TEST_CASE("epsilon zero plant: identity layers fit with loss exactly zero") {
    ModelSpec spec = test::small_spec();
    spec.epsilon = 0.0;
    const DualStreamModel m = build_teacher(spec);
    const auto trace = *forward_model(m, CalibrationSet::generate(spec, 3, {0.5}, 1), true).trace;
    ProbeTrainConfig cfg;
    cfg.steps = 20;
    const auto probes = train_probes(trace, cfg);
    for (int layer : {3, 4}) {
      const auto& p = probes[static_cast<std::size_t>(layer - 1)];
      CHECK(fit_loss(p, trace.stacked_state(layer - 1), trace.stacked_state(layer)) == 0.0);
    }
  }

  TEST_CASE("fit_affine recovers an exact affine map") {
    std::mt19937_64 rng(11);
    const Tensor x = Tensor::randn(60, 5, rng);
    const Tensor w = Tensor::randn(5, 3, rng), b = Tensor::randn(1, 3, rng);
    Tensor y = mat::matmul(x, w);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      for (std::size_t c = 0; c < 3; ++c) y(r, c) += b(0, c);
    }
    const Linear fit = fit_affine(x, y, 0.0);
    CHECK(mat::max_abs_diff(fit.weight, w) < 1e-10);
    CHECK(mat::max_abs_diff(fit.bias, b) < 1e-10);
    CHECK(affine_mse(fit, x, y) < 1e-20);
  }
}
