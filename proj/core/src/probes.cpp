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
#include "ppcl/probes.h"

#include <cmath>
#include <string>

#include "ppcl/linalg.h"

namespace ppcl {

namespace {

void check_pair(const Tensor& inputs, const Tensor& targets, const char* what) {
  if (inputs.rank() != 2 || inputs.shape() != targets.shape()) {
    throw ShapeError(std::string(what) + ": inputs " + inputs.shape_string() + " and targets " +
                     targets.shape_string() + " must have equal rank-2 shapes");
  }
}

}  // namespace

FitStatistics fit_statistics(const Tensor& inputs, const Tensor& targets) {
  check_pair(inputs, targets, "fit_statistics");
  const Tensor residual = mat::sub(targets, inputs);
  return FitStatistics{mat::matmul_at(inputs, inputs), mat::matmul_at(residual, inputs),
                       inputs.rows()};
}

double default_damping(const FitStatistics& stats) {
  return 1e-6 * mat::trace(stats.xx) / static_cast<double>(stats.xx.rows());
}

Tensor ls_init(const FitStatistics& stats, std::optional<double> damping) {
  const double lambda = damping.value_or(default_damping(stats));
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw std::invalid_argument("ls_init: damping must be finite and >= 0");
  }
  Tensor a = stats.xx;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  // W A = R X^T with A symmetric, so W^T = A^{-1} (R X^T)^T.
  try {
    return mat::transpose(solve_spd(a, mat::transpose(stats.rx)));
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError(std::string("ls_init: X X^T is singular (") + e.what() +
                              "); use a nonzero damping");
  }
}

Tensor ls_init(const Tensor& x, const Tensor& y, std::optional<double> damping) {
  check_pair(x, y, "ls_init");
  const Tensor residual = mat::sub(y, x);
  return ls_init(FitStatistics{mat::matmul_bt(x, x), mat::matmul_bt(residual, x), x.cols()},
                 damping);
}

Tensor probe_forward(const LinearProbe& probe, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != probe.weight.rows()) {
    throw ShapeError("probe_forward: input " + x.shape_string() + " does not match probe " +
                     probe.weight.shape_string());
  }
  return mat::add(x, mat::matmul_bt(x, probe.weight));
}

double fit_loss(const LinearProbe& probe, const Tensor& inputs, const Tensor& targets) {
  check_pair(inputs, targets, "fit_loss");
  const Tensor diff = mat::sub(probe_forward(probe, inputs), targets);
  return mat::frobenius_dot(diff, diff) / static_cast<double>(diff.size());
}

Linear fit_affine(const Tensor& inputs, const Tensor& targets, std::optional<double> damping) {
  if (inputs.rank() != 2 || targets.rank() != 2 || inputs.rows() != targets.rows() ||
      inputs.rows() < 2) {
    throw ShapeError("fit_affine: inputs " + inputs.shape_string() + " and targets " +
                     targets.shape_string() + " need matching row counts >= 2");
  }
  const std::size_t n = inputs.rows();
  auto column_means = [n](const Tensor& a) {
    Tensor mean = Tensor::matrix(1, a.cols());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) mean[j] += a(i, j);
    }
    return mat::scale(mean, 1.0 / static_cast<double>(n));
  };
  auto centered = [n](const Tensor& a, const Tensor& mean) {
    Tensor c = a;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) -= mean[j];
    }
    return c;
  };
  const Tensor x_mean = column_means(inputs), y_mean = column_means(targets);
  const Tensor xc = centered(inputs, x_mean), yc = centered(targets, y_mean);
  Tensor a = mat::matmul_at(xc, xc);
  const double lambda =
      damping.value_or(1e-6 * mat::trace(a) / static_cast<double>(a.rows()));
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  Tensor weight = solve_spd(a, mat::matmul_at(xc, yc));
  Tensor bias = mat::sub(y_mean, mat::matmul(x_mean, weight));
  return Linear{std::move(weight), std::move(bias)};
}

double affine_mse(const Linear& map, const Tensor& inputs, const Tensor& targets) {
  Tensor pred = mat::matmul(inputs, map.weight);
  if (pred.shape() != targets.shape()) {
    throw ShapeError("affine_mse: prediction " + pred.shape_string() + " vs targets " +
                     targets.shape_string());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      const double r = pred(i, j) + map.bias[j] - targets(i, j);
      total += r * r;
    }
  }
  return total / static_cast<double>(pred.size());
}

LinearProbe train_probe(LinearProbe probe, const Tensor& inputs, const Tensor& targets, int steps,
                        double lr, const AdamWConfig& adam) {
  check_pair(inputs, targets, "train_probe");
  if (steps < 0) throw std::invalid_argument("train_probe: steps must be >= 0");
  if (steps > 0) {
    const FitStatistics stats = fit_statistics(inputs, targets);
    // d/dW mean((W X - R)^2) = 2 (W XX^T - RX^T) / (N d)
    const double g_scale = 2.0 / static_cast<double>(inputs.size());
    Tensor* params[] = {&probe.weight};
    AdamWState state = AdamWState::zeros_like(params);
    for (int s = 0; s < steps; ++s) {
      Tensor grad = mat::scale(mat::sub(mat::matmul(probe.weight, stats.xx), stats.rx), g_scale);
      const Tensor* grads[] = {&grad};
      adamw_step(params, grads, state, lr, adam);
      if (!probe.weight.all_finite()) {
        throw NonFiniteError("train_probe: probe " + std::to_string(probe.layer) +
                             " diverged at step " + std::to_string(s));
      }
    }
  }
  probe.final_loss = fit_loss(probe, inputs, targets);
  if (!std::isfinite(probe.final_loss)) {
    throw NonFiniteError("train_probe: non-finite loss for probe " + std::to_string(probe.layer));
  }
  probe.trained = true;
  return probe;
}

std::vector<LinearProbe> train_probes(const ActivationTrace& trace,
                                      const ProbeTrainConfig& config) {
  std::vector<LinearProbe> probes;
  probes.reserve(static_cast<std::size_t>(trace.layers));
  Tensor inputs = trace.stacked_state(0);
  for (int i = 1; i <= trace.layers; ++i) {
    Tensor targets = trace.stacked_state(i);
    LinearProbe p{i, ls_init(fit_statistics(inputs, targets), config.damping), false, 0.0};
    probes.push_back(train_probe(std::move(p), inputs, targets, config.steps, config.lr,
                                 config.adam));
    inputs = std::move(targets);
  }
  return probes;
}

}  // namespace ppcl
