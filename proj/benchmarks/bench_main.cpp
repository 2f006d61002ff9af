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
#include <benchmark/benchmark.h>

#include <random>

#include "ppcl/cka.h"
#include "ppcl/detector.h"
#include "ppcl/model.h"
#include "ppcl/probes.h"

namespace {

using namespace ppcl;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = Tensor::randn(n, n, rng), b = Tensor::randn(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mat::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_BlockForward(benchmark::State& state) {
  const ModelSpec spec;
  const DualStreamModel m = build_teacher(spec);
  std::mt19937_64 rng(2);
  const Tensor x = Tensor::randn(static_cast<std::size_t>(spec.tokens()), 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(run_block(m.layer(1), spec, m.embedding(), x, 0.5));
}
BENCHMARK(BM_BlockForward);

void BM_BlockForwardBackward(benchmark::State& state) {
  const ModelSpec spec;
  DualStreamModel m = build_teacher(spec);
  std::mt19937_64 rng(3);
  const Tensor x = Tensor::randn(static_cast<std::size_t>(spec.tokens()), 32, rng);
  const Tensor y = Tensor::randn(static_cast<std::size_t>(spec.tokens()), 32, rng);
  Block& block = m.blocks()[0];
  const std::vector<Tensor*> params = block_parameters(block);
  for (auto _ : state) {
    Tape tape;
    tape.add_trainable_all(params);
    Var temb = timestep_features(tape, m.embedding(), 0.5);
    Var out = forward_block(tape, block, spec, tape.constant(x), temb).out;
    tape.backward(mse(out, tape.constant(y)));
    benchmark::DoNotOptimize(tape.gradient(*params.front()));
  }
}
BENCHMARK(BM_BlockForwardBackward);

void BM_ModelForward(benchmark::State& state) {
  const ModelSpec spec;
  const DualStreamModel m = build_teacher(spec);
  std::mt19937_64 rng(4);
  const Tensor x = Tensor::randn(static_cast<std::size_t>(spec.tokens()), 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(run_model(m, x, 0.5));
}
BENCHMARK(BM_ModelForward);

void BM_Cka(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  const Tensor x = Tensor::randn(n, 32, rng), y = Tensor::randn(n, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cka(x, y));
}
BENCHMARK(BM_Cka)->Arg(24)->Arg(96)->Arg(384);

void BM_LsInit(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const Tensor x = Tensor::randn(4096, 32, rng), y = Tensor::randn(4096, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ls_init(fit_statistics(x, y)));
}
BENCHMARK(BM_LsInit);

void BM_DetectDefaultToy(benchmark::State& state) {
  const ModelSpec spec;
  const DualStreamModel m = build_teacher(spec);
  const auto train = *forward_model(m, CalibrationSet::generate(spec, 16, {0.1, 0.4, 0.7, 1.0}, 43), true).trace;
  const auto calib = *forward_model(m, CalibrationSet::generate(spec, 8, {0.1, 0.4, 0.7, 1.0}, 44), true).trace;
  ProbeTrainConfig cfg;
  cfg.steps = 50;
  const auto probes = train_probes(train, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(detect_intervals(m, calib, probes));
}
BENCHMARK(BM_DetectDefaultToy)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
