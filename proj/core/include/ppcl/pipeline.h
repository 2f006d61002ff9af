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
// End-to-end orchestration: probes, detection, depth and width distillation,
// assembly, fine-tuning and evaluation, plus the file-based stage commands the
// CLI exposes.
//
// Output directory layout (fixed names): teacher.ppcl, probes.ppcl,
// parts.ppcl, plan.json, report.json, student.ppcl, timing.json.
// report.json only holds seed-determined values; wall-clock measurements go
// to timing.json.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppcl/assembly.h"
#include "ppcl/detector.h"
#include "ppcl/distill.h"
#include "ppcl/model.h"
#include "ppcl/plan.h"
#include "ppcl/probes.h"

namespace ppcl {

/// A failure inside a named pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("stage " + stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageToggles {
  bool probes = true;
  bool detect = true;
  bool depth = true;
  bool width = true;
  bool fine_tune = true;

  /// "all" or "detect-only".
  static StageToggles parse(const std::string& preset);
};

struct RunConfig {
  std::uint64_t seed = 42;
  ModelSpec model;
  int train_samples = 64;
  int calib_samples = 32;
  std::vector<double> timesteps{0.1, 0.4, 0.7, 1.0};

  ProbeTrainConfig probes;
  double tau = 0.9;
  double theta = 0.999;
  int first_layer = 1;

  TrainConfig depth{300, 1e-4, 8, 50, true, 42, {}};
  TrainConfig width{150, 1e-4, 8, 50, true, 42, {}};
  WidthSelection width_selection;
  FineTuneConfig fine_tune;

  int latency_warmup = 3;
  int latency_runs = 20;

  StageToggles stages;
  std::filesystem::path out = "ppcl_out";
  bool force = false;

  /// Applies seed to the model and every stage seed. Call after overrides.
  void apply_seed(std::uint64_t s);
  /// Throws std::invalid_argument on non-positive step counts, rates, etc.
  void validate() const;
};

/// Missing keys keep defaults. "seed" at the top level seeds everything.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

CalibrationSet training_set(const RunConfig& c);
CalibrationSet calibration_set(const RunConfig& c);

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  int runs = 0;
};

/// Single-threaded forward latency over one calibration sample.
LatencyStats measure_latency(const DualStreamModel& model, const CalibrationSet& data,
                             int warmup, int runs);

struct EvalMetrics {
  double final_cka = 0.0;
  double mse = 0.0;
  /// Per student block: cka against the teacher layer its span ends at.
  std::vector<std::pair<Interval, double>> layer_cka;
  std::int64_t student_params = 0;
  std::int64_t teacher_params = 0;
};

/// Throws ShapeError when the two models disagree on token shapes.
EvalMetrics evaluate(const DualStreamModel& student, const DualStreamModel& teacher,
                     const CalibrationSet& calib);
nlohmann::json eval_to_json(const EvalMetrics& m);

nlohmann::json table_to_json(const CkaTable& table, int first_u);
nlohmann::json intervals_to_json(const IntervalSet& set);

struct PipelineResult {
  DualStreamModel teacher;
  std::vector<LinearProbe> probes;
  std::optional<Detection> detection;
  PruningPlan plan;
  TrainedParts parts;
  std::optional<DualStreamModel> student;
  nlohmann::json report;
  nlohmann::json timing;
};

/// Called after each completed stage with the partial result.
using StageHook = std::function<void(const PipelineResult&, const std::string& stage)>;

/// Runs every enabled stage in memory. Writes nothing itself.
PipelineResult run_pipeline(const RunConfig& config, const StageHook& on_stage = {});

/// run_pipeline plus all artifacts under config.out, written as stages
/// finish so a failed run leaves the earlier ones behind. Refuses to
/// overwrite existing artifacts unless config.force.
PipelineResult cmd_pipeline(const RunConfig& config);

// Stage commands over the output directory.
void cmd_probe_train(const RunConfig& config);
void cmd_detect(const RunConfig& config);
void cmd_depth_distill(const RunConfig& config);
void cmd_width_distill(const RunConfig& config);

struct AssembleOptions {
  std::filesystem::path plan;
  std::filesystem::path parts;
  std::filesystem::path teacher;
  std::filesystem::path output;
  /// Bind parts greedily until the assembly fits this many parameters.
  std::optional<std::int64_t> max_params;
};

/// Writes the student container and returns its parameter count.
std::int64_t cmd_assemble(const AssembleOptions& options);

nlohmann::json cmd_eval(const RunConfig& config, const std::filesystem::path& student,
                        const std::filesystem::path& teacher);

/// LP and LP-a over one CKA table, optionally a manual LP-b plan; each
/// interval set is depth-distilled and scored by final-output cka.
nlohmann::json compare_strategies(const RunConfig& config, const DualStreamModel& teacher,
                                  std::span<const LinearProbe> probes,
                                  const std::optional<PruningPlan>& manual);
nlohmann::json cmd_compare_strategies(const RunConfig& config,
                                      const std::optional<std::filesystem::path>& manual_plan);

}  // namespace ppcl
