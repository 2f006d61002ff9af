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
// Student parts and their training.
//
// Depth parts: one block per interval [u, v], copied from teacher layer u and
// trained on the traced pair (T_{u-1}, T_v). Width parts: d -> d projectors
// replacing a surviving layer's text stream (except QKV) or its FFNs. Every
// part reads teacher traces only, so parts never see each other.
//
// Losses are means over all entries (feature-normalized outputs for the
// block-level terms).

#pragma once

#include <cstdint>
#include <vector>

#include "ppcl/model.h"
#include "ppcl/optim.h"
#include "ppcl/plan.h"

namespace ppcl {

struct DepthStudentPart {
  Interval span;
  Block block;
  std::vector<double> curve;  ///< full-data loss, recorded every eval_every steps
  double initial_loss = 0.0;
  double final_loss = 0.0;  ///< loss of the kept checkpoint
};

struct ProjectorPart {
  WidthKind kind = WidthKind::kFfn;
  int layer = 0;
  int source = 0;
  /// Text: z projector. FFN: image-stream projector.
  Linear first;
  /// Text: h projector. FFN: text-stream projector.
  Linear second;
  std::vector<double> curve;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainedParts {
  std::vector<DepthStudentPart> depth;
  std::vector<ProjectorPart> width;

  const DepthStudentPart* find_depth(Interval span) const;
  const ProjectorPart* find_width(WidthKind kind, int layer) const;
};

struct TrainConfig {
  int steps = 300;
  double lr = 1e-4;
  /// Calibration cells per step; 0 uses every cell.
  int batch_cells = 16;
  /// Loss is evaluated on the full trace this often (and at both ends). The
  /// trained part keeps the parameters of the lowest evaluated loss.
  int eval_every = 50;
  /// Cosine decay of lr to zero over the run.
  bool cosine = true;
  std::uint64_t seed = 42;
  AdamWConfig adam;
};

DepthStudentPart init_depth_part(const DualStreamModel& teacher, Interval span);

/// Mean over cells of mean((Norm(S(T_{u-1})) - Norm(T_v))^2).
double depth_loss(const DepthStudentPart& part, const DualStreamModel& teacher,
                  const ActivationTrace& trace);

DepthStudentPart depth_distill(DepthStudentPart part, const DualStreamModel& teacher,
                               const ActivationTrace& trace, const TrainConfig& config);

struct WidthSelection {
  int k_ffn = 3;
  int k_txt = 1;
  double text_cka_threshold = 0.999;
};

struct WidthCandidates {
  /// (layer, text-output cka against layer - 1), every eligible layer.
  std::vector<std::pair<int, double>> text_cka;
  /// (layer, linear-fit MSE of its FFNs), every eligible layer.
  std::vector<std::pair<int, double>> ffn_fit;
  std::vector<WidthTarget> targets;
};

/// R_txt: eligible survivors j (j - 1 also a survivor) whose text output has
/// cka >= threshold against layer j - 1, deepest first, at most k_txt, with
/// no two adjacent. R_ffn: the k_ffn remaining survivors whose FFNs are best
/// fit by an affine map (lowest MSE first). Throws when no layer survives
/// the depth plan.
WidthCandidates select_width_targets(const ActivationTrace& trace, const PruningPlan& depth_plan,
                                     const WidthSelection& selection = {});

/// Projectors initialized by an affine least-squares fit to the teacher
/// signals they replace.
ProjectorPart init_projector_part(const ActivationTrace& trace, const WidthTarget& target,
                                  const ModelSpec& spec);

/// Teacher layer j with the part's projectors swapped in.
Block projected_block(const DualStreamModel& teacher, const ProjectorPart& part);

struct WidthLoss {
  double width = 0.0;
  double linear = 0.0;
  double total() const { return width + linear; }
};

WidthLoss width_loss(const ProjectorPart& part, const DualStreamModel& teacher,
                     const ActivationTrace& trace);

/// Trains only the projectors on L_width + L_linear. FFN parts train
/// full-batch on cached teacher activations; text parts use batch_cells.
ProjectorPart width_distill(ProjectorPart part, const DualStreamModel& teacher,
                            const ActivationTrace& trace, const TrainConfig& config);

struct FineTuneConfig {
  int steps = 200;
  double lr = 1e-5;
  int batch_samples = 4;
  std::vector<double> timesteps{0.1, 0.4, 0.7, 1.0};
  std::uint64_t seed = 42;
  AdamWConfig adam;
};

struct FineTuneResult {
  DualStreamModel student;
  std::vector<double> curve;  ///< per-step batch loss
};

/// End-to-end MSE against the teacher on fresh seeded Gaussian batches; all
/// student parameters are trained.
FineTuneResult fine_tune(DualStreamModel student, const DualStreamModel& teacher,
                         const FineTuneConfig& config);

}  // namespace ppcl
