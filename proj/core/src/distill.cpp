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
#include "ppcl/distill.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ppcl/cka.h"
#include "ppcl/probes.h"

namespace ppcl {

namespace {

// Deterministic subset of cell indices: a Fisher-Yates prefix driven by raw
// engine output, so it does not depend on distribution implementations.
std::vector<std::size_t> sample_cells(std::mt19937_64& rng, std::size_t total, int batch) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  if (batch <= 0 || static_cast<std::size_t>(batch) >= total) return idx;
  const auto take = static_cast<std::size_t>(batch);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double scheduled_lr(const TrainConfig& c, int step) {
  if (!c.cosine || c.steps <= 0) return c.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(c.steps);
  return c.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void check_config(const TrainConfig& c, const char* what) {
  if (c.steps < 0 || !(c.lr >= 0.0) || c.eval_every < 1) {
    throw std::invalid_argument(std::string(what) +
                                ": steps >= 0, lr >= 0 and eval_every >= 1 required");
  }
}

void check_finite_loss(double loss, const std::string& what, int step) {
  if (!std::isfinite(loss)) {
    throw NonFiniteError(what + ": non-finite loss at step " + std::to_string(step));
  }
}

std::uint64_t part_seed(std::uint64_t seed, int a, int b) {
  return seed ^ (static_cast<std::uint64_t>(a) * 0x9E3779B97F4A7C15ULL) ^
         (static_cast<std::uint64_t>(b) * 0xC2B2AE3D27D4EB4FULL);
}

Var normalized_mse(Var out, const Tensor& target) {
  Tape& t = out.tape();
  return mse(l2_normalize_rows(out), l2_normalize_rows(t.constant(target)));
}

// Loss of one depth part on the given cells, recorded on tape.
Var depth_batch_loss(Tape& tape, const DepthStudentPart& part, const DualStreamModel& teacher,
                     const ActivationTrace& trace, std::span<const std::size_t> cells) {
  const auto& spec = teacher.spec();
  std::vector<Var> terms;
  terms.reserve(cells.size());
  for (std::size_t c : cells) {
    Var temb = timestep_features(tape, teacher.embedding(), trace.cells[c].timestep);
    Var out = forward_block(tape, part.block, spec,
                            tape.constant(trace.state(part.span.first - 1, c)), temb)
                  .out;
    terms.push_back(normalized_mse(out, trace.state(part.span.last, c)));
  }
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

struct WidthTerms {
  Var width;
  Var linear;
};

WidthTerms width_batch_loss(Tape& tape, const Block& block, const ProjectorPart& part,
                            const DualStreamModel& teacher, const ActivationTrace& trace,
                            std::span<const std::size_t> cells) {
  const auto& spec = teacher.spec();
  const auto nt = static_cast<std::size_t>(spec.text_tokens);
  const std::size_t ni = static_cast<std::size_t>(spec.image_tokens);
  std::vector<Var> widths, linears;
  for (std::size_t c : cells) {
    Var temb = timestep_features(tape, teacher.embedding(), trace.cells[c].timestep);
    std::optional<Var> prev_z;
    if (part.kind == WidthKind::kText) prev_z = tape.constant(trace.record(part.source, c).z_text);
    BlockActivations a = forward_block(tape, block, spec,
                                       tape.constant(trace.state(part.layer - 1, c)), temb, prev_z);
    widths.push_back(normalized_mse(a.out, trace.state(part.layer, c)));
    Var text_out = slice_rows(a.out, 0, nt);
    Var lin = mse(text_out, tape.constant(trace.text_output(part.layer, c)));
    if (part.kind == WidthKind::kText) {
      lin = add(lin, mse(a.z_text, tape.constant(trace.record(part.layer, c).z_text)));
    } else {
      lin = add(lin, mse(slice_rows(a.out, nt, ni),
                         tape.constant(trace.image_output(part.layer, c))));
    }
    linears.push_back(lin);
  }
  auto mean = [](const std::vector<Var>& v) {
    Var total = v.front();
    for (std::size_t i = 1; i < v.size(); ++i) total = add(total, v[i]);
    return scale(total, 1.0 / static_cast<double>(v.size()));
  };
  return {mean(widths), mean(linears)};
}

std::vector<std::size_t> all_cells(const ActivationTrace& trace) {
  std::vector<std::size_t> idx(trace.cell_count());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

void check_trace(const DualStreamModel& teacher, const ActivationTrace& trace, const char* what) {
  if (trace.layers != static_cast<int>(teacher.depth()) || trace.cell_count() == 0) {
    throw ShapeError(std::string(what) + ": trace does not match the teacher or is empty");
  }
}

}  // namespace

const DepthStudentPart* TrainedParts::find_depth(Interval span) const {
  for (const auto& p : depth) {
    if (p.span == span) return &p;
  }
  return nullptr;
}

const ProjectorPart* TrainedParts::find_width(WidthKind kind, int layer) const {
  for (const auto& p : width) {
    if (p.kind == kind && p.layer == layer) return &p;
  }
  return nullptr;
}

DepthStudentPart init_depth_part(const DualStreamModel& teacher, Interval span) {
  if (span.first < 1 || span.last > static_cast<int>(teacher.depth()) || span.last <= span.first) {
    throw std::out_of_range("init_depth_part: interval [" + std::to_string(span.first) + "," +
                            std::to_string(span.last) + "] is not a valid teacher range");
  }
  return DepthStudentPart{span, teacher.layer(span.first), {}, 0.0, 0.0};
}

double depth_loss(const DepthStudentPart& part, const DualStreamModel& teacher,
                  const ActivationTrace& trace) {
  check_trace(teacher, trace, "depth_loss");
  Tape tape(false);
  const auto cells = all_cells(trace);
  return scalar(depth_batch_loss(tape, part, teacher, trace, cells));
}

DepthStudentPart depth_distill(DepthStudentPart part, const DualStreamModel& teacher,
                               const ActivationTrace& trace, const TrainConfig& config) {
  check_config(config, "depth_distill");
  check_trace(teacher, trace, "depth_distill");
  const std::string what = "depth_distill [" + std::to_string(part.span.first) + "," +
                           std::to_string(part.span.last) + "]";
  part.curve.clear();
  part.initial_loss = depth_loss(part, teacher, trace);
  check_finite_loss(part.initial_loss, what, 0);
  part.curve.push_back(part.initial_loss);
  std::mt19937_64 rng(part_seed(config.seed, part.span.first, part.span.last));
  std::vector<Tensor*> params = block_parameters(part.block);
  AdamWState state = AdamWState::zeros_like(params);
  Block best = part.block;
  double best_loss = part.initial_loss;
  auto checkpoint = [&](int step) {
    const double l = depth_loss(part, teacher, trace);
    check_finite_loss(l, what, step);
    part.curve.push_back(l);
    if (l < best_loss) best = part.block, best_loss = l;
  };
  for (int step = 0; step < config.steps; ++step) {
    const auto cells = sample_cells(rng, trace.cell_count(), config.batch_cells);
    Tape tape(true);
    tape.add_trainable_all(params);
    Var loss = depth_batch_loss(tape, part, teacher, trace, cells);
    check_finite_loss(scalar(loss), what, step);
    tape.backward(loss);
    adamw_step(params, tape, state, scheduled_lr(config, step), config.adam);
    if ((step + 1) % config.eval_every == 0 || step + 1 == config.steps) checkpoint(step + 1);
  }
  part.block = std::move(best);
  part.final_loss = best_loss;
  return part;
}

namespace {

Tensor stack_cells(const ActivationTrace& trace, auto&& pick) {
  std::vector<Tensor> parts;
  parts.reserve(trace.cell_count());
  for (std::size_t c = 0; c < trace.cell_count(); ++c) parts.push_back(pick(c));
  return mat::vstack(parts);
}

double ffn_fit_mse(const ActivationTrace& trace, int layer) {
  const Tensor gt = stack_cells(trace, [&](std::size_t c) { return trace.record(layer, c).g_text; });
  const Tensor ft = stack_cells(trace, [&](std::size_t c) { return trace.record(layer, c).f_text; });
  const Tensor gi = stack_cells(trace, [&](std::size_t c) { return trace.record(layer, c).g_image; });
  const Tensor fi = stack_cells(trace, [&](std::size_t c) { return trace.record(layer, c).f_image; });
  const double text = affine_mse(fit_affine(gt, ft), gt, ft);
  const double image = affine_mse(fit_affine(gi, fi), gi, fi);
  return (text * static_cast<double>(ft.size()) + image * static_cast<double>(fi.size())) /
         static_cast<double>(ft.size() + fi.size());
}

}  // namespace

WidthCandidates select_width_targets(const ActivationTrace& trace, const PruningPlan& depth_plan,
                                     const WidthSelection& selection) {
  if (selection.k_ffn < 0 || selection.k_txt < 0) {
    throw std::invalid_argument("select_width_targets: k_ffn and k_txt must be >= 0");
  }
  if (trace.layers != depth_plan.spec.layers) {
    throw ShapeError("select_width_targets: trace depth differs from the plan");
  }
  const std::vector<int> alive = depth_plan.survivors();
  if (alive.empty()) throw std::invalid_argument("select_width_targets: no surviving layers");
  auto survives = [&](int l) { return std::ranges::binary_search(alive, l); };

  WidthCandidates out;
  for (int j : alive) {
    if (j < 2 || !survives(j - 1)) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < trace.cell_count(); ++c) {
      total += cka(trace.text_output(j, c), trace.text_output(j - 1, c));
    }
    out.text_cka.emplace_back(j, total / static_cast<double>(trace.cell_count()));
  }
  std::vector<int> text;
  for (auto it = out.text_cka.rbegin(); it != out.text_cka.rend(); ++it) {
    if (static_cast<int>(text.size()) >= selection.k_txt) break;
    const int j = it->first;
    if (it->second < selection.text_cka_threshold) continue;
    if (std::ranges::find(text, j + 1) != text.end()) continue;
    text.push_back(j);
  }
  for (int j : alive) {
    if (std::ranges::find(text, j) != text.end()) continue;
    out.ffn_fit.emplace_back(j, ffn_fit_mse(trace, j));
  }
  std::vector<std::pair<int, double>> ranked = out.ffn_fit;
  std::ranges::stable_sort(ranked, [](const auto& a, const auto& b) { return a.second < b.second; });
  for (int j : text) out.targets.push_back({WidthKind::kText, j, j - 1, Binding::kStudent});
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < selection.k_ffn; ++i) {
    out.targets.push_back({WidthKind::kFfn, ranked[i].first, 0, Binding::kStudent});
  }
  std::ranges::sort(out.targets, [](const WidthTarget& a, const WidthTarget& b) {
    return a.layer < b.layer;
  });
  return out;
}

ProjectorPart init_projector_part(const ActivationTrace& trace, const WidthTarget& target,
                                  const ModelSpec& spec) {
  if (target.layer < 1 || target.layer > trace.layers) {
    throw std::out_of_range("init_projector_part: layer " + std::to_string(target.layer));
  }
  ProjectorPart part;
  part.kind = target.kind;
  part.layer = target.layer;
  part.source = target.source;
  const int j = target.layer;
  if (target.kind == WidthKind::kText) {
    if (target.source != j - 1 || target.source < 1) {
      throw std::invalid_argument("init_projector_part: text target " + std::to_string(j) +
                                  " must read from layer " + std::to_string(j - 1));
    }
    const Tensor z_in = stack_cells(trace, [&](std::size_t c) { return trace.record(j - 1, c).z_text; });
    const Tensor z_out = stack_cells(trace, [&](std::size_t c) { return trace.record(j, c).z_text; });
    const Tensor h_in = stack_cells(trace, [&](std::size_t c) { return trace.text_output(j - 1, c); });
    const Tensor h_out = stack_cells(trace, [&](std::size_t c) { return trace.text_output(j, c); });
    part.first = fit_affine(z_in, z_out);
    part.second = fit_affine(h_in, h_out);
  } else {
    const Tensor gi = stack_cells(trace, [&](std::size_t c) { return trace.record(j, c).g_image; });
    const Tensor fi = stack_cells(trace, [&](std::size_t c) { return trace.record(j, c).f_image; });
    const Tensor gt = stack_cells(trace, [&](std::size_t c) { return trace.record(j, c).g_text; });
    const Tensor ft = stack_cells(trace, [&](std::size_t c) { return trace.record(j, c).f_text; });
    part.first = fit_affine(gi, fi);
    part.second = fit_affine(gt, ft);
  }
  if (part.first.weight.rows() != static_cast<std::size_t>(spec.dim)) {
    throw ShapeError("init_projector_part: projector width does not match the model");
  }
  return part;
}

Block projected_block(const DualStreamModel& teacher, const ProjectorPart& part) {
  Block b = teacher.layer(part.layer);
  if (part.kind == WidthKind::kText) {
    const auto* full = std::get_if<FullStream>(&b.text);
    if (!full) throw std::invalid_argument("projected_block: text stream already replaced");
    b.text = ProjectedText{full->q, full->k, full->v, part.first, part.second};
  } else {
    auto* full = std::get_if<FullStream>(&b.text);
    if (!full) throw std::invalid_argument("projected_block: text stream already replaced");
    full->ffn = part.second;
    b.image.ffn = part.first;
  }
  return b;
}

WidthLoss width_loss(const ProjectorPart& part, const DualStreamModel& teacher,
                     const ActivationTrace& trace) {
  check_trace(teacher, trace, "width_loss");
  Tape tape(false);
  const Block block = projected_block(teacher, part);
  const auto cells = all_cells(trace);
  const WidthTerms t = width_batch_loss(tape, block, part, teacher, trace, cells);
  return {scalar(t.width), scalar(t.linear)};
}

namespace {

// FFN parts leave everything before the FFN untouched, so each stream's
// output is (attention residual) + projector(g) with both terms fixed by the
// teacher trace. Stacking all cells turns a full-batch step into a few
// matrix products.
struct FfnCache {
  Tensor g_text, g_image;
  Tensor h_text, h_image;    ///< stream outputs minus the FFN branch
  Tensor t_text, t_image;    ///< teacher stream outputs
};

FfnCache build_ffn_cache(const ActivationTrace& trace, int j) {
  FfnCache c;
  c.g_text = stack_cells(trace, [&](std::size_t i) { return trace.record(j, i).g_text; });
  c.g_image = stack_cells(trace, [&](std::size_t i) { return trace.record(j, i).g_image; });
  c.t_text = stack_cells(trace, [&](std::size_t i) { return trace.text_output(j, i); });
  c.t_image = stack_cells(trace, [&](std::size_t i) { return trace.image_output(j, i); });
  c.h_text = mat::sub(c.t_text,
                      stack_cells(trace, [&](std::size_t i) { return trace.record(j, i).f_text; }));
  c.h_image = mat::sub(
      c.t_image, stack_cells(trace, [&](std::size_t i) { return trace.record(j, i).f_image; }));
  return c;
}

WidthTerms ffn_cached_loss(Tape& tape, const FfnCache& c, const Linear& image, const Linear& text) {
  auto affine = [&](const Linear& l, const Tensor& x) {
    return add(matmul(tape.constant(x), tape.param(l.weight)), tape.param(l.bias));
  };
  Var out_text = add(tape.constant(c.h_text), affine(text, c.g_text));
  Var out_image = add(tape.constant(c.h_image), affine(image, c.g_image));
  const double nt = static_cast<double>(c.t_text.size());
  const double ni = static_cast<double>(c.t_image.size());
  // Every cell has the same token count, so the mean over cells of per-cell
  // means is the mean over all stacked rows.
  Var width_text = normalized_mse(out_text, c.t_text);
  Var width_image = normalized_mse(out_image, c.t_image);
  Var width = add(scale(width_text, nt / (nt + ni)), scale(width_image, ni / (nt + ni)));
  Var linear = add(mse(out_text, tape.constant(c.t_text)), mse(out_image, tape.constant(c.t_image)));
  return {width, linear};
}

}  // namespace

ProjectorPart width_distill(ProjectorPart part, const DualStreamModel& teacher,
                            const ActivationTrace& trace, const TrainConfig& config) {
  check_config(config, "width_distill");
  check_trace(teacher, trace, "width_distill");
  const std::string what = "width_distill " + std::string(width_kind_name(part.kind)) + " " +
                           std::to_string(part.layer);
  part.curve.clear();
  part.initial_loss = width_loss(part, teacher, trace).total();
  check_finite_loss(part.initial_loss, what, 0);
  part.curve.push_back(part.initial_loss);
  std::mt19937_64 rng(part_seed(config.seed, static_cast<int>(part.kind) + 1000, part.layer));
  // The block holds copies of the projectors; they are trained in place and
  // copied back at the end.
  Block block = projected_block(teacher, part);
  Linear* first = nullptr;
  Linear* second = nullptr;
  if (part.kind == WidthKind::kText) {
    auto& t = std::get<ProjectedText>(block.text);
    first = &t.z_proj;
    second = &t.h_proj;
  } else {
    first = &std::get<Linear>(block.image.ffn);
    second = &std::get<Linear>(std::get<FullStream>(block.text).ffn);
  }
  std::vector<Tensor*> params{&first->weight, &first->bias, &second->weight, &second->bias};
  AdamWState state = AdamWState::zeros_like(params);
  Linear best_first = part.first;
  Linear best_second = part.second;
  double best_loss = part.initial_loss;
  auto checkpoint = [&](int step) {
    part.first = *first;
    part.second = *second;
    const double l = width_loss(part, teacher, trace).total();
    check_finite_loss(l, what, step);
    part.curve.push_back(l);
    if (l < best_loss) best_first = part.first, best_second = part.second, best_loss = l;
  };
  std::optional<FfnCache> cache;
  if (part.kind == WidthKind::kFfn) cache = build_ffn_cache(trace, part.layer);
  for (int step = 0; step < config.steps; ++step) {
    Tape tape(true);
    tape.add_trainable_all(params);
    WidthTerms t;
    if (cache) {
      t = ffn_cached_loss(tape, *cache, *first, *second);
    } else {
      const auto cells = sample_cells(rng, trace.cell_count(), config.batch_cells);
      t = width_batch_loss(tape, block, part, teacher, trace, cells);
    }
    Var loss = add(t.width, t.linear);
    check_finite_loss(scalar(loss), what, step);
    tape.backward(loss);
    adamw_step(params, tape, state, scheduled_lr(config, step), config.adam);
    if ((step + 1) % config.eval_every == 0 || step + 1 == config.steps) checkpoint(step + 1);
  }
  part.first = std::move(best_first);
  part.second = std::move(best_second);
  part.final_loss = best_loss;
  return part;
}

FineTuneResult fine_tune(DualStreamModel student, const DualStreamModel& teacher,
                         const FineTuneConfig& config) {
  if (config.steps < 0 || config.batch_samples < 1 || config.timesteps.empty() ||
      !(config.lr >= 0.0)) {
    throw std::invalid_argument("fine_tune: steps >= 0, batch >= 1, lr >= 0 and timesteps required");
  }
  if (!(student.spec().dim == teacher.spec().dim &&
        student.spec().tokens() == teacher.spec().tokens() &&
        student.spec().text_tokens == teacher.spec().text_tokens)) {
    throw ShapeError("fine_tune: student and teacher token shapes differ");
  }
  FineTuneResult result{std::move(student), {}};
  std::vector<Tensor*> params = model_parameters(result.student);
  AdamWState state = AdamWState::zeros_like(params);
  std::mt19937_64 rng(config.seed);
  const auto rows = static_cast<std::size_t>(teacher.spec().tokens());
  const auto cols = static_cast<std::size_t>(teacher.spec().dim);
  for (int step = 0; step < config.steps; ++step) {
    Tape tape(true);
    tape.add_trainable_all(params);
    std::vector<Var> terms;
    for (int b = 0; b < config.batch_samples; ++b) {
      const Tensor x = Tensor::randn(rows, cols, rng, 1.0);
      const double t = config.timesteps[rng() % config.timesteps.size()];
      const Tensor target = run_model(teacher, x, t);
      terms.push_back(mse(forward_model(tape, result.student, tape.constant(x), t),
                          tape.constant(target)));
    }
    Var loss = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) loss = add(loss, terms[i]);
    loss = scale(loss, 1.0 / static_cast<double>(terms.size()));
    const double value = scalar(loss);
    check_finite_loss(value, "fine_tune", step);
    result.curve.push_back(value);
    tape.backward(loss);
    adamw_step(params, tape, state, config.lr, config.adam);
  }
  return result;
}

}  // namespace ppcl
