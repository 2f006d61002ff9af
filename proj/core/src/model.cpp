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

#include "ppcl/model.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace ppcl {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kEmbeddingStd = 1.0;
// Up-projection shrink for near-linear FFN plants; the down weight (not its
// bias) is grown by the inverse so the branch keeps its scale.
constexpr double kLinearRegimeScale = 1e-3;

Tensor row(std::size_t d, double fill) { return Tensor::matrix(1, d, fill); }

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return Linear{Tensor::randn(in, out, rng, kInitStd), Tensor::randn(1, out, rng, kInitStd)};
}

void scale_linear(Linear& l, double s) {
  for (double& v : l.weight.values()) v *= s;
  for (double& v : l.bias.values()) v *= s;
}

FullStream make_stream(const ModelSpec& spec, std::mt19937_64& rng) {
  const auto d = static_cast<std::size_t>(spec.dim);
  const auto hidden = static_cast<std::size_t>(spec.dim * spec.ffn_mult);
  FullStream s;
  s.attn_norm = NormAffine{row(d, 1.0), row(d, 0.0)};
  s.attn_shift = Tensor::randn(1, d, rng, kInitStd);
  s.q = make_linear(d, d, rng);
  s.k = make_linear(d, d, rng);
  s.v = make_linear(d, d, rng);
  s.out = make_linear(d, d, rng);
  s.ffn_norm = NormAffine{row(d, 1.0), row(d, 0.0)};
  s.ffn_shift = Tensor::randn(1, d, rng, kInitStd);
  s.ffn = FeedForward{make_linear(d, hidden, rng), make_linear(hidden, d, rng)};
  return s;
}

// Output-projection scale of layer i: damped inside a planted run, otherwise
// the depth ramp.
double branch_scale(const ModelSpec& spec, int layer) {
  for (const Interval& p : spec.planted) {
    if (layer > p.first && layer <= p.last) {
      return spec.epsilon * std::pow(0.5, layer - p.first - 1);
    }
  }
  return std::pow(spec.depth_ramp, layer);
}

Var apply_linear(Tape& tape, const Linear& l, Var x) {
  return add(matmul(x, tape.param(l.weight)), tape.param(l.bias));
}

Var modulated_norm(Tape& tape, const NormAffine& norm, const Tensor& shift, Var x, Var temb) {
  Var y = mul(layer_norm(x), tape.param(norm.gamma));
  y = add(y, tape.param(norm.beta));
  return add(y, mul(tape.param(shift), temb));
}

Var feed_forward(Tape& tape, const std::variant<FeedForward, Linear>& ffn, Var g) {
  if (const auto* f = std::get_if<FeedForward>(&ffn)) {
    return apply_linear(tape, f->down, gelu(apply_linear(tape, f->up, g)));
  }
  return apply_linear(tape, std::get<Linear>(ffn), g);
}

// Scaled dot-product attention over all tokens. Heads are carved out of the
// feature axis by transposing so the split happens on rows.
Var joint_attention(Var q, Var k, Var v, int heads) {
  const std::size_t d = q.value().cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qt = transpose(q), kt = transpose(k), vt = transpose(v);
  std::vector<Var> heads_t;
  heads_t.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::size_t begin = static_cast<std::size_t>(h) * dh;
    Var qh = transpose(slice_rows(qt, begin, dh));
    Var kh_t = slice_rows(kt, begin, dh);
    Var vh = transpose(slice_rows(vt, begin, dh));
    Var attn = softmax_rows(scale(matmul(qh, kh_t), inv_sqrt));
    heads_t.push_back(transpose(matmul(attn, vh)));
  }
  return transpose(concat_rows(heads_t));
}

}  // namespace

void ModelSpec::validate() const {
  if (layers < 1) throw SpecError("ModelSpec: layers must be >= 1");
  if (dim < 1 || heads < 1) throw SpecError("ModelSpec: dim and heads must be >= 1");
  if (dim % heads != 0) {
    throw SpecError("ModelSpec: dim " + std::to_string(dim) + " not divisible by heads " +
                    std::to_string(heads));
  }
  if (text_tokens < 1 || image_tokens < 1) throw SpecError("ModelSpec: token counts must be >= 1");
  if (ffn_mult < 1) throw SpecError("ModelSpec: ffn_mult must be >= 1");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw SpecError("ModelSpec: epsilon must be >= 0");
  if (!(depth_ramp > 0.0) || !std::isfinite(depth_ramp)) {
    throw SpecError("ModelSpec: depth_ramp must be > 0");
  }
  int prev_last = 0;
  for (const Interval& p : planted) {
    if (p.first < 1 || p.last > layers) {
      throw SpecError("ModelSpec: planted interval [" + std::to_string(p.first) + "," +
                      std::to_string(p.last) + "] outside [1," + std::to_string(layers) + "]");
    }
    if (p.length() < 2) {
      throw SpecError("ModelSpec: planted interval [" + std::to_string(p.first) + "," +
                      std::to_string(p.last) + "] shorter than 2 layers");
    }
    if (p.first <= prev_last) throw SpecError("ModelSpec: planted intervals unsorted or overlapping");
    prev_last = p.last;
  }
  for (int l : linear_ffn_layers) {
    if (l < 1 || l > layers) throw SpecError("ModelSpec: linear_ffn layer out of range");
  }
}

DualStreamModel::DualStreamModel(ModelSpec spec, TimestepEmbedding embedding,
                                 std::vector<Block> blocks, std::vector<Interval> spans)
    : spec_(std::move(spec)),
      embedding_(std::move(embedding)),
      blocks_(std::move(blocks)),
      spans_(std::move(spans)) {
  if (spans_.size() != blocks_.size()) {
    throw SpecError("DualStreamModel: " + std::to_string(blocks_.size()) + " blocks but " +
                    std::to_string(spans_.size()) + " layer spans");
  }
}

std::vector<Tensor*> block_parameters(Block& b) {
  std::vector<Tensor*> out;
  visit_block("", b, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<Tensor*> model_parameters(DualStreamModel& m) {
  std::vector<Tensor*> out;
  visit_model(m, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::int64_t param_count(const Block& b) {
  std::int64_t n = 0;
  visit_block("", b, [&](const std::string&, const Tensor& t) {
    n += static_cast<std::int64_t>(t.size());
  });
  return n;
}

std::int64_t param_count(const DualStreamModel& m) {
  std::int64_t n = 0;
  visit_model(m, [&](const std::string&, const Tensor& t) {
    n += static_cast<std::int64_t>(t.size());
  });
  return n;
}

DualStreamModel build_teacher(const ModelSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto d = static_cast<std::size_t>(spec.dim);
  TimestepEmbedding emb{Tensor::randn(1, d, rng, kEmbeddingStd),
                        Tensor::randn(1, d, rng, kEmbeddingStd)};
  std::vector<Block> blocks;
  std::vector<Interval> spans;
  for (int i = 1; i <= spec.layers; ++i) {
    Block b{make_stream(spec, rng), make_stream(spec, rng)};
    const double s = branch_scale(spec, i);
    const bool linear_ffn = std::ranges::find(spec.linear_ffn_layers, i) !=
                            spec.linear_ffn_layers.end();
    for (FullStream* stream : {&std::get<FullStream>(b.text), &b.image}) {
      auto& ffn = std::get<FeedForward>(stream->ffn);
      if (linear_ffn) {
        scale_linear(ffn.up, kLinearRegimeScale);
        for (double& v : ffn.down.weight.values()) v /= kLinearRegimeScale;
      }
      scale_linear(stream->out, s);
      scale_linear(ffn.down, s);
    }
    blocks.push_back(std::move(b));
    spans.push_back({i, i});
  }
  return DualStreamModel(spec, std::move(emb), std::move(blocks), std::move(spans));
}

CalibrationSet CalibrationSet::generate(const ModelSpec& spec, std::size_t count,
                                        std::vector<double> timesteps, std::uint64_t seed) {
  if (timesteps.empty()) throw SpecError("CalibrationSet: at least one timestep required");
  std::mt19937_64 rng(seed);
  CalibrationSet set;
  set.timesteps = std::move(timesteps);
  set.samples.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    set.samples.push_back(Tensor::randn(static_cast<std::size_t>(spec.tokens()),
                                        static_cast<std::size_t>(spec.dim), rng, 1.0));
  }
  return set;
}

const Tensor& ActivationTrace::state(int layer, std::size_t cell) const {
  return cells.at(cell).states.at(static_cast<std::size_t>(layer));
}

const LayerRecord& ActivationTrace::record(int layer, std::size_t cell) const {
  return cells.at(cell).records.at(static_cast<std::size_t>(layer - 1));
}

Tensor ActivationTrace::text_output(int layer, std::size_t cell) const {
  return mat::row_slice(state(layer, cell), 0, static_cast<std::size_t>(text_tokens));
}

Tensor ActivationTrace::image_output(int layer, std::size_t cell) const {
  const Tensor& s = state(layer, cell);
  return mat::row_slice(s, static_cast<std::size_t>(text_tokens),
                        s.rows() - static_cast<std::size_t>(text_tokens));
}

Tensor ActivationTrace::stacked_state(int layer) const {
  std::vector<Tensor> parts;
  parts.reserve(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) parts.push_back(state(layer, c));
  return mat::vstack(parts);
}

Var timestep_features(Tape& tape, const TimestepEmbedding& embedding, double t) {
  return gelu(add(scale(tape.param(embedding.weight), t), tape.param(embedding.bias)));
}

BlockActivations forward_block(Tape& tape, const Block& block, const ModelSpec& spec, Var x,
                               Var temb, std::optional<Var> prev_z_text) {
  const auto nt = static_cast<std::size_t>(spec.text_tokens);
  const std::size_t n = x.value().rows();
  if (x.value().cols() != static_cast<std::size_t>(spec.dim) || n <= nt) {
    throw ShapeError("forward_block: input " + x.value().shape_string() + " does not match dim " +
                     std::to_string(spec.dim) + " with " + std::to_string(nt) + " text tokens");
  }
  Var x_text = slice_rows(x, 0, nt);
  Var x_image = slice_rows(x, nt, n - nt);
  const FullStream& img = block.image;

  BlockActivations acts;
  Var q_text, k_text, v_text;
  if (const auto* full = std::get_if<FullStream>(&block.text)) {
    acts.z_text = modulated_norm(tape, full->attn_norm, full->attn_shift, x_text, temb);
    q_text = apply_linear(tape, full->q, acts.z_text);
    k_text = apply_linear(tape, full->k, acts.z_text);
    v_text = apply_linear(tape, full->v, acts.z_text);
  } else {
    const auto& proj = std::get<ProjectedText>(block.text);
    if (!prev_z_text) {
      throw ShapeError("forward_block: projected text stream needs the preceding block's z");
    }
    acts.z_text = apply_linear(tape, proj.z_proj, *prev_z_text);
    q_text = apply_linear(tape, proj.q, acts.z_text);
    k_text = apply_linear(tape, proj.k, acts.z_text);
    v_text = apply_linear(tape, proj.v, acts.z_text);
  }
  Var z_image = modulated_norm(tape, img.attn_norm, img.attn_shift, x_image, temb);
  const Var qs[] = {q_text, apply_linear(tape, img.q, z_image)};
  const Var ks[] = {k_text, apply_linear(tape, img.k, z_image)};
  const Var vs[] = {v_text, apply_linear(tape, img.v, z_image)};
  Var attn = joint_attention(concat_rows(qs), concat_rows(ks), concat_rows(vs), spec.heads);

  auto finish_stream = [&](const FullStream& s, Var residual, Var attn_rows, Var& g, Var& f) {
    Var h = add(residual, apply_linear(tape, s.out, attn_rows));
    g = modulated_norm(tape, s.ffn_norm, s.ffn_shift, h, temb);
    f = feed_forward(tape, s.ffn, g);
    return add(h, f);
  };

  Var h_text;
  if (const auto* full = std::get_if<FullStream>(&block.text)) {
    h_text = finish_stream(*full, x_text, slice_rows(attn, 0, nt), acts.g_text, acts.f_text);
  } else {
    h_text = apply_linear(tape, std::get<ProjectedText>(block.text).h_proj, x_text);
  }
  Var h_image = finish_stream(img, x_image, slice_rows(attn, nt, n - nt), acts.g_image, acts.f_image);
  const Var outs[] = {h_text, h_image};
  acts.out = concat_rows(outs);
  return acts;
}

Var forward_model(Tape& tape, const DualStreamModel& model, Var x, double t) {
  Var temb = timestep_features(tape, model.embedding(), t);
  std::optional<Var> prev_z;
  for (const Block& b : model.blocks()) {
    BlockActivations a = forward_block(tape, b, model.spec(), x, temb, prev_z);
    x = a.out;
    prev_z = a.z_text;
  }
  return x;
}

Tensor run_model(const DualStreamModel& model, const Tensor& x, double t) {
  Tape tape(false);
  return forward_model(tape, model, tape.constant(x), t).value();
}

Tensor run_block(const Block& block, const ModelSpec& spec, const TimestepEmbedding& embedding,
                 const Tensor& x, double t, const Tensor* prev_z_text) {
  Tape tape(false);
  std::optional<Var> prev;
  if (prev_z_text) prev = tape.constant(*prev_z_text);
  return forward_block(tape, block, spec, tape.constant(x), timestep_features(tape, embedding, t),
                       prev)
      .out.value();
}

ForwardResult forward_model(const DualStreamModel& model, const CalibrationSet& data, bool record) {
  ForwardResult result;
  const std::size_t cells = data.cell_count();
  result.outputs.reserve(cells);
  if (record) {
    for (const Block& b : model.blocks()) {
      if (!std::holds_alternative<FullStream>(b.text) ||
          !std::holds_alternative<FeedForward>(b.image.ffn) ||
          !std::holds_alternative<FeedForward>(std::get<FullStream>(b.text).ffn)) {
        throw ShapeError("forward_model: tracing requires unreplaced blocks");
      }
    }
    result.trace = ActivationTrace{static_cast<int>(model.depth()), model.spec().text_tokens, {}};
    result.trace->cells.reserve(cells);
  }
  for (std::size_t c = 0; c < cells; ++c) {
    const Tensor& input = data.cell_input(c);
    if (input.cols() != static_cast<std::size_t>(model.spec().dim) ||
        input.rows() != static_cast<std::size_t>(model.spec().tokens())) {
      throw ShapeError("forward_model: sample " + input.shape_string() + " does not match the model dims");
    }
    const double t = data.cell_timestep(c);
    Tape tape(false);
    Var temb = timestep_features(tape, model.embedding(), t);
    Var x = tape.constant(input);
    CellTrace cell;
    if (record) {
      cell.timestep = t;
      cell.states.reserve(model.depth() + 1);
      cell.records.reserve(model.depth());
      cell.states.push_back(input);
    }
    std::optional<Var> prev_z;
    for (const Block& b : model.blocks()) {
      BlockActivations a = forward_block(tape, b, model.spec(), x, temb, prev_z);
      x = a.out;
      prev_z = a.z_text;
      if (record) {
        cell.states.push_back(a.out.value());
        cell.records.push_back(LayerRecord{a.z_text.value(), a.g_text.value(), a.g_image.value(),
                                           a.f_text.value(), a.f_image.value()});
      }
    }
    result.outputs.push_back(x.value());
    if (record) result.trace->cells.push_back(std::move(cell));
  }
  return result;
}

std::vector<std::vector<Tensor>> block_outputs(const DualStreamModel& model,
                                               const CalibrationSet& data) {
  std::vector<std::vector<Tensor>> out(model.depth());
  for (auto& b : out) b.reserve(data.cell_count());
  for (std::size_t c = 0; c < data.cell_count(); ++c) {
    Tape tape(false);
    Var temb = timestep_features(tape, model.embedding(), data.cell_timestep(c));
    Var x = tape.constant(data.cell_input(c));
    std::optional<Var> prev_z;
    for (std::size_t b = 0; b < model.depth(); ++b) {
      BlockActivations a = forward_block(tape, model.blocks()[b], model.spec(), x, temb, prev_z);
      x = a.out;
      prev_z = a.z_text;
      out[b].push_back(x.value());
    }
  }
  return out;
}

}  // namespace ppcl
