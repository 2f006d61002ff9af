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

// Toy dual-stream (MMDiT-style) transformer.
//
// Tokens are laid out text first, then image: x is (n_txt + n_img) x d. Each
// block runs joint attention over the concatenated tokens with per-stream
// QKV/output projections, then a per-stream FFN. Both sub-layers are
// residual. Timestep conditioning is an additive shift after each
// LayerNorm: shift = modulation (.) gelu(t * w_t + b_t), where (w_t, b_t) is a
// model-level fixed projection.
//
// Layers are numbered 1..M; blocks()[i - 1] is layer i.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ppcl/autograd.h"
#include "ppcl/tensor.h"

namespace ppcl {

/// Closed layer range [first, last], 1-based.
struct Interval {
  int first = 0;
  int last = 0;

  int length() const { return last - first + 1; }
  bool contains(int layer) const { return layer >= first && layer <= last; }
  friend bool operator==(const Interval&, const Interval&) = default;
  friend auto operator<=>(const Interval&, const Interval&) = default;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelSpec {
  int layers = 12;
  int dim = 32;
  int heads = 4;
  int text_tokens = 8;
  int image_tokens = 16;
  int ffn_mult = 4;
  /// Planted redundant intervals. Layer `first` stays a normal layer; layers
  /// first+1..last are damped so one block initialized from `first` can stand
  /// in for the whole run.
  std::vector<Interval> planted{{3, 5}, {8, 9}};
  /// Damping of the first damped layer in each planted interval; each further
  /// layer in the run is damped by another factor of two.
  double epsilon = 0.01;
  /// Output projections of undamped layer i are scaled by depth_ramp^i.
  double depth_ramp = 1.15;
  /// Layers whose FFN is planted in GELU's near-linear regime.
  std::vector<int> linear_ffn_layers;
  std::uint64_t seed = 42;

  int tokens() const { return text_tokens + image_tokens; }
  int head_dim() const { return dim / heads; }
  /// Throws SpecError on violated invariants.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Row-major affine map: y = x * weight + bias, weight is in x out.
struct Linear {
  Tensor weight;
  Tensor bias;
};

struct NormAffine {
  Tensor gamma;
  Tensor beta;
};

struct FeedForward {
  Linear up;
  Linear down;
};

/// A complete stream: attention sub-layer plus FFN sub-layer. The FFN can be
/// replaced by a single d -> d projector.
struct FullStream {
  NormAffine attn_norm;
  Tensor attn_shift;
  Linear q, k, v, out;
  NormAffine ffn_norm;
  Tensor ffn_shift;
  std::variant<FeedForward, Linear> ffn;
};

/// Text stream whose parameters (except QKV) were replaced by two projectors:
/// z = z_proj(z of the preceding block), h = h_proj(text input of the block).
struct ProjectedText {
  Linear q, k, v;
  Linear z_proj;
  Linear h_proj;
};

struct Block {
  std::variant<FullStream, ProjectedText> text;
  FullStream image;
};

struct TimestepEmbedding {
  Tensor weight;
  Tensor bias;
};

class DualStreamModel {
 public:
  DualStreamModel() = default;
  DualStreamModel(ModelSpec spec, TimestepEmbedding embedding, std::vector<Block> blocks,
                  std::vector<Interval> spans);

  const ModelSpec& spec() const { return spec_; }
  const TimestepEmbedding& embedding() const { return embedding_; }
  TimestepEmbedding& embedding() { return embedding_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& blocks() { return blocks_; }
  /// Teacher layers each block stands for (a single layer for teacher blocks).
  const std::vector<Interval>& spans() const { return spans_; }

  const Block& layer(int i) const { return blocks_.at(static_cast<std::size_t>(i - 1)); }
  std::size_t depth() const { return blocks_.size(); }

 private:
  ModelSpec spec_;
  TimestepEmbedding embedding_;
  std::vector<Block> blocks_;
  std::vector<Interval> spans_;
};

// Parameter visiting. Names follow "<prefix>.text.q.weight" etc.; the same
// scheme is used by the container format.
template <typename Fn>
void visit_linear(const std::string& name, Linear& l, Fn&& fn) {
  fn(name + ".weight", l.weight);
  fn(name + ".bias", l.bias);
}
template <typename Fn>
void visit_linear(const std::string& name, const Linear& l, Fn&& fn) {
  fn(name + ".weight", l.weight);
  fn(name + ".bias", l.bias);
}

template <typename StreamT, typename Fn>
void visit_stream(const std::string& p, StreamT& s, Fn&& fn) {
  fn(p + ".attn_norm.gamma", s.attn_norm.gamma);
  fn(p + ".attn_norm.beta", s.attn_norm.beta);
  fn(p + ".attn_shift", s.attn_shift);
  visit_linear(p + ".q", s.q, fn);
  visit_linear(p + ".k", s.k, fn);
  visit_linear(p + ".v", s.v, fn);
  visit_linear(p + ".out", s.out, fn);
  fn(p + ".ffn_norm.gamma", s.ffn_norm.gamma);
  fn(p + ".ffn_norm.beta", s.ffn_norm.beta);
  fn(p + ".ffn_shift", s.ffn_shift);
  std::visit(
      [&](auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, FeedForward>) {
          visit_linear(p + ".ffn.up", f.up, fn);
          visit_linear(p + ".ffn.down", f.down, fn);
        } else {
          visit_linear(p + ".ffn_proj", f, fn);
        }
      },
      s.ffn);
}

template <typename BlockT, typename Fn>
void visit_block(const std::string& p, BlockT& b, Fn&& fn) {
  std::visit(
      [&](auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FullStream>) {
          visit_stream(p + ".text", t, fn);
        } else {
          visit_linear(p + ".text.q", t.q, fn);
          visit_linear(p + ".text.k", t.k, fn);
          visit_linear(p + ".text.v", t.v, fn);
          visit_linear(p + ".text.z_proj", t.z_proj, fn);
          visit_linear(p + ".text.h_proj", t.h_proj, fn);
        }
      },
      b.text);
  visit_stream(p + ".image", b.image, fn);
}

template <typename ModelT, typename Fn>
void visit_model(ModelT& m, Fn&& fn) {
  fn(std::string("embedding.weight"), m.embedding().weight);
  fn(std::string("embedding.bias"), m.embedding().bias);
  for (std::size_t i = 0; i < m.blocks().size(); ++i) {
    visit_block("block." + std::to_string(i + 1), m.blocks()[i], fn);
  }
}

std::vector<Tensor*> block_parameters(Block& b);
std::vector<Tensor*> model_parameters(DualStreamModel& m);

/// Exact count of scalar weights (biases, norms and modulation included).
std::int64_t param_count(const Block& b);
std::int64_t param_count(const DualStreamModel& m);

DualStreamModel build_teacher(const ModelSpec& spec);

/// Seeded Gaussian token batches crossed with a fixed list of timesteps.
/// Cells are enumerated sample-major: cell = sample * timesteps + t.
struct CalibrationSet {
  std::vector<Tensor> samples;
  std::vector<double> timesteps;

  static CalibrationSet generate(const ModelSpec& spec, std::size_t count,
                                 std::vector<double> timesteps, std::uint64_t seed);
  std::size_t cell_count() const { return samples.size() * timesteps.size(); }
  const Tensor& cell_input(std::size_t cell) const { return samples[cell / timesteps.size()]; }
  double cell_timestep(std::size_t cell) const { return timesteps[cell % timesteps.size()]; }
};

/// Activations recorded inside one block.
struct LayerRecord {
  Tensor z_text;   ///< modulated, normalized text features that feed QKV
  Tensor g_text;   ///< text features entering the FFN sub-layer
  Tensor g_image;  ///< image features entering the FFN sub-layer
  Tensor f_text;   ///< text FFN branch output
  Tensor f_image;  ///< image FFN branch output
};

struct CellTrace {
  double timestep = 0.0;
  /// states[0] is the model input; states[i] is layer i's output T_i.
  std::vector<Tensor> states;
  /// records[i - 1] belongs to layer i.
  std::vector<LayerRecord> records;
};

/// Per-layer, per-sample, per-timestep activations of a full teacher pass.
struct ActivationTrace {
  int layers = 0;
  int text_tokens = 0;
  std::vector<CellTrace> cells;

  std::size_t cell_count() const { return cells.size(); }
  const Tensor& state(int layer, std::size_t cell) const;
  const LayerRecord& record(int layer, std::size_t cell) const;
  Tensor text_output(int layer, std::size_t cell) const;
  Tensor image_output(int layer, std::size_t cell) const;
  /// All cells of layer i's output stacked along rows.
  Tensor stacked_state(int layer) const;
};

struct BlockActivations {
  Var out;
  Var z_text;
  Var g_text, g_image;
  Var f_text, f_image;
};

Var timestep_features(Tape& tape, const TimestepEmbedding& embedding, double t);

/// Records one block on the tape. prev_z_text is required when the text
/// stream is a ProjectedText.
BlockActivations forward_block(Tape& tape, const Block& block, const ModelSpec& spec, Var x,
                               Var temb, std::optional<Var> prev_z_text = std::nullopt);

/// Records the whole model; returns the final output.
Var forward_model(Tape& tape, const DualStreamModel& model, Var x, double t);

/// Inference on a single token batch.
Tensor run_model(const DualStreamModel& model, const Tensor& x, double t);
/// Runs a single block outside any training graph.
Tensor run_block(const Block& block, const ModelSpec& spec, const TimestepEmbedding& embedding,
                 const Tensor& x, double t, const Tensor* prev_z_text = nullptr);

struct ForwardResult {
  std::vector<Tensor> outputs;  ///< final output per cell
  std::optional<ActivationTrace> trace;
};

/// Runs every calibration cell; with record = true also returns the trace.
/// Recording requires every block to have full streams.
ForwardResult forward_model(const DualStreamModel& model, const CalibrationSet& data, bool record);

/// Output of every block on every cell: result[b][cell]. Works for any
/// assembled model (student blocks included).
std::vector<std::vector<Tensor>> block_outputs(const DualStreamModel& model,
                                               const CalibrationSet& data);

}  // namespace ppcl
