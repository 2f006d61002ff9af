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

// Reverse-mode differentiation over a recorded tape of rank-2 kernels.
//
// A Tape owns every intermediate value produced while it is alive. Leaves are
// either constants or parameters; a parameter only receives a gradient if it
// was registered as trainable on the tape before it was first bound. The tape
// is consumed by backward(): a second call throws.
//
// Kernel set: matmul, add, scale, mul (elementwise), transpose, concat_rows /
// slice_rows (token axis), layer_norm, softmax_rows, gelu, l2_normalize_rows,
// mse and sum. add and mul also accept a 1 x cols right operand, which is
// broadcast across rows (biases, norm affines, modulation shifts).

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ppcl/tensor.h"

namespace ppcl {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  /// With record == false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);

  /// Binds a parameter tensor as a leaf. The same address always maps to the
  /// same leaf, so gradients from every use are summed.
  Var param(const Tensor& p);

  void add_trainable(const Tensor& p);
  template <typename Range>
  void add_trainable_all(const Range& params) {
    for (const Tensor* p : params) add_trainable(*p);
  }

  void backward(Var loss);
  bool consumed() const { return consumed_; }

  /// Gradient accumulated for a trainable parameter; nullptr when the
  /// parameter never reached the loss.
  const Tensor* gradient(const Tensor& p) const;

  std::size_t node_count() const { return nodes_.size(); }

  // Kernel plumbing.
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn,
           const char* kernel);
  Var push(Tensor value, std::span<const Var> parents, BackwardFn fn, const char* kernel);
  /// Gradient buffer of a node, allocated with zeros on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  bool record_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_nodes_;
  std::unordered_set<const Tensor*> trainable_;
};

// Kernels. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var mul(Var a, Var b);
Var transpose(Var a);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var layer_norm(Var a, double eps = 1e-6);
Var softmax_rows(Var a);
Var gelu(Var a);
/// Each row scaled to unit L2 norm. Rows with norm < 1e-9 become zero and a
/// warning is logged.
Var l2_normalize_rows(Var a);
/// Mean of squared differences, as a 1x1 tensor.
Var mse(Var a, Var b);
Var sum(Var a);

/// Scalar value of a 1x1 Var.
double scalar(Var v);

}  // namespace ppcl
