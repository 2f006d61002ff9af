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

#include "ppcl/autograd.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ppcl/log.h"

namespace ppcl {

namespace {

constexpr double kNormFloor = 1e-9;

void require_rank2(const Tensor& t, const char* kernel) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(kernel) + ": expected rank-2 operand, got " + t.shape_string());
  }
}

void require_same_tape(Var a, Var b, const char* kernel) {
  if (&a.tape() != &b.tape()) {
    throw GraphError(std::string(kernel) + ": operands recorded on different tapes");
  }
}

enum class Broadcast { kNone, kRow };

Broadcast binary_layout(const Tensor& a, const Tensor& b, const char* kernel) {
  require_rank2(a, kernel);
  require_rank2(b, kernel);
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw ShapeError(std::string(kernel) + ": shapes " + a.shape_string() + " and " +
                   b.shape_string() + " are not compatible");
}

// Accumulates g into a row-broadcast operand's gradient (column sums).
void accumulate_row_sums(Tensor& dst, const Tensor& g) {
  const std::size_t r = g.rows(), c = g.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j] += g(i, j);
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  if (consumed_) throw GraphError("Tape: recording on a consumed tape");
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Tensor& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Var v = constant(p);
  nodes_[v.id()].needs_grad = record_ && trainable_.contains(&p);
  param_nodes_.emplace(&p, v.id());
  return v;
}

void Tape::add_trainable(const Tensor& p) {
  if (param_nodes_.contains(&p)) {
    throw GraphError("Tape: parameter registered as trainable after it was bound");
  }
  trainable_.insert(&p);
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn,
               const char* kernel) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(fn), kernel);
}

Var Tape::push(Tensor value, std::span<const Var> parents, BackwardFn fn, const char* kernel) {
  if (consumed_) throw GraphError(std::string(kernel) + ": recording on a consumed tape");
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(kernel) + ": produced a non-finite value");
  }
  bool needs = false;
  if (record_) {
    for (Var p : parents) needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs ? std::move(fn) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) throw GraphError("backward: graph already consumed");
  if (&loss.tape() != this) throw GraphError("backward: loss recorded on a different tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
  }
  consumed_ = true;
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

const Tensor* Tape::gradient(const Tensor& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.empty() ? nullptr : &n.grad;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tensor out = mat::matmul(a.value(), b.value());
  return a.tape().push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a.id())) accumulate(t.grad(a.id()), mat::matmul_bt(g, t.value(b.id())));
    if (t.needs_grad(b.id())) accumulate(t.grad(b.id()), mat::matmul_at(t.value(a.id()), g));
  }, "matmul");
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Broadcast layout = binary_layout(a.value(), b.value(), "add");
  Tensor out = a.value();
  const std::size_t c = out.cols();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += layout == Broadcast::kRow ? bv[i % c] : bv[i];
  return a.tape().push(std::move(out), {a, b}, [a, b, layout](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a.id())) accumulate(t.grad(a.id()), g);
    if (t.needs_grad(b.id())) {
      if (layout == Broadcast::kRow) {
        accumulate_row_sums(t.grad(b.id()), g);
      } else {
        accumulate(t.grad(b.id()), g);
      }
    }
  }, "add");
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var scale(Var a, double s) {
  Tensor out = mat::scale(a.value(), s);
  return a.tape().push(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad(a.id());
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += s * g[i];
  }, "scale");
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Broadcast layout = binary_layout(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const std::size_t c = out.cols();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] *= layout == Broadcast::kRow ? bv[i % c] : bv[i];
  return a.tape().push(std::move(out), {a, b}, [a, b, layout](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    const Tensor& bv = t.value(b.id());
    const std::size_t c = g.cols();
    if (t.needs_grad(a.id())) {
      Tensor& da = t.grad(a.id());
      for (std::size_t i = 0; i < da.size(); ++i)
        da[i] += g[i] * (layout == Broadcast::kRow ? bv[i % c] : bv[i]);
    }
    if (t.needs_grad(b.id())) {
      Tensor& db = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) {
        db[layout == Broadcast::kRow ? i % c : i] += g[i] * av[i];
      }
    }
  }, "mul");
}

Var transpose(Var a) {
  Tensor out = mat::transpose(a.value());
  return a.tape().push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t.grad(a.id()), mat::transpose(t.grad(self)));
  }, "transpose");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& tape = parts.front().tape();
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (Var p : parts) {
    if (&p.tape() != &tape) throw GraphError("concat_rows: operands recorded on different tapes");
    values.push_back(p.value());
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return tape.push(mat::vstack(values), parts, [owned](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t row = 0;
    for (Var p : owned) {
      const std::size_t r = t.value(p.id()).rows();
      if (t.needs_grad(p.id())) accumulate(t.grad(p.id()), mat::row_slice(g, row, r));
      row += r;
    }
  }, "concat_rows");
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tensor out = mat::row_slice(a.value(), begin, count);
  return a.tape().push(std::move(out), {a}, [a, begin](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad(a.id());
    double* dst = da.data() + begin * da.cols();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }, "slice_rows");
}

Var layer_norm(Var a, double eps) {
  const Tensor& x = a.value();
  require_rank2(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out(i, j) = (x(i, j) - mean) * inv_std[i];
  }
  return a.tape().push(std::move(out), {a}, [a, inv_std](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad(a.id());
    const std::size_t r = g.rows(), c = g.cols();
    for (std::size_t i = 0; i < r; ++i) {
      double gm = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        gm += g(i, j);
        gy += g(i, j) * y(i, j);
      }
      gm /= static_cast<double>(c);
      gy /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) da(i, j) += inv_std[i] * (g(i, j) - gm - y(i, j) * gy);
    }
  }, "layer_norm");
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_rank2(x, "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (out(i, j) = std::exp(x(i, j) - mx));
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= s;
  }
  return a.tape().push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad(a.id());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) da(i, j) += y(i, j) * (g(i, j) - dot);
    }
  }, "softmax_rows");
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v * normal_cdf(v);
  return a.tape().push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a.id());
    Tensor& da = t.grad(a.id());
    for (std::size_t i = 0; i < g.size(); ++i)
      da[i] += g[i] * (normal_cdf(x[i]) + x[i] * normal_pdf(x[i]));
  }, "gelu");
}

Var l2_normalize_rows(Var a) {
  const Tensor& x = a.value();
  require_rank2(x, "l2_normalize_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  std::vector<double> norms(r);
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x(i, j) * x(i, j);
    norms[i] = std::sqrt(s);
    if (norms[i] < kNormFloor) {
      ++degenerate;
      continue;
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) = x(i, j) / norms[i];
  }
  if (degenerate) {
    warn("l2_normalize_rows: " + std::to_string(degenerate) +
         " row(s) with norm below 1e-9 mapped to zero");
  }
  return a.tape().push(std::move(out), {a}, [a, norms](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad(a.id());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      if (norms[i] < kNormFloor) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j)
        da(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
    }
  }, "l2_normalize_rows");
}

Var mse(Var a, Var b) {
  require_same_tape(a, b, "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("mse: shapes " + av.shape_string() + " and " + bv.shape_string() +
                     " differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  Tensor out = Tensor::matrix(1, 1, s / n);
  return a.tape().push(std::move(out), {a, b}, [a, b, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& av = t.value(a.id());
    const Tensor& bv = t.value(b.id());
    const bool ga = t.needs_grad(a.id()), gb = t.needs_grad(b.id());
    Tensor* da = ga ? &t.grad(a.id()) : nullptr;
    Tensor* db = gb ? &t.grad(b.id()) : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = 2.0 * g * (av[i] - bv[i]) / n;
      if (da) (*da)[i] += d;
      if (db) (*db)[i] -= d;
    }
  }, "mse");
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().push(Tensor::matrix(1, 1, s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(a.id()).values()) v += g;
  }, "sum");
}

double scalar(Var v) {
  if (v.value().size() != 1) {
    throw ShapeError("scalar: expected 1x1 value, got " + v.value().shape_string());
  }
  return v.value()[0];
}

}  // namespace ppcl
