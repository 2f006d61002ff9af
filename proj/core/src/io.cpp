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
#include "ppcl/io.h"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <unistd.h>

namespace ppcl {

using nlohmann::json;

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'P', 'C', 'L'};
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::size_t kMaxRank = 8;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw TruncatedPayloadError("container: truncated payload reading " + what + " (need " +
                                  std::to_string(n) + " bytes, " + std::to_string(remaining()) +
                                  " left)");
    }
  }

  template <typename T>
  T get(const std::string& what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::span<const std::uint8_t> take(std::size_t n, const std::string& what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorContainer::add(std::string name, Tensor value) {
  if (contains(name)) throw DuplicateNameError("container: duplicate tensor name '" + name + "'");
  if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContainerError("container: tensor name length must be 1..65535");
  }
  if (value.rank() == 0 || value.rank() > kMaxRank) {
    throw ContainerError("container: tensor '" + name + "' has unsupported rank");
  }
  entries_.push_back({std::move(name), std::move(value)});
}

bool TensorContainer::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& TensorContainer::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw MissingTensorError("container: no tensor named '" + std::string(name) + "'");
}

bool operator==(const TensorContainer& a, const TensorContainer& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name) return false;
    if (!a.entries_[i].value.bit_equal(b.entries_[i].value)) return false;
  }
  return true;
}

std::vector<std::uint8_t> encode_container(const TensorContainer& c) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
  for (const auto& e : c.entries()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_le<std::uint64_t>(out, d);
    out.push_back(kDtypeF64);
    for (double v : e.value.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorContainer decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.remaining() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw BadMagicError("container: bad magic, not a PPCL file");
  }
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kContainerVersion) {
    throw UnsupportedVersionError("container: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  TensorContainer c;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string where = "tensor " + std::to_string(t);
    const auto name_len = r.get<std::uint16_t>(where + " name length");
    auto name_bytes = r.take(name_len, where + " name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.get<std::uint8_t>(where + " rank");
    if (rank == 0 || rank > kMaxRank) {
      throw ContainerError("container: tensor '" + name + "' has invalid rank " +
                           std::to_string(rank));
    }
    std::vector<std::size_t> shape;
    std::uint64_t elements = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint64_t>(where + " dims");
      if (d == 0) throw ContainerError("container: tensor '" + name + "' has a zero dimension");
      if (elements > std::numeric_limits<std::uint64_t>::max() / d) {
        throw TruncatedPayloadError("container: tensor '" + name + "' dims overflow");
      }
      elements *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    const auto dtype = r.get<std::uint8_t>(where + " dtype");
    if (dtype != kDtypeF64) {
      throw UnknownDtypeError("container: tensor '" + name + "' has unknown dtype " +
                              std::to_string(dtype));
    }
    if (elements > r.remaining() / 8) {
      throw TruncatedPayloadError("container: truncated payload for tensor '" + name + "'");
    }
    std::vector<double> data(static_cast<std::size_t>(elements));
    for (double& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
    if (c.contains(name)) throw DuplicateNameError("container: duplicate tensor name '" + name + "'");
    c.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) {
    throw ContainerError("container: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " +
                             ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void save_container(const TensorContainer& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_container(c));
}

TensorContainer load_container(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_container(bytes);
}

// Model tensors.

namespace {

Tensor scalar_tensor(double v) { return Tensor({1}, std::vector<double>{v}); }

double read_scalar(const TensorContainer& c, const std::string& name) {
  const Tensor& t = c.at(name);
  if (t.size() != 1) throw MissingTensorError("container: '" + name + "' is not a scalar");
  return t[0];
}

Tensor vector_tensor(const std::vector<double>& v) {
  if (v.empty()) return Tensor({1}, std::vector<double>{0.0});
  return Tensor({v.size()}, v);
}

int as_int(double v, const std::string& what) {
  if (!(v == std::floor(v)) || std::abs(v) > 1e9) {
    throw MissingTensorError("container: " + what + " is not an integer");
  }
  return static_cast<int>(v);
}

Tensor encode_spec(const ModelSpec& s) {
  std::vector<double> v{1.0,
                        static_cast<double>(s.layers),
                        static_cast<double>(s.dim),
                        static_cast<double>(s.heads),
                        static_cast<double>(s.text_tokens),
                        static_cast<double>(s.image_tokens),
                        static_cast<double>(s.ffn_mult),
                        s.epsilon,
                        s.depth_ramp,
                        static_cast<double>(s.seed >> 32),
                        static_cast<double>(s.seed & 0xFFFFFFFFULL),
                        static_cast<double>(s.planted.size())};
  for (const auto& p : s.planted) {
    v.push_back(p.first);
    v.push_back(p.last);
  }
  v.push_back(static_cast<double>(s.linear_ffn_layers.size()));
  for (int l : s.linear_ffn_layers) v.push_back(l);
  return Tensor({v.size()}, v);
}

ModelSpec decode_spec(const Tensor& t) {
  auto values = t.values();
  std::size_t i = 0;
  auto next = [&](const char* what) {
    if (i >= values.size()) throw MissingTensorError(std::string("model.spec: missing ") + what);
    return values[i++];
  };
  if (next("layout") != 1.0) throw MissingTensorError("model.spec: unknown layout");
  ModelSpec s;
  s.layers = as_int(next("layers"), "layers");
  s.dim = as_int(next("dim"), "dim");
  s.heads = as_int(next("heads"), "heads");
  s.text_tokens = as_int(next("text_tokens"), "text_tokens");
  s.image_tokens = as_int(next("image_tokens"), "image_tokens");
  s.ffn_mult = as_int(next("ffn_mult"), "ffn_mult");
  s.epsilon = next("epsilon");
  s.depth_ramp = next("depth_ramp");
  const auto hi = static_cast<std::uint64_t>(next("seed"));
  const auto lo = static_cast<std::uint64_t>(next("seed"));
  s.seed = (hi << 32) | lo;
  const int planted = as_int(next("planted count"), "planted count");
  s.planted.clear();
  for (int p = 0; p < planted; ++p) {
    const int a = as_int(next("planted"), "planted");
    const int b = as_int(next("planted"), "planted");
    s.planted.push_back({a, b});
  }
  const int linear = as_int(next("linear count"), "linear count");
  for (int p = 0; p < linear; ++p) s.linear_ffn_layers.push_back(as_int(next("linear"), "linear"));
  s.validate();
  return s;
}

Tensor expect_shape(const TensorContainer& c, const std::string& name, std::size_t rows,
                    std::size_t cols) {
  const Tensor& t = c.at(name);
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw MissingTensorError("container: '" + name + "' has shape " + t.shape_string() +
                             ", expected [" + std::to_string(rows) + "," + std::to_string(cols) +
                             "]");
  }
  return t;
}

Linear read_linear(const TensorContainer& c, const std::string& p, std::size_t in, std::size_t out) {
  return Linear{expect_shape(c, p + ".weight", in, out), expect_shape(c, p + ".bias", 1, out)};
}

FullStream read_stream(const TensorContainer& c, const std::string& p, const ModelSpec& s) {
  const auto d = static_cast<std::size_t>(s.dim);
  const auto h = static_cast<std::size_t>(s.dim * s.ffn_mult);
  FullStream f;
  f.attn_norm = {expect_shape(c, p + ".attn_norm.gamma", 1, d),
                 expect_shape(c, p + ".attn_norm.beta", 1, d)};
  f.attn_shift = expect_shape(c, p + ".attn_shift", 1, d);
  f.q = read_linear(c, p + ".q", d, d);
  f.k = read_linear(c, p + ".k", d, d);
  f.v = read_linear(c, p + ".v", d, d);
  f.out = read_linear(c, p + ".out", d, d);
  f.ffn_norm = {expect_shape(c, p + ".ffn_norm.gamma", 1, d),
                expect_shape(c, p + ".ffn_norm.beta", 1, d)};
  f.ffn_shift = expect_shape(c, p + ".ffn_shift", 1, d);
  if (c.contains(p + ".ffn_proj.weight")) {
    f.ffn = read_linear(c, p + ".ffn_proj", d, d);
  } else {
    f.ffn = FeedForward{read_linear(c, p + ".ffn.up", d, h), read_linear(c, p + ".ffn.down", h, d)};
  }
  return f;
}

Block read_block(const TensorContainer& c, const std::string& p, const ModelSpec& s) {
  const auto d = static_cast<std::size_t>(s.dim);
  Block b;
  if (c.contains(p + ".text.z_proj.weight")) {
    b.text = ProjectedText{read_linear(c, p + ".text.q", d, d), read_linear(c, p + ".text.k", d, d),
                           read_linear(c, p + ".text.v", d, d),
                           read_linear(c, p + ".text.z_proj", d, d),
                           read_linear(c, p + ".text.h_proj", d, d)};
  } else {
    b.text = read_stream(c, p + ".text", s);
  }
  b.image = read_stream(c, p + ".image", s);
  return b;
}

// Names visited for a block must all be present, and nothing else may share
// the prefix, so stray tensors are caught.
void add_block(TensorContainer& c, const std::string& prefix, const Block& b) {
  visit_block(prefix, b, [&](const std::string& name, const Tensor& t) { c.add(name, t); });
}

void add_curve(TensorContainer& c, const std::string& p, const std::vector<double>& curve,
               double initial, double final_loss) {
  c.add(p + ".initial_loss", scalar_tensor(initial));
  c.add(p + ".final_loss", scalar_tensor(final_loss));
  c.add(p + ".curve", vector_tensor(curve));
}

std::vector<double> read_curve(const TensorContainer& c, const std::string& p) {
  const Tensor& t = c.at(p + ".curve");
  return std::vector<double>(t.values().begin(), t.values().end());
}

}  // namespace

TensorContainer model_to_container(const DualStreamModel& m) {
  TensorContainer c;
  c.add("model.spec", encode_spec(m.spec()));
  std::vector<double> spans;
  for (const auto& s : m.spans()) {
    spans.push_back(s.first);
    spans.push_back(s.last);
  }
  c.add("model.spans", Tensor({m.depth(), 2}, spans));
  visit_model(m, [&](const std::string& name, const Tensor& t) { c.add(name, t); });
  return c;
}

DualStreamModel model_from_container(const TensorContainer& c) {
  const ModelSpec spec = decode_spec(c.at("model.spec"));
  const Tensor& spans_t = c.at("model.spans");
  if (spans_t.rank() != 2 || spans_t.cols() != 2) {
    throw MissingTensorError("container: 'model.spans' must be depth x 2");
  }
  const auto d = static_cast<std::size_t>(spec.dim);
  TimestepEmbedding emb{expect_shape(c, "embedding.weight", 1, d),
                        expect_shape(c, "embedding.bias", 1, d)};
  std::vector<Block> blocks;
  std::vector<Interval> spans;
  for (std::size_t i = 0; i < spans_t.rows(); ++i) {
    blocks.push_back(read_block(c, "block." + std::to_string(i + 1), spec));
    spans.push_back({as_int(spans_t(i, 0), "span"), as_int(spans_t(i, 1), "span")});
  }
  DualStreamModel m(spec, std::move(emb), std::move(blocks), std::move(spans));
  std::size_t expected = 2;
  visit_model(m, [&](const std::string&, const Tensor&) { ++expected; });
  if (expected != c.size()) {
    throw MissingTensorError("container: " + std::to_string(c.size() - std::min(c.size(), expected)) +
                             " unexpected tensors besides the model");
  }
  return m;
}

TensorContainer probes_to_container(std::span<const LinearProbe> probes) {
  TensorContainer c;
  for (const auto& p : probes) {
    const std::string prefix = "probe." + std::to_string(p.layer);
    c.add(prefix + ".W", p.weight);
    c.add(prefix + ".final_loss", scalar_tensor(p.final_loss));
  }
  return c;
}

std::vector<LinearProbe> probes_from_container(const TensorContainer& c) {
  std::vector<LinearProbe> out;
  for (const auto& e : c.entries()) {
    const std::string& n = e.name;
    if (!n.starts_with("probe.") || !n.ends_with(".W")) continue;
    const std::string idx = n.substr(6, n.size() - 8);
    int layer = 0;
    try {
      std::size_t used = 0;
      layer = std::stoi(idx, &used);
      if (used != idx.size()) throw std::invalid_argument(idx);
    } catch (const std::exception&) {
      throw MissingTensorError("container: bad probe name '" + n + "'");
    }
    const Tensor& w = e.value;
    if (w.rank() != 2 || w.rows() != w.cols()) {
      throw MissingTensorError("container: probe '" + n + "' is not square");
    }
    out.push_back({layer, w, true, read_scalar(c, "probe." + idx + ".final_loss")});
  }
  if (out.size() * 2 != c.size()) throw MissingTensorError("container: unexpected tensors among probes");
  std::ranges::sort(out, [](const auto& a, const auto& b) { return a.layer < b.layer; });
  return out;
}

TensorContainer parts_to_container(const TrainedParts& parts) {
  TensorContainer c;
  for (const auto& p : parts.depth) {
    const std::string prefix =
        "depth." + std::to_string(p.span.first) + "-" + std::to_string(p.span.last);
    add_block(c, prefix, p.block);
    add_curve(c, prefix, p.curve, p.initial_loss, p.final_loss);
  }
  for (const auto& p : parts.width) {
    const std::string prefix = "width." + std::string(width_kind_name(p.kind)) + "." +
                               std::to_string(p.layer);
    const bool text = p.kind == WidthKind::kText;
    visit_linear(prefix + (text ? ".z_proj" : ".img"), p.first,
                 [&](const std::string& n, const Tensor& t) { c.add(n, t); });
    visit_linear(prefix + (text ? ".h_proj" : ".txt"), p.second,
                 [&](const std::string& n, const Tensor& t) { c.add(n, t); });
    c.add(prefix + ".source", scalar_tensor(p.source));
    add_curve(c, prefix, p.curve, p.initial_loss, p.final_loss);
  }
  return c;
}

TrainedParts parts_from_container(const TensorContainer& c, const ModelSpec& spec) {
  TrainedParts parts;
  const auto d = static_cast<std::size_t>(spec.dim);
  std::set<std::string> seen;
  std::size_t consumed = 0;
  for (const auto& e : c.entries()) {
    const std::string& n = e.name;
    if (!n.ends_with(".final_loss")) continue;
    const std::string prefix = n.substr(0, n.size() - 11);
    if (!seen.insert(prefix).second) continue;
    const double initial = read_scalar(c, prefix + ".initial_loss");
    const double final_loss = read_scalar(c, prefix + ".final_loss");
    std::vector<double> curve = read_curve(c, prefix);
    consumed += 3;
    if (prefix.starts_with("depth.")) {
      const std::string range = prefix.substr(6);
      const auto dash = range.find('-');
      if (dash == std::string::npos) throw MissingTensorError("container: bad part '" + prefix + "'");
      Interval span{std::stoi(range.substr(0, dash)), std::stoi(range.substr(dash + 1))};
      Block b = read_block(c, prefix, spec);
      visit_block(prefix, b, [&](const std::string&, const Tensor&) { ++consumed; });
      parts.depth.push_back({span, std::move(b), std::move(curve), initial, final_loss});
    } else if (prefix.starts_with("width.")) {
      const std::string rest = prefix.substr(6);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) throw MissingTensorError("container: bad part '" + prefix + "'");
      ProjectorPart p;
      p.kind = parse_width_kind(rest.substr(0, dot));
      p.layer = std::stoi(rest.substr(dot + 1));
      p.source = as_int(read_scalar(c, prefix + ".source"), "source");
      const bool text = p.kind == WidthKind::kText;
      p.first = read_linear(c, prefix + (text ? ".z_proj" : ".img"), d, d);
      p.second = read_linear(c, prefix + (text ? ".h_proj" : ".txt"), d, d);
      p.curve = std::move(curve);
      p.initial_loss = initial;
      p.final_loss = final_loss;
      consumed += 5;
      parts.width.push_back(std::move(p));
    } else {
      throw MissingTensorError("container: unknown part '" + prefix + "'");
    }
  }
  if (consumed != c.size()) throw MissingTensorError("container: unexpected tensors among parts");
  return parts;
}

// JSON.

json spec_to_json(const ModelSpec& s) {
  json planted = json::array();
  for (const auto& p : s.planted) planted.push_back({p.first, p.last});
  return json{{"layers", s.layers},
              {"dim", s.dim},
              {"heads", s.heads},
              {"text_tokens", s.text_tokens},
              {"image_tokens", s.image_tokens},
              {"ffn_mult", s.ffn_mult},
              {"planted", planted},
              {"epsilon", s.epsilon},
              {"depth_ramp", s.depth_ramp},
              {"linear_ffn_layers", s.linear_ffn_layers},
              {"seed", s.seed}};
}

namespace {

template <typename T>
T field(const json& j, const char* key, T fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw PlanFormatError(path + "." + key + ": " + e.what());
  }
}

template <typename T>
T required(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw PlanFormatError(path + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw PlanFormatError(path + "." + key + ": " + e.what());
  }
}

}  // namespace

ModelSpec spec_from_json(const json& j, ModelSpec s) {
  if (!j.is_object()) throw PlanFormatError("$.model: expected an object");
  static const std::set<std::string> known{"layers",     "dim",          "heads",
                                           "text_tokens", "image_tokens", "ffn_mult",
                                           "planted",    "epsilon",      "depth_ramp",
                                           "linear_ffn_layers", "seed"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw PlanFormatError("$.model." + k + ": unknown key");
  }
  const std::string p = "$.model";
  s.layers = field(j, "layers", s.layers, p);
  s.dim = field(j, "dim", s.dim, p);
  s.heads = field(j, "heads", s.heads, p);
  s.text_tokens = field(j, "text_tokens", s.text_tokens, p);
  s.image_tokens = field(j, "image_tokens", s.image_tokens, p);
  s.ffn_mult = field(j, "ffn_mult", s.ffn_mult, p);
  s.epsilon = field(j, "epsilon", s.epsilon, p);
  s.depth_ramp = field(j, "depth_ramp", s.depth_ramp, p);
  s.seed = field(j, "seed", s.seed, p);
  s.linear_ffn_layers = field(j, "linear_ffn_layers", s.linear_ffn_layers, p);
  if (j.contains("planted")) {
    s.planted.clear();
    for (const auto& pair : j.at("planted")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw PlanFormatError(p + ".planted: each entry must be [first, last]");
      }
      s.planted.push_back({pair[0].get<int>(), pair[1].get<int>()});
    }
  }
  try {
    s.validate();
  } catch (const SpecError& e) {
    throw PlanFormatError(p + ": " + e.what());
  }
  return s;
}

json plan_to_json(const PruningPlan& plan) {
  json intervals = json::array();
  for (const auto& p : plan.intervals) {
    json e{{"u", p.interval.span.first},
           {"v", p.interval.span.last},
           {"binding", binding_name(p.binding)}};
    e["cka"] = p.interval.cka ? json(*p.interval.cka) : json(nullptr);
    intervals.push_back(std::move(e));
  }
  json r_txt = json::array(), r_ffn = json::array();
  for (const auto& w : plan.width) {
    if (w.kind == WidthKind::kText) {
      r_txt.push_back({{"layer", w.layer}, {"source", w.source}, {"binding", binding_name(w.binding)}});
    } else {
      r_ffn.push_back({{"layer", w.layer}, {"binding", binding_name(w.binding)}});
    }
  }
  return json{{"format", "ppcl-plan"},
              {"version", kPlanVersion},
              {"model", spec_to_json(plan.spec)},
              {"strategy", strategy_name(plan.strategy)},
              {"intervals", intervals},
              {"R_txt", r_txt},
              {"R_ffn", r_ffn}};
}

PruningPlan plan_from_json(const json& j) {
  if (!j.is_object()) throw PlanFormatError("$: expected an object");
  check_finite_json(j);
  if (required<std::string>(j, "format", "$") != "ppcl-plan") {
    throw PlanFormatError("$.format: expected 'ppcl-plan'");
  }
  if (required<int>(j, "version", "$") != kPlanVersion) {
    throw PlanFormatError("$.version: unsupported plan version");
  }
  PruningPlan plan;
  plan.spec = spec_from_json(required<json>(j, "model", "$"));
  plan.strategy = parse_strategy(required<std::string>(j, "strategy", "$"));
  const json intervals = required<json>(j, "intervals", "$");
  if (!intervals.is_array()) throw PlanFormatError("$.intervals: expected an array");
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const std::string p = "$.intervals[" + std::to_string(i) + "]";
    const json& e = intervals[i];
    PlannedInterval pi;
    pi.interval.span = {required<int>(e, "u", p), required<int>(e, "v", p)};
    if (e.contains("cka") && !e.at("cka").is_null()) pi.interval.cka = required<double>(e, "cka", p);
    pi.binding = parse_binding(required<std::string>(e, "binding", p));
    plan.intervals.push_back(pi);
  }
  const json r_txt = j.value("R_txt", json::array());
  const json r_ffn = j.value("R_ffn", json::array());
  for (std::size_t i = 0; i < r_txt.size(); ++i) {
    const std::string p = "$.R_txt[" + std::to_string(i) + "]";
    plan.width.push_back({WidthKind::kText, required<int>(r_txt[i], "layer", p),
                          required<int>(r_txt[i], "source", p),
                          parse_binding(required<std::string>(r_txt[i], "binding", p))});
  }
  for (std::size_t i = 0; i < r_ffn.size(); ++i) {
    const std::string p = "$.R_ffn[" + std::to_string(i) + "]";
    plan.width.push_back({WidthKind::kFfn, required<int>(r_ffn[i], "layer", p), 0,
                          parse_binding(required<std::string>(r_ffn[i], "binding", p))});
  }
  std::ranges::stable_sort(plan.width, [](const WidthTarget& a, const WidthTarget& b) {
    return a.layer < b.layer;
  });
  plan.validate();
  return plan;
}

void save_plan(const PruningPlan& plan, const std::filesystem::path& path) {
  plan.validate();
  const json j = plan_to_json(plan);
  check_finite_json(j);
  write_file_atomic(path, dump_json(j));
}

PruningPlan load_plan(const std::filesystem::path& path) { return plan_from_json(read_json(path)); }

void check_finite_json(const json& j, const std::string& path) {
  if (j.is_number_float()) {
    if (!std::isfinite(j.get<double>())) {
      throw NonFiniteFieldError("non-finite number at " + path);
    }
  } else if (j.is_object()) {
    for (const auto& [k, v] : j.items()) check_finite_json(v, path + "." + k);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      check_finite_json(j[i], path + "[" + std::to_string(i) + "]");
    }
  }
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void write_report(const json& report, const std::filesystem::path& path) {
  check_finite_json(report);
  write_file_atomic(path, dump_json(report));
}

json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw PlanFormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ppcl
