// Copyright 2026 The TruthV Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "truthv/error.hpp"
#include "truthv/io_util.hpp"

namespace truthv {

// ---------------------------------------------------------------------------
// Configuration and weights
// ---------------------------------------------------------------------------

enum class Activation { kSilu, kGelu };

inline std::string_view to_string(Activation a) {
  return a == Activation::kSilu ? "silu" : "gelu";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "silu") return Activation::kSilu;
  if (s == "gelu") return Activation::kGelu;
  fail(ErrorKind::kFormat, "unknown activation '", s, "'");
}

// SiLU for SwiGLU; tanh-approximated GELU for GeGLU.
inline float activate(Activation a, float x) {
  if (a == Activation::kSilu) return x / (1.0f + std::exp(-x));
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

struct ModelConfig {
  std::size_t n_layers = 1;
  std::size_t d_model = 16;
  std::size_t d_ff = 48;
  std::size_t n_heads = 4;
  std::size_t head_dim = 4;
  std::size_t vocab_size = 258;
  std::size_t max_seq_len = 256;
  Activation activation = Activation::kSilu;
  double norm_eps = 1e-5;

  void validate() const {
    if (n_layers < 1 || d_model < 1 || d_ff < 1 || n_heads < 1 ||
        head_dim < 1 || vocab_size < 1 || max_seq_len < 1)
      fail(ErrorKind::kShape, "model config: all counts must be >= 1");
    if (d_ff <= d_model)
      fail(ErrorKind::kShape, "model config: d_ff (", d_ff,
           ") must exceed d_model (", d_model, ")");
    if (n_heads * head_dim != d_model)
      fail(ErrorKind::kShape, "model config: n_heads * head_dim (",
           n_heads * head_dim, ") != d_model (", d_model, ")");
    if (!(norm_eps > 0.0) || !std::isfinite(norm_eps))
      fail(ErrorKind::kRange, "model config: norm_eps must be positive");
  }
};

inline Json config_to_json(const ModelConfig& c) {
  return Json{{"n_layers", c.n_layers},   {"d_model", c.d_model},
              {"d_ff", c.d_ff},           {"n_heads", c.n_heads},
              {"head_dim", c.head_dim},   {"vocab_size", c.vocab_size},
              {"max_seq_len", c.max_seq_len},
              {"activation", std::string(to_string(c.activation))},
              {"norm_eps", c.norm_eps}};
}

inline ModelConfig config_from_json(const Json& j) {
  constexpr std::string_view ctx = "manifest config";
  ModelConfig c;
  c.n_layers = io::get_field<std::size_t>(j, "n_layers", ctx);
  c.d_model = io::get_field<std::size_t>(j, "d_model", ctx);
  c.d_ff = io::get_field<std::size_t>(j, "d_ff", ctx);
  c.n_heads = io::get_field<std::size_t>(j, "n_heads", ctx);
  c.head_dim = io::get_field<std::size_t>(j, "head_dim", ctx);
  c.vocab_size = io::get_field<std::size_t>(j, "vocab_size", ctx);
  c.max_seq_len = io::get_field<std::size_t>(j, "max_seq_len", ctx);
  c.activation = parse_activation(io::get_field<std::string>(j, "activation", ctx));
  c.norm_eps = io::get_field<double>(j, "norm_eps", ctx);
  c.validate();
  return c;
}

// Row-major f32 tensor. Rank 1 (norm scales) or rank 2 (projections).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, float fill = 0.0f)
      : shape(std::move(s)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           std::multiplies<>());
  }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  float& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data).subspan(r * cols(), cols());
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

namespace tensor_names {

inline std::string layer(std::size_t l, std::string_view leaf) {
  return "layers." + std::to_string(l) + "." + std::string(leaf);
}

inline constexpr std::string_view kEmbedIn = "embed.in";
inline constexpr std::string_view kEmbedOut = "embed.out";
inline constexpr std::string_view kFinalNorm = "norm.final.scale";

}  // namespace tensor_names

// Every tensor a bundle must carry, in canonical (serialization) order.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>>
expected_tensor_shapes(const ModelConfig& c) {
  using tensor_names::layer;
  const std::size_t d = c.d_model, f = c.d_ff, v = c.vocab_size;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  out.emplace_back(std::string(tensor_names::kEmbedIn), std::vector{v, d});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    out.emplace_back(layer(l, "attn_norm.scale"), std::vector{d});
    out.emplace_back(layer(l, "attn.w_q"), std::vector{d, d});
    out.emplace_back(layer(l, "attn.w_k"), std::vector{d, d});
    out.emplace_back(layer(l, "attn.w_v"), std::vector{d, d});
    out.emplace_back(layer(l, "attn.w_o"), std::vector{d, d});
    out.emplace_back(layer(l, "mlp_norm.scale"), std::vector{d});
    out.emplace_back(layer(l, "mlp.w_gate"), std::vector{f, d});
    out.emplace_back(layer(l, "mlp.w_up"), std::vector{f, d});
    out.emplace_back(layer(l, "mlp.w_down"), std::vector{d, f});
  }
  out.emplace_back(std::string(tensor_names::kFinalNorm), std::vector{d});
  out.emplace_back(std::string(tensor_names::kEmbedOut), std::vector{v, d});
  return out;
}

struct ModelBundle {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;

  const Tensor& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      fail(ErrorKind::kStructural, "missing tensor '", name, "'");
    return it->second;
  }
  Tensor& tensor(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      fail(ErrorKind::kStructural, "missing tensor '", name, "'");
    return it->second;
  }

  // All tensors zero-filled, with the shapes the config demands.
  static ModelBundle zeros(const ModelConfig& c) {
    c.validate();
    ModelBundle b;
    b.config = c;
    for (auto& [name, shape] : expected_tensor_shapes(c))
      b.tensors.emplace(name, Tensor(shape));
    return b;
  }

  // Checks presence, shapes, and finiteness of every required tensor.
  void validate() const {
    config.validate();
    for (const auto& [name, shape] : expected_tensor_shapes(config)) {
      auto it = tensors.find(name);
      if (it == tensors.end())
        fail(ErrorKind::kStructural, "missing tensor '", name, "'");
      const Tensor& t = it->second;
      if (t.shape != shape)
        fail(ErrorKind::kShape, "tensor '", name, "' has shape ",
             shape_string(t.shape), ", expected ", shape_string(shape));
      if (t.data.size() != Tensor::element_count(shape))
        fail(ErrorKind::kShape, "tensor '", name, "' data size mismatch");
      for (std::size_t i = 0; i < t.data.size(); ++i)
        if (!std::isfinite(t.data[i]))
          fail(ErrorKind::kNumeric, "tensor '", name,
               "' has a non-finite entry at flat offset ", i);
    }
  }
};

// ---------------------------------------------------------------------------
// Probe identifiers
// ---------------------------------------------------------------------------

// Declaration order is the canonical kind order.
enum class ProbeKind { kMlpKey = 0, kAttnHeadNorm = 1, kLogLikelihood = 2 };

inline std::string_view to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::kMlpKey: return "mlp_key";
    case ProbeKind::kAttnHeadNorm: return "attn_head_norm";
    case ProbeKind::kLogLikelihood: return "log_likelihood";
  }
  return "unknown";
}

inline ProbeKind parse_probe_kind(std::string_view s) {
  if (s == "mlp_key") return ProbeKind::kMlpKey;
  if (s == "attn_head_norm") return ProbeKind::kAttnHeadNorm;
  if (s == "log_likelihood") return ProbeKind::kLogLikelihood;
  fail(ErrorKind::kFormat, "unknown probe kind '", s, "'");
}

struct ProbeId {
  ProbeKind kind = ProbeKind::kMlpKey;
  std::size_t layer = 0;  // unused for log_likelihood
  std::size_t index = 0;  // neuron or head; unused for log_likelihood

  static ProbeId mlp_key(std::size_t layer, std::size_t neuron) {
    return {ProbeKind::kMlpKey, layer, neuron};
  }
  static ProbeId head_norm(std::size_t layer, std::size_t head) {
    return {ProbeKind::kAttnHeadNorm, layer, head};
  }
  static ProbeId log_likelihood() { return {ProbeKind::kLogLikelihood, 0, 0}; }

  bool has_position() const { return kind != ProbeKind::kLogLikelihood; }

  // Canonical column order: kind, then layer, then index.
  friend auto operator<=>(const ProbeId& a, const ProbeId& b) {
    return std::tuple(static_cast<int>(a.kind), a.layer, a.index) <=>
           std::tuple(static_cast<int>(b.kind), b.layer, b.index);
  }
  friend bool operator==(const ProbeId&, const ProbeId&) = default;
};

inline std::string to_string(const ProbeId& p) {
  std::string s(to_string(p.kind));
  if (p.has_position())
    s += ":" + std::to_string(p.layer) + ":" + std::to_string(p.index);
  return s;
}

inline Json probe_to_json(const ProbeId& p) {
  Json j{{"kind", std::string(to_string(p.kind))}};
  if (p.has_position()) {
    j["layer"] = p.layer;
    j["index"] = p.index;
  }
  return j;
}

inline ProbeId probe_from_json(const Json& j) {
  constexpr std::string_view ctx = "probe";
  ProbeId p;
  p.kind = parse_probe_kind(io::get_field<std::string>(j, "kind", ctx));
  if (p.has_position()) {
    p.layer = io::get_field<std::size_t>(j, "layer", ctx);
    p.index = io::get_field<std::size_t>(j, "index", ctx);
  }
  return p;
}

// Parses "mlp_key:L:I", "attn_head_norm:L:H" or "log_likelihood".
inline ProbeId parse_probe(std::string_view s) {
  const auto first = s.find(':');
  ProbeId p;
  p.kind = parse_probe_kind(s.substr(0, first));
  if (!p.has_position()) {
    if (first != std::string_view::npos)
      fail(ErrorKind::kFormat, "log_likelihood probe takes no position");
    return p;
  }
  const auto second = s.find(':', first == std::string_view::npos ? s.size() : first + 1);
  if (first == std::string_view::npos || second == std::string_view::npos)
    fail(ErrorKind::kFormat, "probe '", s, "' must be kind:layer:index");
  try {
    p.layer = std::stoul(std::string(s.substr(first + 1, second - first - 1)));
    p.index = std::stoul(std::string(s.substr(second + 1)));
  } catch (const std::exception&) {
    fail(ErrorKind::kFormat, "probe '", s, "' has a non-numeric position");
  }
  return p;
}

inline std::vector<ProbeId> all_mlp_probes(const ModelConfig& c) {
  std::vector<ProbeId> out;
  out.reserve(c.n_layers * c.d_ff);
  for (std::size_t l = 0; l < c.n_layers; ++l)
    for (std::size_t i = 0; i < c.d_ff; ++i) out.push_back(ProbeId::mlp_key(l, i));
  return out;
}

inline std::vector<ProbeId> all_head_probes(const ModelConfig& c) {
  std::vector<ProbeId> out;
  for (std::size_t l = 0; l < c.n_layers; ++l)
    for (std::size_t h = 0; h < c.n_heads; ++h) out.push_back(ProbeId::head_norm(l, h));
  return out;
}

inline void check_probe(const ModelConfig& c, const ProbeId& p) {
  if (!p.has_position()) return;
  if (p.layer >= c.n_layers)
    fail(ErrorKind::kRange, "probe ", to_string(p), " references layer ",
         p.layer, " but the model has ", c.n_layers);
  const std::size_t limit = p.kind == ProbeKind::kMlpKey ? c.d_ff : c.n_heads;
  if (p.index >= limit)
    fail(ErrorKind::kRange, "probe ", to_string(p), " index out of range (",
         limit, ")");
}

// ---------------------------------------------------------------------------
// Bundle I/O: manifest.json + tensors.bin (little-endian f32, row-major)
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

inline void append_f32_le(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    std::memcpy(out.data() + start + 4 * i, &bits, 4);
  }
}

inline void read_f32_le(std::string_view bytes, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    out[i] = std::bit_cast<float>(bits);
  }
}

}  // namespace detail

inline void save_model(const ModelBundle& model,
                       const std::filesystem::path& dir) {
  model.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '", dir.string(), "'");
  std::string blob;
  Json table = Json::object();
  for (const auto& [name, shape] : expected_tensor_shapes(model.config)) {
    const Tensor& t = model.tensor(name);
    const std::size_t offset = blob.size();
    detail::append_f32_le(blob, t.data);
    table[name] = Json{{"shape", shape},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"byte_len", blob.size() - offset}};
  }
  Json manifest{{"config", config_to_json(model.config)}, {"tensors", table}};
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  io::write_file(dir / "tensors.bin", blob);
}

inline ModelBundle load_model(const std::filesystem::path& dir) {
  const std::string manifest_text = io::read_file(dir / "manifest.json");
  Json manifest;
  try {
    manifest = Json::parse(manifest_text);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kFormat, "manifest.json: ", e.what());
  }
  if (!manifest.contains("config") || !manifest.contains("tensors") ||
      !manifest["tensors"].is_object())
    fail(ErrorKind::kFormat, "manifest.json needs 'config' and 'tensors'");
  ModelBundle model;
  model.config = config_from_json(manifest["config"]);
  const std::string blob = io::read_file(dir / "tensors.bin");

  for (const auto& [name, entry] : manifest["tensors"].items()) {
    const std::string ctx = "tensor '" + name + "'";
    const auto shape = io::get_field<std::vector<std::size_t>>(entry, "shape", ctx);
    const auto dtype = io::get_field<std::string>(entry, "dtype", ctx);
    const auto offset = io::get_field<std::size_t>(entry, "offset", ctx);
    const auto byte_len = io::get_field<std::size_t>(entry, "byte_len", ctx);
    if (dtype != "f32") fail(ErrorKind::kFormat, ctx, ": unsupported dtype '", dtype, "'");
    if (shape.empty() || shape.size() > 2)
      fail(ErrorKind::kShape, ctx, ": rank must be 1 or 2");
    Tensor t(shape);
    if (byte_len != t.data.size() * 4)
      fail(ErrorKind::kShape, ctx, ": byte_len ", byte_len, " does not match shape ",
           shape_string(shape));
    if (offset > blob.size() || byte_len > blob.size() - offset)
      fail(ErrorKind::kIntegrity, ctx, ": extends past the end of tensors.bin");
    detail::read_f32_le(std::string_view(blob).substr(offset, byte_len), t.data);
    model.tensors.emplace(name, std::move(t));
  }
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// GLU MLP
// ---------------------------------------------------------------------------

namespace detail {

// y = W x with W (rows x cols) row-major; dot products accumulate in double.
inline void matvec(std::span<const float> w, std::size_t rows, std::size_t cols,
                   std::span<const float> x, std::span<float> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* wr = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      acc += static_cast<double>(wr[c]) * static_cast<double>(x[c]);
    y[r] = static_cast<float>(acc);
  }
}

inline std::vector<float> rms_norm(std::span<const float> x,
                                   std::span<const float> scale, double eps) {
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<float>(static_cast<double>(x[i]) * inv * scale[i]);
  return out;
}

inline bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace detail

// Borrowed view of one layer's MLP weights.
struct MlpWeights {
  std::size_t layer = 0;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  Activation activation = Activation::kSilu;
  std::span<const float> w_gate;  // d_ff x d_model
  std::span<const float> w_up;    // d_ff x d_model
  std::span<const float> w_down;  // d_model x d_ff

  static MlpWeights of(const ModelBundle& m, std::size_t layer) {
    if (layer >= m.config.n_layers)
      fail(ErrorKind::kRange, "layer ", layer, " out of range");
    return {layer,
            m.config.d_model,
            m.config.d_ff,
            m.config.activation,
            m.tensor(tensor_names::layer(layer, "mlp.w_gate")).data,
            m.tensor(tensor_names::layer(layer, "mlp.w_up")).data,
            m.tensor(tensor_names::layer(layer, "mlp.w_down")).data};
  }

  // Value vector v_i: column i of w_down.
  std::vector<float> value_vector(std::size_t i) const {
    std::vector<float> v(d_model);
    for (std::size_t r = 0; r < d_model; ++r) v[r] = w_down[r * d_ff + i];
    return v;
  }
};

struct MlpOutput {
  std::vector<float> m;     // d_model
  std::vector<float> keys;  // d_ff; keys[i] = f(w_gate,i . h) * (w_up,i . h)
};

inline MlpOutput mlp_forward(std::span<const float> h, const MlpWeights& w) {
  if (h.size() != w.d_model)
    fail(ErrorKind::kShape, "mlp input has length ", h.size(), ", expected ", w.d_model);
  if (!detail::all_finite(h))
    fail(ErrorKind::kNumeric, "non-finite mlp input at layer ", w.layer);
  std::vector<float> gate(w.d_ff), up(w.d_ff);
  detail::matvec(w.w_gate, w.d_ff, w.d_model, h, gate);
  detail::matvec(w.w_up, w.d_ff, w.d_model, h, up);
  MlpOutput out{std::vector<float>(w.d_model), std::vector<float>(w.d_ff)};
  for (std::size_t i = 0; i < w.d_ff; ++i)
    out.keys[i] = activate(w.activation, gate[i]) * up[i];
  detail::matvec(w.w_down, w.d_model, w.d_ff, out.keys, out.m);
  if (!detail::all_finite(out.keys) || !detail::all_finite(out.m))
    fail(ErrorKind::kNumeric, "numeric overflow in mlp at layer ", w.layer);
  return out;
}

// ---------------------------------------------------------------------------
// Instrumented forward pass
// ---------------------------------------------------------------------------

// Half-open token range [begin, end).
struct AnswerSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const AnswerSpan&, const AnswerSpan&) = default;
};

struct ForwardOptions {
  bool keep_all_positions = false;         // fill ForwardState::keys_by_position
  std::optional<AnswerSpan> logprob_span;  // positions whose log-probs are wanted
};

struct ForwardState {
  std::vector<std::vector<float>> mlp_inputs;  // [layer] normed MLP input, final token
  std::vector<std::vector<float>> keys;        // [layer] key activations, final token
  std::vector<std::vector<std::vector<float>>> keys_by_position;  // [layer][pos]
  std::vector<std::vector<double>> head_norms;  // [layer][head], final token
  std::vector<double> token_logprobs;  // log p(tokens[t] | tokens[<t]) for t in span
  std::vector<std::vector<double>> span_logits;  // logits predicting each span token
};

inline ForwardState run_forward(const ModelBundle& model,
                                std::span<const std::int32_t> tokens,
                                const ForwardOptions& options = {}) {
  const ModelConfig& c = model.config;
  const std::size_t n = tokens.size();
  if (n == 0) fail(ErrorKind::kRange, "empty token list");
  if (n > c.max_seq_len)
    fail(ErrorKind::kRange, "sequence length ", n, " exceeds max_seq_len ", c.max_seq_len);
  for (auto t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab_size)
      fail(ErrorKind::kRange, "token id ", t, " outside vocabulary of ", c.vocab_size);
  if (options.logprob_span) {
    const AnswerSpan& s = *options.logprob_span;
    if (s.begin < 1 || s.begin >= s.end || s.end > n)
      fail(ErrorKind::kRange, "answer span [", s.begin, ", ", s.end,
           ") invalid for a sequence of length ", n);
  }

  const std::size_t d = c.d_model, hd = c.head_dim, nh = c.n_heads;
  const Tensor& embed_in = model.tensor(std::string(tensor_names::kEmbedIn));
  std::vector<std::vector<float>> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto r = embed_in.row(static_cast<std::size_t>(tokens[t]));
    x[t].assign(r.begin(), r.end());
  }

  ForwardState state;
  state.mlp_inputs.resize(c.n_layers);
  state.keys.resize(c.n_layers);
  state.head_norms.assign(c.n_layers, std::vector<double>(nh, 0.0));
  if (options.keep_all_positions) state.keys_by_position.resize(c.n_layers);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    using tensor_names::layer;
    const auto& attn_norm = model.tensor(layer(l, "attn_norm.scale")).data;
    const auto& wq = model.tensor(layer(l, "attn.w_q")).data;
    const auto& wk = model.tensor(layer(l, "attn.w_k")).data;
    const auto& wv = model.tensor(layer(l, "attn.w_v")).data;
    const Tensor& wo = model.tensor(layer(l, "attn.w_o"));

    std::vector<std::vector<float>> q(n, std::vector<float>(d)), k = q, v = q;
    for (std::size_t t = 0; t < n; ++t) {
      const auto a = detail::rms_norm(x[t], attn_norm, c.norm_eps);
      detail::matvec(wq, d, d, a, q[t]);
      detail::matvec(wk, d, d, a, k[t]);
      detail::matvec(wv, d, d, a, v[t]);
    }
    std::vector<std::vector<float>> concat(n, std::vector<float>(d));
    std::vector<double> weights(n);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t h = 0; h < nh; ++h) {
        const std::size_t off = h * hd;
        double max_score = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          double dot = 0.0;
          for (std::size_t e = 0; e < hd; ++e)
            dot += static_cast<double>(q[t][off + e]) * k[s][off + e];
          weights[s] = dot * scale;
          max_score = std::max(max_score, weights[s]);
        }
        double z = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          weights[s] = std::exp(weights[s] - max_score);
          z += weights[s];
        }
        for (std::size_t e = 0; e < hd; ++e) {
          double acc = 0.0;
          for (std::size_t s = 0; s <= t; ++s) acc += weights[s] * v[s][off + e];
          concat[t][off + e] = static_cast<float>(acc / z);
        }
      }
    }
    // Per-head contribution at the final token: w_o[:, head slice] . o_head.
    for (std::size_t h = 0; h < nh; ++h) {
      double sq = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t e = 0; e < hd; ++e)
          acc += static_cast<double>(wo.at(r, h * hd + e)) * concat[n - 1][h * hd + e];
        const float contrib = static_cast<float>(acc);
        sq += static_cast<double>(contrib) * contrib;
      }
      state.head_norms[l][h] = std::sqrt(sq);
    }
    std::vector<float> attn_out(d);
    for (std::size_t t = 0; t < n; ++t) {
      detail::matvec(wo.data, d, d, concat[t], attn_out);
      for (std::size_t e = 0; e < d; ++e) x[t][e] += attn_out[e];
    }

    const auto& mlp_norm = model.tensor(layer(l, "mlp_norm.scale")).data;
    const MlpWeights mlp = MlpWeights::of(model, l);
    if (options.keep_all_positions) state.keys_by_position[l].resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      auto h = detail::rms_norm(x[t], mlp_norm, c.norm_eps);
      MlpOutput out = mlp_forward(h, mlp);
      for (std::size_t e = 0; e < d; ++e) x[t][e] += out.m[e];
      if (!detail::all_finite(x[t]))
        fail(ErrorKind::kNumeric, "numeric overflow in residual stream at layer ", l);
      if (options.keep_all_positions) state.keys_by_position[l][t] = out.keys;
      if (t == n - 1) {
        state.mlp_inputs[l] = std::move(h);
        state.keys[l] = std::move(out.keys);
      }
    }
  }

  if (options.logprob_span) {
    const auto& final_norm = model.tensor(std::string(tensor_names::kFinalNorm)).data;
    const Tensor& embed_out = model.tensor(std::string(tensor_names::kEmbedOut));
    std::vector<double> logits(c.vocab_size);
    for (std::size_t t = options.logprob_span->begin; t < options.logprob_span->end; ++t) {
      const auto h = detail::rms_norm(x[t - 1], final_norm, c.norm_eps);
      double max_logit = -INFINITY;
      for (std::size_t tok = 0; tok < c.vocab_size; ++tok) {
        double acc = 0.0;
        const auto row = embed_out.row(tok);
        for (std::size_t e = 0; e < d; ++e) acc += static_cast<double>(row[e]) * h[e];
        logits[tok] = static_cast<double>(static_cast<float>(acc));
        max_logit = std::max(max_logit, logits[tok]);
      }
      double z = 0.0;
      for (double lg : logits) z += std::exp(lg - max_logit);
      const double lp = logits[static_cast<std::size_t>(tokens[t])] - max_logit - std::log(z);
      if (!std::isfinite(lp)) fail(ErrorKind::kNumeric, "non-finite log-probability");
      state.token_logprobs.push_back(lp);
      state.span_logits.push_back(logits);
    }
  }
  return state;
}

struct ForwardTrace {
  std::string item_id;
  std::size_t candidate_index = 0;
  std::size_t seq_len = 0;
  std::map<ProbeId, double> probe_values;
};

struct TraceOptions {
  // Divide the summed answer log-probability by the span length.
  bool length_normalized_loglik = false;
};

inline ForwardTrace trace_sequence(const ModelBundle& model,
                                   std::span<const std::int32_t> tokens,
                                   AnswerSpan answer_span,
                                   std::span<const ProbeId> probes,
                                   const TraceOptions& options = {}) {
  if (tokens.empty()) fail(ErrorKind::kRange, "empty token list");
  if (answer_span.begin >= answer_span.end || answer_span.end > tokens.size())
    fail(ErrorKind::kRange, "answer span [", answer_span.begin, ", ",
         answer_span.end, ") out of bounds for ", tokens.size(), " tokens");
  bool want_loglik = false;
  for (const ProbeId& p : probes) {
    check_probe(model.config, p);
    want_loglik |= p.kind == ProbeKind::kLogLikelihood;
  }
  ForwardOptions fo;
  if (want_loglik) fo.logprob_span = answer_span;
  const ForwardState state = run_forward(model, tokens, fo);

  ForwardTrace trace;
  trace.seq_len = tokens.size();
  for (const ProbeId& p : probes) {
    double value = 0.0;
    switch (p.kind) {
      case ProbeKind::kMlpKey: value = state.keys[p.layer][p.index]; break;
      case ProbeKind::kAttnHeadNorm: value = state.head_norms[p.layer][p.index]; break;
      case ProbeKind::kLogLikelihood: {
        for (double lp : state.token_logprobs) value += lp;
        if (options.length_normalized_loglik)
          value /= static_cast<double>(answer_span.size());
        break;
      }
    }
    trace.probe_values[p] = value;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Vocabulary projection
// ---------------------------------------------------------------------------

struct TokenScore {
  std::int32_t token_id = 0;
  double score = 0.0;
  friend bool operator==(const TokenScore&, const TokenScore&) = default;
};

// Top tokens of r = E v for the value vector of (layer, neuron), descending
// score, ties by ascending token id.
inline std::vector<TokenScore> project_to_vocab(const ModelBundle& model,
                                                std::size_t layer,
                                                std::size_t neuron,
                                                std::size_t top_k) {
  const ModelConfig& c = model.config;
  if (layer >= c.n_layers) fail(ErrorKind::kRange, "layer ", layer, " out of range");
  if (neuron >= c.d_ff) fail(ErrorKind::kRange, "neuron ", neuron, " out of range");
  if (top_k > c.vocab_size)
    fail(ErrorKind::kRange, "top_k ", top_k, " exceeds vocab size ", c.vocab_size);
  const auto v = MlpWeights::of(model, layer).value_vector(neuron);
  const Tensor& e = model.tensor(std::string(tensor_names::kEmbedOut));
  std::vector<TokenScore> scores(c.vocab_size);
  for (std::size_t tok = 0; tok < c.vocab_size; ++tok) {
    double acc = 0.0;
    const auto row = e.row(tok);
    for (std::size_t j = 0; j < c.d_model; ++j) acc += static_cast<double>(row[j]) * v[j];
    scores[tok] = {static_cast<std::int32_t>(tok), acc};
  }
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(top_k),
                    scores.end(), [](const TokenScore& a, const TokenScore& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.token_id < b.token_id;
                    });
  scores.resize(top_k);
  return scores;
}

}  // namespace truthv
