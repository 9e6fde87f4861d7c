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
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/io_util.hpp"
#include "truthv/mcq_data.hpp"
#include "truthv/probe_records.hpp"
#include "truthv/rng.hpp"
#include "truthv/selector.hpp"

namespace truthv {

// ---------------------------------------------------------------------------
// Planted records
// ---------------------------------------------------------------------------

struct PlantedProbe {
  ProbeId probe;
  Pattern pattern = Pattern::kArgmax;
  double reliability = 1.0;  // P(extreme lands on the label) per item
};

struct PlantSpec {
  std::string name = "synthetic";
  std::vector<PlantedProbe> planted;
  std::size_t noise_probe_count = 0;
  std::size_t n_items = 100;
  std::size_t m_candidates = 4;
  double baseline_spread = 0.0;  // per-(item, probe) offset drawn from +-spread
  std::uint64_t seed = 0;
  std::size_t layer_width = 1000;  // noise ids fill (layer, index) rows of this width

  void validate() const {
    if (n_items == 0) fail(ErrorKind::kRange, "plant spec: n_items must be >= 1");
    if (m_candidates == 0) fail(ErrorKind::kRange, "plant spec: m_candidates must be >= 1");
    if (layer_width == 0) fail(ErrorKind::kRange, "plant spec: layer_width must be >= 1");
    if (!(baseline_spread >= 0.0) || !std::isfinite(baseline_spread))
      fail(ErrorKind::kRange, "plant spec: baseline_spread must be finite and >= 0");
    std::set<ProbeId> ids;
    for (const PlantedProbe& p : planted) {
      if (!(p.reliability >= 0.0 && p.reliability <= 1.0))
        fail(ErrorKind::kRange, "plant spec: reliability ", p.reliability, " outside [0, 1]");
      require_base_pattern(p.pattern);
      if (!ids.insert(p.probe).second)
        fail(ErrorKind::kRange, "plant spec: duplicate planted probe ", to_string(p.probe));
    }
  }

  // Noise ids: the first noise_probe_count mlp_key ids in (layer, index)
  // order over rows of layer_width, skipping planted ids.
  std::vector<ProbeId> noise_probes() const {
    std::set<ProbeId> planted_ids;
    for (const PlantedProbe& p : planted) planted_ids.insert(p.probe);
    std::vector<ProbeId> out;
    for (std::size_t k = 0; out.size() < noise_probe_count; ++k) {
      const ProbeId id = ProbeId::mlp_key(k / layer_width, k % layer_width);
      if (!planted_ids.count(id)) out.push_back(id);
    }
    return out;
  }
};

inline PlantSpec plant_spec_from_json(const Json& j) {
  constexpr std::string_view ctx = "plant spec";
  PlantSpec s;
  if (j.contains("name")) s.name = io::get_field<std::string>(j, "name", ctx);
  s.noise_probe_count = io::get_field<std::size_t>(j, "noise_probe_count", ctx);
  s.n_items = io::get_field<std::size_t>(j, "n_items", ctx);
  s.m_candidates = io::get_field<std::size_t>(j, "m_candidates", ctx);
  if (j.contains("baseline_spread")) s.baseline_spread = io::get_field<double>(j, "baseline_spread", ctx);
  if (j.contains("seed")) s.seed = io::get_field<std::uint64_t>(j, "seed", ctx);
  if (j.contains("layer_width")) s.layer_width = io::get_field<std::size_t>(j, "layer_width", ctx);
  if (j.contains("planted")) {
    for (const Json& pj : j.at("planted")) {
      PlantedProbe p;
      p.probe = probe_from_json(pj);
      if (pj.contains("pattern")) p.pattern = parse_pattern(io::get_field<std::string>(pj, "pattern", ctx));
      if (pj.contains("reliability")) p.reliability = io::get_field<double>(pj, "reliability", ctx);
      s.planted.push_back(p);
    }
  }
  s.validate();
  return s;
}

struct SynthRecords {
  ProbeRecordSet records;
  Dataset dataset;
};

inline SynthRecords gen_records(const PlantSpec& spec) {
  spec.validate();
  struct Column {
    ProbeId id;
    const PlantedProbe* plant;
  };
  std::vector<Column> columns;
  for (const PlantedProbe& p : spec.planted) columns.push_back({p.probe, &p});
  for (const ProbeId& id : spec.noise_probes()) columns.push_back({id, nullptr});
  std::sort(columns.begin(), columns.end(),
            [](const Column& a, const Column& b) { return a.id < b.id; });

  SynthRecords out;
  out.records.dataset_name = spec.name;
  for (const Column& c : columns) out.records.probe_index.push_back(c.id);
  out.dataset.name = spec.name;
  out.dataset.split = Split::kTrain;

  const std::size_t m = spec.m_candidates, np = columns.size();
  Rng rng(spec.seed);
  std::vector<double> u(m);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    char num[16];
    std::snprintf(num, sizeof(num), "%06zu", i);
    const std::string id = spec.name + "-" + num;
    const auto label = static_cast<std::size_t>(rng.below(m));
    RecordItem item{id, label, m, std::vector<double>(m * np)};
    for (std::size_t c = 0; c < np; ++c) {
      const double base =
          spec.baseline_spread > 0.0 ? rng.uniform(-spec.baseline_spread, spec.baseline_spread) : 0.0;
      for (std::size_t j = 0; j < m; ++j) u[j] = rng.normal();
      if (const PlantedProbe* plant = columns[c].plant; plant && m > 1) {
        std::size_t target = label;
        if (!rng.bernoulli(plant->reliability)) {
          target = static_cast<std::size_t>(rng.below(m - 1));
          if (target >= label) ++target;
        }
        const auto ext = plant->pattern == Pattern::kArgmax
                             ? std::max_element(u.begin(), u.end())
                             : std::min_element(u.begin(), u.end());
        std::iter_swap(ext, u.begin() + static_cast<std::ptrdiff_t>(target));
      }
      for (std::size_t j = 0; j < m; ++j) item.values[j * np + c] = base + u[j];
    }
    out.records.items.push_back(std::move(item));

    McqItem q{id, "question " + std::to_string(i), {}, label};
    for (std::size_t j = 0; j < m; ++j) q.candidates.push_back("answer " + std::to_string(j));
    out.dataset.items.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

// Gaussian weights: embeddings N(0, 1), projections N(0, 1/d_in), norm
// scales near 1.
inline ModelBundle gen_random_model(const ModelConfig& config, std::uint64_t seed,
                                    double weight_scale = 1.0) {
  ModelBundle m = ModelBundle::zeros(config);
  Rng rng(seed);
  for (auto& [name, shape] : expected_tensor_shapes(config)) {
    Tensor& t = m.tensor(name);
    const bool is_norm = shape.size() == 1;
    const bool is_embed = name.rfind("embed.", 0) == 0;
    const double sd = is_embed ? 1.0 : weight_scale / std::sqrt(static_cast<double>(shape[1]));
    for (float& x : t.data)
      x = is_norm ? static_cast<float>(1.0 + 0.1 * rng.normal())
                  : static_cast<float>(sd * rng.normal());
  }
  return m;
}

enum class RigKind { kUniformLogits, kLabelTokensDominant, kPlantMlpNeuron };

inline std::string_view to_string(RigKind r) {
  switch (r) {
    case RigKind::kUniformLogits: return "uniform_logits";
    case RigKind::kLabelTokensDominant: return "label_tokens_dominant";
    case RigKind::kPlantMlpNeuron: return "plant_mlp_neuron";
  }
  return "unknown";
}

inline RigKind parse_rig(std::string_view s) {
  if (s == "uniform_logits") return RigKind::kUniformLogits;
  if (s == "label_tokens_dominant") return RigKind::kLabelTokensDominant;
  if (s == "plant_mlp_neuron") return RigKind::kPlantMlpNeuron;
  fail(ErrorKind::kUsage, "unknown rig '", s, "'");
}

struct Rig {
  RigKind kind = RigKind::kUniformLogits;
  std::size_t layer = 0;  // plant_mlp_neuron only
  std::size_t index = 0;
};

inline constexpr char kMarkerByte = '!';

// Labeled items whose correct candidate is an upper-case word ending in the
// marker byte and whose distractors are lower-case words ending in '.'.
inline Dataset gen_rigged_dataset(std::size_t n_items, std::size_t m_candidates,
                                  std::uint64_t seed, std::string name = "rigged") {
  if (n_items == 0 || m_candidates == 0)
    fail(ErrorKind::kRange, "rigged dataset needs items and candidates");
  Rng rng(seed);
  Dataset ds{std::move(name), "Pick the true statement.", Split::kTrain, {}};
  auto word = [&](char base) {
    std::string w;
    const std::size_t len = 3 + static_cast<std::size_t>(rng.below(5));
    for (std::size_t k = 0; k < len; ++k) w.push_back(static_cast<char>(base + rng.below(26)));
    return w;
  };
  for (std::size_t i = 0; i < n_items; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "rig-%05zu", i);
    McqItem it{id, "Which holds for " + word('a') + "?", {}, {}};
    const auto label = static_cast<std::size_t>(rng.below(m_candidates));
    for (std::size_t j = 0; j < m_candidates; ++j)
      it.candidates.push_back(j == label ? word('A') + kMarkerByte : word('a') + ".");
    it.label = label;
    ds.items.push_back(std::move(it));
  }
  return ds;
}

namespace detail {

inline void plant_neuron(ModelBundle& m, const Dataset& ds, const Rig& rig) {
  const ModelConfig& c = m.config;
  if (c.d_model < 2) fail(ErrorKind::kRig, "plant_mlp_neuron needs d_model >= 2");
  if (rig.layer >= c.n_layers)
    fail(ErrorKind::kRig, "plant layer ", rig.layer, " >= n_layers ", c.n_layers);
  if (rig.index >= c.d_ff) fail(ErrorKind::kRig, "plant index ", rig.index, " >= d_ff ", c.d_ff);
  if (c.vocab_size <= 255) fail(ErrorKind::kRig, "plant_mlp_neuron needs the byte vocabulary");
  std::optional<unsigned char> marker;
  for (const McqItem& it : ds.items) {
    if (!it.label) fail(ErrorKind::kRig, "item '", it.item_id, "' is unlabeled");
    const auto last = static_cast<unsigned char>(it.candidates[*it.label].back());
    if (!marker) marker = last;
    if (last != *marker)
      fail(ErrorKind::kRig, "correct candidates do not share a final marker byte (item '",
           it.item_id, "')");
  }
  for (const McqItem& it : ds.items)
    for (std::size_t j = 0; j < it.candidates.size(); ++j)
      if (j != *it.label && static_cast<unsigned char>(it.candidates[j].back()) == *marker)
        fail(ErrorKind::kRig, "distractor ", j, " of item '", it.item_id,
             "' ends with the marker byte");

  // Every token shares one embedding on dims 1.., so the final-position
  // state is the same for all sequences there. Dim 0 holds +1 for the marker
  // and -1 for every other token (equal norms), nothing writes dim 0 and
  // only the planted neuron reads it.
  Tensor& embed = m.tensor(std::string(tensor_names::kEmbedIn));
  const std::vector<float> shared(embed.row(0).begin(), embed.row(0).end());
  for (std::size_t t = 0; t < c.vocab_size; ++t)
    for (std::size_t e = 0; e < c.d_model; ++e)
      embed.at(t, e) = e == 0 ? (t == *marker ? 1.0f : -1.0f) : shared[e];
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (const char* leaf : {"attn.w_q", "attn.w_k", "attn.w_v"}) {
      Tensor& w = m.tensor(tensor_names::layer(l, leaf));
      for (std::size_t r = 0; r < c.d_model; ++r) w.at(r, 0) = 0.0f;
    }
    Tensor& wo = m.tensor(tensor_names::layer(l, "attn.w_o"));
    Tensor& wd = m.tensor(tensor_names::layer(l, "mlp.w_down"));
    for (std::size_t k = 0; k < c.d_model; ++k) wo.at(0, k) = 0.0f;
    for (std::size_t k = 0; k < c.d_ff; ++k) wd.at(0, k) = 0.0f;
    Tensor& wg = m.tensor(tensor_names::layer(l, "mlp.w_gate"));
    Tensor& wu = m.tensor(tensor_names::layer(l, "mlp.w_up"));
    for (std::size_t i = 0; i < c.d_ff; ++i) {
      wg.at(i, 0) = 0.0f;
      wu.at(i, 0) = 0.0f;
    }
    m.tensor(tensor_names::layer(l, "mlp_norm.scale")).data[0] = 1.0f;
  }
  Tensor& wg = m.tensor(tensor_names::layer(rig.layer, "mlp.w_gate"));
  Tensor& wu = m.tensor(tensor_names::layer(rig.layer, "mlp.w_up"));
  for (std::size_t e = 0; e < c.d_model; ++e) {
    wg.at(rig.index, e) = e == 0 ? 1.0f : 0.0f;
    wu.at(rig.index, e) = e == 0 ? 1.0f : 0.0f;
  }
  // Below the last layer the planted neuron's output would reach later
  // neurons, so its value vector is cleared there.
  if (rig.layer + 1 < c.n_layers) {
    Tensor& wd = m.tensor(tensor_names::layer(rig.layer, "mlp.w_down"));
    for (std::size_t r = 0; r < c.d_model; ++r) wd.at(r, rig.index) = 0.0f;
  }
}

inline void make_label_tokens_dominant(ModelBundle& m, const Dataset& ds) {
  const ModelConfig& c = m.config;
  if (c.vocab_size <= 255) fail(ErrorKind::kRig, "label_tokens_dominant needs the byte vocabulary");
  std::set<unsigned char> truthful_bytes;
  std::size_t longest = 0;
  for (const McqItem& it : ds.items) {
    if (!it.label) fail(ErrorKind::kRig, "item '", it.item_id, "' is unlabeled");
    for (char ch : it.candidates[*it.label]) truthful_bytes.insert(static_cast<unsigned char>(ch));
    longest = std::max(longest, it.candidates[*it.label].size());
  }
  for (const McqItem& it : ds.items)
    for (std::size_t j = 0; j < it.candidates.size(); ++j) {
      if (j == *it.label) continue;
      const bool separable = std::any_of(it.candidates[j].begin(), it.candidates[j].end(), [&](char ch) {
        return !truthful_bytes.count(static_cast<unsigned char>(ch));
      });
      if (!separable)
        fail(ErrorKind::kRig, "distractor ", j, " of item '", it.item_id,
             "' uses only bytes that also occur in correct answers");
    }
  // Every position sees the same residual e_0, so the logit of a truthful
  // byte is alpha * h_0 and every other logit is zero. A margin of
  // longest * ln|V| + 20 nats makes any distractor byte cost more than a
  // whole correct answer.
  for (auto& [name, t] : m.tensors) std::fill(t.data.begin(), t.data.end(), 0.0f);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    std::fill_n(m.tensor(tensor_names::layer(l, "attn_norm.scale")).data.begin(), c.d_model, 1.0f);
    std::fill_n(m.tensor(tensor_names::layer(l, "mlp_norm.scale")).data.begin(), c.d_model, 1.0f);
  }
  std::fill_n(m.tensor(std::string(tensor_names::kFinalNorm)).data.begin(), c.d_model, 1.0f);
  Tensor& embed = m.tensor(std::string(tensor_names::kEmbedIn));
  for (std::size_t t = 0; t < c.vocab_size; ++t) embed.at(t, 0) = 1.0f;
  const double h0 = 1.0 / std::sqrt(1.0 / static_cast<double>(c.d_model) + c.norm_eps);
  const double margin = static_cast<double>(longest) * std::log(static_cast<double>(c.vocab_size)) + 20.0;
  const auto alpha = static_cast<float>(margin / h0);
  Tensor& out = m.tensor(std::string(tensor_names::kEmbedOut));
  for (unsigned char b : truthful_bytes) out.at(b, 0) = alpha;
}

}  // namespace detail

inline ModelBundle gen_rigged_model(const ModelConfig& config, const Dataset& dataset,
                                    const Rig& rig, std::uint64_t seed = 0) {
  config.validate();
  ModelBundle m = gen_random_model(config, seed);
  switch (rig.kind) {
    case RigKind::kUniformLogits: {
      Tensor& out = m.tensor(std::string(tensor_names::kEmbedOut));
      std::fill(out.data.begin(), out.data.end(), 0.0f);
      break;
    }
    case RigKind::kLabelTokensDominant:
      detail::make_label_tokens_dominant(m, dataset);
      break;
    case RigKind::kPlantMlpNeuron:
      detail::plant_neuron(m, dataset, rig);
      break;
  }
  m.validate();
  return m;
}

}  // namespace truthv
