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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/io_util.hpp"
#include "truthv/rng.hpp"

namespace truthv {

// Byte-level tokenizer: ids 0..255 are raw bytes, then BOS and EOS.
struct ByteTokenizer {
  static constexpr std::int32_t kBos = 256;
  static constexpr std::int32_t kEos = 257;
  static constexpr std::size_t kVocabSize = 258;

  std::vector<std::int32_t> encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    return ids;
  }

  std::string decode(std::span<const std::int32_t> ids) const {
    std::string out;
    for (auto id : ids)
      if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    return out;
  }

  // Printable rendering of a single token for reports.
  std::string display(std::int32_t id) const {
    if (id == kBos) return "<bos>";
    if (id == kEos) return "<eos>";
    if (id < 0 || id > 255) return "<" + std::to_string(id) + ">";
    const auto c = static_cast<unsigned char>(id);
    if (c == '\\') return "\\\\";
    if (c >= 0x21 && c < 0x7f) return std::string(1, static_cast<char>(c));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "\\x%02x", c);
    return buf;
  }
};

struct McqItem {
  std::string item_id;
  std::string question;
  std::vector<std::string> candidates;
  std::optional<std::size_t> label;

  friend bool operator==(const McqItem&, const McqItem&) = default;
};

enum class Split { kTrain, kValidation, kLabeledBudget };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kLabeledBudget: return "labeled_budget";
  }
  return "unknown";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "labeled_budget") return Split::kLabeledBudget;
  fail(ErrorKind::kFormat, "unknown split '", s, "'");
}

struct Dataset {
  std::string name;
  std::string instruction;
  Split split = Split::kValidation;
  std::vector<McqItem> items;

  void validate() const {
    if (items.empty()) fail(ErrorKind::kFormat, "dataset '", name, "' has no items");
    std::set<std::string_view> seen;
    for (const McqItem& it : items) {
      if (!seen.insert(it.item_id).second)
        fail(ErrorKind::kFormat, "duplicate item_id '", it.item_id, "'");
      if (it.candidates.empty())
        fail(ErrorKind::kFormat, "item '", it.item_id, "' has no candidates");
      for (const auto& c : it.candidates)
        if (c.empty())
          fail(ErrorKind::kFormat, "item '", it.item_id, "' has an empty candidate");
      if (it.label && *it.label >= it.candidates.size())
        fail(ErrorKind::kRange, "item '", it.item_id, "' label ", *it.label,
             " out of range for ", it.candidates.size(), " candidates");
    }
  }

  bool fully_labeled() const {
    return std::all_of(items.begin(), items.end(),
                       [](const McqItem& it) { return it.label.has_value(); });
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Metadata sidecar path for an items file: "<stem>.dataset.json" next to it.
// load_dataset also accepts a plain "dataset.json" in the same directory.
inline std::filesystem::path sidecar_path(const std::filesystem::path& items_path) {
  return items_path.parent_path() / (items_path.stem().string() + ".dataset.json");
}

inline McqItem item_from_json(const Json& j, std::size_t line_no) {
  const std::string ctx = "dataset line " + std::to_string(line_no);
  McqItem it;
  it.item_id = io::get_field<std::string>(j, "item_id", ctx);
  it.question = io::get_field<std::string>(j, "question", ctx);
  it.candidates = io::get_field<std::vector<std::string>>(j, "candidates", ctx);
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_number_integer() || j["label"].get<long long>() < 0)
      fail(ErrorKind::kFormat, ctx, ": label must be a non-negative integer");
    it.label = j["label"].get<std::size_t>();
  }
  if (it.candidates.empty())
    fail(ErrorKind::kFormat, ctx, ": item '", it.item_id, "' has an empty candidates list");
  return it;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  Dataset ds;
  ds.name = path.stem().string();
  std::filesystem::path meta = sidecar_path(path);
  if (!std::filesystem::exists(meta)) meta = path.parent_path() / "dataset.json";
  if (std::filesystem::exists(meta)) {
    Json j;
    try {
      j = Json::parse(io::read_file(meta));
    } catch (const Json::exception& e) {
      fail(ErrorKind::kFormat, meta.string(), ": ", e.what());
    }
    ds.name = io::get_field<std::string>(j, "name", "dataset sidecar");
    ds.instruction = io::get_field<std::string>(j, "instruction", "dataset sidecar");
    ds.split = parse_split(io::get_field<std::string>(j, "split", "dataset sidecar"));
  }
  const std::string text = io::read_file(path);
  std::size_t line_no = 0;
  for (std::string_view line : io::split_lines(text)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    ds.items.push_back(item_from_json(io::parse_json_line(line, line_no, "dataset"), line_no));
  }
  ds.validate();
  return ds;
}

inline std::string serialize_items(const Dataset& ds) {
  std::string out;
  for (const McqItem& it : ds.items) {
    OrderedJson j;
    j["item_id"] = it.item_id;
    j["question"] = it.question;
    j["candidates"] = it.candidates;
    if (it.label) j["label"] = *it.label;
    out += j.dump() + "\n";
  }
  return out;
}

// Writes the items file and its "<stem>.dataset.json" sidecar.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  io::write_file(path, serialize_items(ds));
  OrderedJson meta;
  meta["name"] = ds.name;
  meta["instruction"] = ds.instruction;
  meta["split"] = std::string(to_string(ds.split));
  io::write_file(sidecar_path(path), meta.dump(2) + "\n");
}

struct Prompt {
  std::vector<std::int32_t> tokens;
  AnswerSpan answer_span;
};

// BOS + bytes of (instruction "\n")? question "\n" candidate. The prefix
// before the candidate is identical across an item's candidates.
inline Prompt assemble_prompt(const Dataset& ds, const McqItem& item,
                              std::size_t candidate_index,
                              std::size_t max_seq_len) {
  if (candidate_index >= item.candidates.size())
    fail(ErrorKind::kRange, "candidate ", candidate_index, " out of range for item '",
         item.item_id, "'");
  const ByteTokenizer tok;
  std::string prefix;
  if (!ds.instruction.empty()) prefix = ds.instruction + "\n";
  prefix += item.question + "\n";
  Prompt p;
  p.tokens.push_back(ByteTokenizer::kBos);
  const auto pre = tok.encode(prefix);
  p.tokens.insert(p.tokens.end(), pre.begin(), pre.end());
  p.answer_span.begin = p.tokens.size();
  const auto ans = tok.encode(item.candidates[candidate_index]);
  p.tokens.insert(p.tokens.end(), ans.begin(), ans.end());
  p.answer_span.end = p.tokens.size();
  if (p.tokens.size() > max_seq_len)
    fail(ErrorKind::kRange, "prompt for item '", item.item_id, "' candidate ",
         candidate_index, " has ", p.tokens.size(), " tokens, exceeding max_seq_len ",
         max_seq_len, " (truncation refused)");
  return p;
}

// Sorted indices of n distinct positions drawn from [0, count).
inline std::vector<std::size_t> sample_indices(std::size_t count, std::size_t n,
                                               std::uint64_t seed) {
  if (n > count) fail(ErrorKind::kRange, "cannot sample ", n, " of ", count, " items");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(count - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Seeded subset of n labeled items, ordered by item_id.
inline Dataset sample_budget(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  std::vector<const McqItem*> labeled;
  for (const McqItem& it : ds.items)
    if (it.label) labeled.push_back(&it);
  if (n > labeled.size())
    fail(ErrorKind::kRange, "budget of ", n, " exceeds the ", labeled.size(),
         " labeled items in '", ds.name, "'");
  if (n == 0) fail(ErrorKind::kRange, "budget must be at least 1");
  Dataset out{ds.name, ds.instruction, Split::kLabeledBudget, {}};
  for (std::size_t i : sample_indices(labeled.size(), n, seed))
    out.items.push_back(*labeled[i]);
  std::sort(out.items.begin(), out.items.end(),
            [](const McqItem& a, const McqItem& b) { return a.item_id < b.item_id; });
  return out;
}

}  // namespace truthv
