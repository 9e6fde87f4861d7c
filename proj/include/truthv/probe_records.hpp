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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/io_util.hpp"
#include "truthv/mcq_data.hpp"
#include "truthv/parallel.hpp"

namespace truthv {

// Probe values for one item: an M x n_probes row-major matrix.
struct RecordItem {
  std::string item_id;
  std::optional<std::size_t> label;
  std::size_t n_candidates = 0;
  std::vector<double> values;

  double value(std::size_t candidate, std::size_t column, std::size_t n_probes) const {
    return values[candidate * n_probes + column];
  }

  friend bool operator==(const RecordItem&, const RecordItem&) = default;
};

struct ProbeRecordSet {
  std::string dataset_name;
  std::vector<ProbeId> probe_index;
  std::vector<RecordItem> items;

  std::size_t n_probes() const { return probe_index.size(); }

  std::optional<std::size_t> find_column(const ProbeId& p) const {
    auto it = std::find(probe_index.begin(), probe_index.end(), p);
    if (it == probe_index.end()) return std::nullopt;
    return static_cast<std::size_t>(it - probe_index.begin());
  }

  std::size_t column(const ProbeId& p) const {
    auto c = find_column(p);
    if (!c) fail(ErrorKind::kStructural, "records for '", dataset_name,
                 "' have no column for probe ", to_string(p));
    return *c;
  }

  bool fully_labeled() const {
    return std::all_of(items.begin(), items.end(),
                       [](const RecordItem& it) { return it.label.has_value(); });
  }

  void validate() const {
    std::set<ProbeId> probes(probe_index.begin(), probe_index.end());
    if (probes.size() != probe_index.size())
      fail(ErrorKind::kFormat, "records: duplicate probe in probe index");
    std::set<std::string_view> ids;
    for (const RecordItem& it : items) {
      if (!ids.insert(it.item_id).second)
        fail(ErrorKind::kFormat, "records: duplicate item_id '", it.item_id, "'");
      if (it.n_candidates == 0)
        fail(ErrorKind::kFormat, "records: item '", it.item_id, "' has no candidates");
      if (it.values.size() != it.n_candidates * n_probes())
        fail(ErrorKind::kShape, "records: item '", it.item_id, "' has ",
             it.values.size(), " values, expected ", it.n_candidates, "x", n_probes());
      if (it.label && *it.label >= it.n_candidates)
        fail(ErrorKind::kRange, "records: item '", it.item_id, "' label out of range");
      for (std::size_t k = 0; k < it.values.size(); ++k)
        if (!std::isfinite(it.values[k]))
          fail(ErrorKind::kNumeric, "records: item '", it.item_id,
               "' has a non-finite value at flat offset ", k);
    }
  }

  // Same content with columns in canonical probe order.
  ProbeRecordSet canonicalized() const {
    std::vector<std::size_t> order(n_probes());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return probe_index[a] < probe_index[b];
    });
    ProbeRecordSet out{dataset_name, {}, {}};
    for (std::size_t c : order) out.probe_index.push_back(probe_index[c]);
    out.items.reserve(items.size());
    for (const RecordItem& it : items) {
      RecordItem r{it.item_id, it.label, it.n_candidates, {}};
      r.values.resize(it.values.size());
      for (std::size_t j = 0; j < it.n_candidates; ++j)
        for (std::size_t c = 0; c < order.size(); ++c)
          r.values[j * order.size() + c] = it.value(j, order[c], n_probes());
      out.items.push_back(std::move(r));
    }
    return out;
  }

  // Items at the given positions, in the given order.
  ProbeRecordSet subset(std::span<const std::size_t> positions) const {
    ProbeRecordSet out{dataset_name, probe_index, {}};
    for (std::size_t i : positions) out.items.push_back(items.at(i));
    return out;
  }

  friend bool operator==(const ProbeRecordSet&, const ProbeRecordSet&) = default;
};

// Seeded labeled subset of n items (ordered by item_id), for probe selection.
inline ProbeRecordSet sample_records(const ProbeRecordSet& records, std::size_t n,
                                     std::uint64_t seed) {
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < records.items.size(); ++i)
    if (records.items[i].label) labeled.push_back(i);
  if (n == 0) fail(ErrorKind::kRange, "budget must be at least 1");
  if (n > labeled.size())
    fail(ErrorKind::kRange, "budget of ", n, " exceeds the ", labeled.size(),
         " labeled items in '", records.dataset_name, "'");
  std::vector<std::size_t> chosen;
  for (std::size_t k : sample_indices(labeled.size(), n, seed)) chosen.push_back(labeled[k]);
  std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
    return records.items[a].item_id < records.items[b].item_id;
  });
  return records.subset(chosen);
}

// ---------------------------------------------------------------------------
// Capture
// ---------------------------------------------------------------------------

inline ProbeRecordSet capture(const ModelBundle& model, const Dataset& dataset,
                              std::span<const ProbeId> probes,
                              const TraceOptions& options = {}) {
  if (probes.empty()) fail(ErrorKind::kUsage, "capture needs at least one probe");
  std::vector<ProbeId> sorted(probes.begin(), probes.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const ProbeId& p : sorted) check_probe(model.config, p);

  ProbeRecordSet rec{dataset.name, sorted, {}};
  struct Job {
    std::size_t item;
    std::size_t candidate;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const McqItem& it = dataset.items[i];
    rec.items.push_back({it.item_id, it.label, it.candidates.size(),
                         std::vector<double>(it.candidates.size() * sorted.size())});
    for (std::size_t j = 0; j < it.candidates.size(); ++j) jobs.push_back({i, j});
  }
  const std::size_t np = sorted.size();
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job job = jobs[k];
    const McqItem& it = dataset.items[job.item];
    try {
      const Prompt p = assemble_prompt(dataset, it, job.candidate, model.config.max_seq_len);
      const ForwardTrace tr = trace_sequence(model, p.tokens, p.answer_span, sorted, options);
      double* row = rec.items[job.item].values.data() + job.candidate * np;
      for (std::size_t c = 0; c < np; ++c) row[c] = tr.probe_values.at(sorted[c]);
    } catch (const Error& e) {
      rethrow_with_context(e, "item '" + it.item_id + "' candidate " +
                                  std::to_string(job.candidate));
    }
  });
  return rec;
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

inline constexpr int kRecordsVersion = 1;

inline std::string records_to_text(const ProbeRecordSet& input) {
  input.validate();
  const ProbeRecordSet rec = input.canonicalized();
  std::string out;
  OrderedJson header;
  header["format"] = "truthv-records";
  header["version"] = kRecordsVersion;
  header["dataset"] = rec.dataset_name;
  header["probes"] = OrderedJson::array();
  for (const ProbeId& p : rec.probe_index) {
    OrderedJson pj;
    pj["kind"] = std::string(to_string(p.kind));
    if (p.has_position()) {
      pj["layer"] = p.layer;
      pj["index"] = p.index;
    }
    header["probes"].push_back(pj);
  }
  out += header.dump() + "\n";
  const std::size_t np = rec.n_probes();
  for (const RecordItem& it : rec.items) {
    OrderedJson j;
    j["item_id"] = it.item_id;
    if (it.label) j["label"] = *it.label;
    OrderedJson rows = OrderedJson::array();
    for (std::size_t r = 0; r < it.n_candidates; ++r) {
      OrderedJson row = OrderedJson::array();
      for (std::size_t c = 0; c < np; ++c) row.push_back(io::to_hexfloat(it.value(r, c, np)));
      rows.push_back(std::move(row));
    }
    j["values"] = std::move(rows);
    out += j.dump() + "\n";
  }
  OrderedJson trailer;
  trailer["end"]["items"] = rec.items.size();
  trailer["end"]["fnv1a64"] = io::hex64(io::fnv1a64(out));
  out += trailer.dump() + "\n";
  return out;
}

inline ProbeRecordSet records_from_text(std::string_view text) {
  const auto lines = io::split_lines(text);
  if (lines.empty()) fail(ErrorKind::kIntegrity, "records: empty file");
  const Json header = io::parse_json_line(lines[0], 1, "records");
  if (!header.is_object() || header.value("format", "") != "truthv-records")
    fail(ErrorKind::kFormat, "records: not a truthv records file");
  const auto version = io::get_field<long long>(header, "version", "records header");
  if (version != kRecordsVersion)
    fail(ErrorKind::kVersion, "records: unsupported version ", version);

  // Everything up to and including the newline before the trailer is hashed.
  const Json trailer = lines.size() >= 2
                           ? io::parse_json_line(lines.back(), lines.size(), "records")
                           : Json();
  if (!trailer.is_object() || !trailer.contains("end"))
    fail(ErrorKind::kIntegrity, "records: missing end marker (truncated file?)");
  const std::size_t body_len = static_cast<std::size_t>(lines.back().data() - text.data());
  const auto expected = io::get_field<std::string>(trailer["end"], "fnv1a64", "records trailer");
  if (io::hex64(io::fnv1a64(text.substr(0, body_len))) != expected)
    fail(ErrorKind::kIntegrity, "records: checksum mismatch");
  const auto n_items = io::get_field<std::size_t>(trailer["end"], "items", "records trailer");
  if (n_items != lines.size() - 2)
    fail(ErrorKind::kIntegrity, "records: trailer expects ", n_items, " items, found ",
         lines.size() - 2);

  ProbeRecordSet rec;
  rec.dataset_name = io::get_field<std::string>(header, "dataset", "records header");
  if (!header.contains("probes") || !header["probes"].is_array())
    fail(ErrorKind::kFormat, "records header: missing probes array");
  for (const Json& pj : header["probes"]) rec.probe_index.push_back(probe_from_json(pj));
  const std::size_t np = rec.n_probes();

  for (std::size_t ln = 1; ln + 1 < lines.size(); ++ln) {
    const Json j = io::parse_json_line(lines[ln], ln + 1, "records");
    const std::string ctx = "records line " + std::to_string(ln + 1);
    RecordItem it;
    it.item_id = io::get_field<std::string>(j, "item_id", ctx);
    if (j.contains("label") && !j["label"].is_null())
      it.label = io::get_field<std::size_t>(j, "label", ctx);
    const auto rows = io::get_field<std::vector<std::vector<std::string>>>(j, "values", ctx);
    it.n_candidates = rows.size();
    for (const auto& row : rows) {
      if (row.size() != np)
        fail(ErrorKind::kShape, ctx, ": ragged row with ", row.size(), " values, expected ", np);
      for (const auto& s : row) it.values.push_back(io::parse_hexfloat(s));
    }
    rec.items.push_back(std::move(it));
  }
  rec.validate();
  return rec;
}

// ---------------------------------------------------------------------------
// Binary format: "TVRC", u32 version, then little-endian fields; values are
// f64 so the binary form carries exactly the text form's content.
// ---------------------------------------------------------------------------

namespace detail {

class BinWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out_.append(reinterpret_cast<const char*>(buf), sizeof(T));
  }
  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    out_.append(s);
  }
  void put_raw(std::string_view s) { out_.append(s); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class BinReader {
 public:
  explicit BinReader(std::string_view data) : data_(data) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) fail(ErrorKind::kIntegrity, "records: truncated binary file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kBinaryMagic = "TVRC";

inline std::string records_to_binary(const ProbeRecordSet& input) {
  input.validate();
  const ProbeRecordSet rec = input.canonicalized();
  detail::BinWriter w;
  w.put_raw(kBinaryMagic);
  w.put<std::uint32_t>(kRecordsVersion);
  w.put_string(rec.dataset_name);
  w.put<std::uint64_t>(rec.n_probes());
  for (const ProbeId& p : rec.probe_index) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.kind));
    w.put<std::uint64_t>(p.layer);
    w.put<std::uint64_t>(p.index);
  }
  w.put<std::uint64_t>(rec.items.size());
  for (const RecordItem& it : rec.items) {
    w.put_string(it.item_id);
    w.put<std::int64_t>(it.label ? static_cast<std::int64_t>(*it.label) : -1);
    w.put<std::uint64_t>(it.n_candidates);
    for (double v : it.values) w.put<double>(v);
  }
  w.put<std::uint64_t>(io::fnv1a64(w.str()));
  return std::move(w.str());
}

inline ProbeRecordSet records_from_binary(std::string_view data) {
  if (data.substr(0, 4) != kBinaryMagic) fail(ErrorKind::kFormat, "records: bad magic");
  detail::BinReader r(data.substr(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kRecordsVersion)
    fail(ErrorKind::kVersion, "records: unsupported version ", version);
  if (data.size() < 12) fail(ErrorKind::kIntegrity, "records: truncated binary file");
  const std::uint64_t stored =
      detail::BinReader(data.substr(data.size() - 8)).get<std::uint64_t>();
  if (io::fnv1a64(data.substr(0, data.size() - 8)) != stored)
    fail(ErrorKind::kIntegrity, "records: checksum mismatch");

  ProbeRecordSet rec;
  rec.dataset_name = r.get_string();
  const auto np = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < np; ++i) {
    const auto kind = r.get<std::uint8_t>();
    if (kind > 2) fail(ErrorKind::kFormat, "records: bad probe kind ", int(kind));
    ProbeId p{static_cast<ProbeKind>(kind), r.get<std::uint64_t>(), r.get<std::uint64_t>()};
    rec.probe_index.push_back(p);
  }
  const auto n_items = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_items; ++i) {
    RecordItem it;
    it.item_id = r.get_string();
    const auto label = r.get<std::int64_t>();
    if (label >= 0) it.label = static_cast<std::size_t>(label);
    it.n_candidates = r.get<std::uint64_t>();
    if (it.n_candidates > data.size()) fail(ErrorKind::kIntegrity, "records: bad item size");
    it.values.resize(it.n_candidates * np);
    for (double& v : it.values) v = r.get<double>();
    rec.items.push_back(std::move(it));
  }
  if (r.pos() + 4 + 8 != data.size())
    fail(ErrorKind::kIntegrity, "records: trailing bytes in binary file");
  rec.validate();
  return rec;
}

// Binary when the path ends in ".tvrc", text otherwise.
inline void write_records(const ProbeRecordSet& rec, const std::filesystem::path& path) {
  io::write_file(path, path.extension() == ".tvrc" ? records_to_binary(rec)
                                                   : records_to_text(rec));
}

inline ProbeRecordSet read_records(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  try {
    if (std::string_view(data).substr(0, 4) == kBinaryMagic) return records_from_binary(data);
    return records_from_text(data);
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

}  // namespace truthv
