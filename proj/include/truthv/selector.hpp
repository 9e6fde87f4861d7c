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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/io_util.hpp"
#include "truthv/parallel.hpp"
#include "truthv/probe_records.hpp"

namespace truthv {

enum class Pattern { kArgmax, kArgmin, kCombined };

inline std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::kArgmax: return "argmax";
    case Pattern::kArgmin: return "argmin";
    case Pattern::kCombined: return "combined";
  }
  return "unknown";
}

inline Pattern parse_pattern(std::string_view s) {
  if (s == "argmax") return Pattern::kArgmax;
  if (s == "argmin") return Pattern::kArgmin;
  if (s == "combined") return Pattern::kCombined;
  fail(ErrorKind::kUsage, "unknown pattern '", s, "'");
}

inline void require_base_pattern(Pattern p) {
  if (p == Pattern::kCombined)
    fail(ErrorKind::kUsage, "pattern 'combined' is only valid when ensembling");
}

// Candidate holding the extreme value of `column` for this item. Ties go to
// the lowest candidate index under both patterns.
inline std::size_t arg_extreme(const RecordItem& item, std::size_t column,
                               std::size_t n_probes, Pattern pattern) {
  std::size_t best = 0;
  double best_v = item.value(0, column, n_probes);
  for (std::size_t j = 1; j < item.n_candidates; ++j) {
    const double v = item.value(j, column, n_probes);
    if (pattern == Pattern::kArgmax ? v > best_v : v < best_v) {
      best = j;
      best_v = v;
    }
  }
  return best;
}

struct ProbeScore {
  ProbeId probe;
  std::uint64_t correct = 0;
  std::uint64_t n_items = 0;
  std::size_t rank = 0;  // 1-based once ranked; 0 before

  double accuracy() const {
    return n_items == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n_items);
  }
  friend bool operator==(const ProbeScore&, const ProbeScore&) = default;
};

// Exact comparison of correct/n fractions.
inline int compare_accuracy(const ProbeScore& a, const ProbeScore& b) {
  const unsigned __int128 lhs = static_cast<unsigned __int128>(a.correct) * b.n_items;
  const unsigned __int128 rhs = static_cast<unsigned __int128>(b.correct) * a.n_items;
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

// Ranking order: higher accuracy first, then lower layer, lower index, kind.
inline bool ranks_before(const ProbeScore& a, const ProbeScore& b) {
  if (const int c = compare_accuracy(a, b); c != 0) return c > 0;
  if (a.probe.layer != b.probe.layer) return a.probe.layer < b.probe.layer;
  if (a.probe.index != b.probe.index) return a.probe.index < b.probe.index;
  return static_cast<int>(a.probe.kind) < static_cast<int>(b.probe.kind);
}

// Columns of `records` whose kind matches, or all columns.
inline std::vector<std::size_t> columns_of_kind(const ProbeRecordSet& records,
                                                std::optional<ProbeKind> kind) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < records.n_probes(); ++c)
    if (!kind || records.probe_index[c].kind == *kind) cols.push_back(c);
  return cols;
}

// Per-probe accuracy: fraction of items whose arg-extreme candidate is the
// label. Output follows the records' column order.
inline std::vector<ProbeScore> score_probes(const ProbeRecordSet& records, Pattern pattern,
                                            std::optional<ProbeKind> kind = std::nullopt) {
  require_base_pattern(pattern);
  for (const RecordItem& it : records.items)
    if (!it.label) fail(ErrorKind::kRange, "cannot score probes: item '", it.item_id,
                        "' is unlabeled");
  const std::vector<std::size_t> cols = columns_of_kind(records, kind);
  const std::size_t np = records.n_probes();
  std::vector<ProbeScore> scores(cols.size());
  constexpr std::size_t kChunk = 256;
  const std::size_t n_chunks = (cols.size() + kChunk - 1) / kChunk;
  parallel_for(n_chunks, [&](std::size_t chunk) {
    const std::size_t lo = chunk * kChunk, hi = std::min(cols.size(), lo + kChunk);
    std::vector<double> best(hi - lo);
    std::vector<std::size_t> arg(hi - lo);
    std::vector<std::uint64_t> correct(hi - lo, 0);
    for (const RecordItem& it : records.items) {
      for (std::size_t k = lo; k < hi; ++k) {
        best[k - lo] = it.value(0, cols[k], np);
        arg[k - lo] = 0;
      }
      for (std::size_t j = 1; j < it.n_candidates; ++j) {
        const double* row = it.values.data() + j * np;
        for (std::size_t k = lo; k < hi; ++k) {
          const double v = row[cols[k]];
          if (pattern == Pattern::kArgmax ? v > best[k - lo] : v < best[k - lo]) {
            best[k - lo] = v;
            arg[k - lo] = j;
          }
        }
      }
      for (std::size_t k = lo; k < hi; ++k) correct[k - lo] += arg[k - lo] == *it.label;
    }
    for (std::size_t k = lo; k < hi; ++k)
      scores[k] = {records.probe_index[cols[k]], correct[k - lo], records.items.size(), 0};
  });
  return scores;
}

struct Selection {
  Pattern pattern = Pattern::kArgmax;
  double p = 0.001;
  std::vector<ProbeScore> probes;  // descending accuracy, rank 1..n
  std::string source_dataset;
  std::size_t budget_n = 0;
  std::size_t total_probe_count = 0;

  std::vector<ProbeId> probe_ids() const {
    std::vector<ProbeId> ids;
    for (const auto& s : probes) ids.push_back(s.probe);
    return ids;
  }
  friend bool operator==(const Selection&, const Selection&) = default;
};

inline constexpr double kDefaultP = 0.001;

// max(1, floor(p * total)). The small relative slack keeps products such as
// 0.001 * 96000 from flooring to one less than the exact value.
inline std::size_t selection_size(double p, std::size_t total) {
  if (!(p > 0.0 && p <= 1.0)) fail(ErrorKind::kRange, "p must lie in (0, 1], got ", p);
  const long double exact = static_cast<long double>(p) * static_cast<long double>(total);
  const auto n = static_cast<std::size_t>(std::floor(exact * (1.0L + 1e-12L)));
  return std::max<std::size_t>(1, std::min(n, total));
}

inline Selection select_top(std::vector<ProbeScore> scores, double p,
                            std::size_t total_probe_count, Pattern pattern,
                            std::string source_dataset = {}, std::size_t budget_n = 0) {
  require_base_pattern(pattern);
  if (scores.empty()) fail(ErrorKind::kRange, "cannot select from an empty score list");
  const std::size_t n = std::min(selection_size(p, total_probe_count), scores.size());
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n),
                    scores.end(), ranks_before);
  scores.resize(n);
  for (std::size_t r = 0; r < n; ++r) scores[r].rank = r + 1;
  return {pattern, p, std::move(scores), std::move(source_dataset), budget_n,
          total_probe_count};
}

// Scores `kind` columns of `budget` and keeps the top p of them.
inline Selection select_probes(const ProbeRecordSet& budget, Pattern pattern, double p,
                               ProbeKind kind = ProbeKind::kMlpKey) {
  auto scores = score_probes(budget, pattern, kind);
  const std::size_t total = scores.size();
  if (total == 0)
    fail(ErrorKind::kStructural, "records for '", budget.dataset_name, "' contain no ",
         to_string(kind), " probes");
  return select_top(std::move(scores), p, total, pattern, budget.dataset_name,
                    budget.items.size());
}

inline ProbeRecordSet negated(const ProbeRecordSet& records) {
  ProbeRecordSet out = records;
  for (RecordItem& it : out.items)
    for (double& v : it.values) v = -v;
  return out;
}

struct NegationViolation {
  ProbeId probe;
  std::uint64_t argmin_correct = 0;
  std::uint64_t negated_argmax_correct = 0;
  std::size_t tied_items = 0;  // items where this probe's extreme is shared
};

struct NegationReport {
  std::size_t probes_checked = 0;
  std::size_t items_with_ties = 0;
  std::vector<NegationViolation> violations;
};

// Checks argmin(values) == argmax(-values) probe by probe and lists any probe
// where the two accuracies differ, with its count of tied items.
inline NegationReport negate_pattern_check(const ProbeRecordSet& records) {
  const auto direct = score_probes(records, Pattern::kArgmin);
  const auto flipped = score_probes(negated(records), Pattern::kArgmax);
  const std::size_t np = records.n_probes();
  NegationReport report;
  report.probes_checked = direct.size();
  auto tied = [&](const RecordItem& it, std::size_t c) {
    std::size_t lo = 0, hi = 0;
    const double mn = it.value(arg_extreme(it, c, np, Pattern::kArgmin), c, np);
    const double mx = it.value(arg_extreme(it, c, np, Pattern::kArgmax), c, np);
    for (std::size_t j = 0; j < it.n_candidates; ++j) {
      lo += it.value(j, c, np) == mn;
      hi += it.value(j, c, np) == mx;
    }
    return lo > 1 || hi > 1;
  };
  for (const RecordItem& it : records.items)
    for (std::size_t c = 0; c < np; ++c)
      if (tied(it, c)) {
        ++report.items_with_ties;
        break;
      }
  for (std::size_t c = 0; c < direct.size(); ++c) {
    if (direct[c].correct == flipped[c].correct) continue;
    NegationViolation v{direct[c].probe, direct[c].correct, flipped[c].correct, 0};
    for (const RecordItem& it : records.items) v.tied_items += tied(it, c);
    report.violations.push_back(v);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Selection file
// ---------------------------------------------------------------------------

inline std::string selection_to_text(const Selection& s) {
  OrderedJson header;
  header["pattern"] = std::string(to_string(s.pattern));
  header["p"] = s.p;
  header["source_dataset"] = s.source_dataset;
  header["budget_n"] = s.budget_n;
  header["total_probes"] = s.total_probe_count;
  std::string out = header.dump() + "\n";
  for (const ProbeScore& ps : s.probes) {
    OrderedJson j;
    j["kind"] = std::string(to_string(ps.probe.kind));
    j["layer"] = ps.probe.layer;
    j["index"] = ps.probe.index;
    j["accuracy_num"] = ps.correct;
    j["accuracy_den"] = ps.n_items;
    j["rank"] = ps.rank;
    out += j.dump() + "\n";
  }
  return out;
}

inline Selection selection_from_text(std::string_view text) {
  const auto lines = io::split_lines(text);
  if (lines.empty()) fail(ErrorKind::kFormat, "selection: empty file");
  const Json h = io::parse_json_line(lines[0], 1, "selection");
  constexpr std::string_view ctx = "selection header";
  Selection s;
  s.pattern = parse_pattern(io::get_field<std::string>(h, "pattern", ctx));
  require_base_pattern(s.pattern);
  s.p = io::get_field<double>(h, "p", ctx);
  s.source_dataset = io::get_field<std::string>(h, "source_dataset", ctx);
  s.budget_n = io::get_field<std::size_t>(h, "budget_n", ctx);
  s.total_probe_count = io::get_field<std::size_t>(h, "total_probes", ctx);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const Json j = io::parse_json_line(lines[ln], ln + 1, "selection");
    const std::string lctx = "selection line " + std::to_string(ln + 1);
    ProbeScore ps;
    ps.probe.kind = parse_probe_kind(io::get_field<std::string>(j, "kind", lctx));
    ps.probe.layer = io::get_field<std::size_t>(j, "layer", lctx);
    ps.probe.index = io::get_field<std::size_t>(j, "index", lctx);
    ps.correct = io::get_field<std::uint64_t>(j, "accuracy_num", lctx);
    ps.n_items = io::get_field<std::uint64_t>(j, "accuracy_den", lctx);
    ps.rank = io::get_field<std::size_t>(j, "rank", lctx);
    if (ps.rank != ln) fail(ErrorKind::kFormat, lctx, ": rank ", ps.rank, " out of order");
    s.probes.push_back(ps);
  }
  if (s.probes.empty()) fail(ErrorKind::kFormat, "selection: no probes");
  return s;
}

inline void write_selection(const Selection& s, const std::filesystem::path& path) {
  io::write_file(path, selection_to_text(s));
}

inline Selection read_selection(const std::filesystem::path& path) {
  try {
    return selection_from_text(io::read_file(path));
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

}  // namespace truthv
