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
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "truthv/ensemble.hpp"
#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/mcq_data.hpp"
#include "truthv/probe_records.hpp"
#include "truthv/selector.hpp"

namespace truthv {

namespace detail {

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

// Mean of 1/M over items: the accuracy of uniform guessing.
inline double random_guess(const ProbeRecordSet& records) {
  if (records.items.empty()) return 0.0;
  double sum = 0.0;
  for (const RecordItem& it : records.items) sum += 1.0 / static_cast<double>(it.n_candidates);
  return sum / static_cast<double>(records.items.size());
}

// ---------------------------------------------------------------------------
// Ranking curve
// ---------------------------------------------------------------------------

struct CurveRow {
  std::size_t rank = 0;
  ProbeId probe;
  ProbeScore argmax;
  ProbeScore argmin;
};

struct RankingCurve {
  std::vector<CurveRow> rows;  // ordered by argmax rank
  double random_guess = 0.0;
};

inline RankingCurve ranking_curve(std::span<const ProbeScore> argmax_scores,
                                  std::span<const ProbeScore> argmin_scores,
                                  double guess) {
  if (argmax_scores.size() != argmin_scores.size())
    fail(ErrorKind::kStructural, "ranking curve: score lists differ in length");
  std::map<ProbeId, std::size_t> min_pos;
  for (std::size_t i = 0; i < argmin_scores.size(); ++i) min_pos[argmin_scores[i].probe] = i;
  std::vector<ProbeScore> ordered(argmax_scores.begin(), argmax_scores.end());
  std::sort(ordered.begin(), ordered.end(), ranks_before);
  RankingCurve curve;
  curve.random_guess = guess;
  for (std::size_t r = 0; r < ordered.size(); ++r) {
    auto it = min_pos.find(ordered[r].probe);
    if (it == min_pos.end())
      fail(ErrorKind::kStructural, "ranking curve: probe ", to_string(ordered[r].probe),
           " missing from argmin scores");
    curve.rows.push_back({r + 1, ordered[r].probe, ordered[r], argmin_scores[it->second]});
  }
  return curve;
}

inline RankingCurve ranking_curve(const ProbeRecordSet& records,
                                  ProbeKind kind = ProbeKind::kMlpKey) {
  return ranking_curve(score_probes(records, Pattern::kArgmax, kind),
                       score_probes(records, Pattern::kArgmin, kind), random_guess(records));
}

inline std::string to_tsv(const RankingCurve& c) {
  std::string out = "rank\tkind\tlayer\tindex\tacc_argmax\tacc_argmin\trandom_guess\n";
  for (const CurveRow& r : c.rows)
    out += std::to_string(r.rank) + "\t" + std::string(to_string(r.probe.kind)) + "\t" +
           std::to_string(r.probe.layer) + "\t" + std::to_string(r.probe.index) + "\t" +
           detail::fmt6(r.argmax.accuracy()) + "\t" + detail::fmt6(r.argmin.accuracy()) + "\t" +
           detail::fmt6(c.random_guess) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Layer histogram
// ---------------------------------------------------------------------------

struct LayerHistogram {
  double fraction_used = 0.0;
  std::vector<std::size_t> counts;  // counts[layer]
  Pattern pattern = Pattern::kArgmax;
  std::size_t total_selected = 0;

  // Sums histograms from several datasets over the same model.
  LayerHistogram& operator+=(const LayerHistogram& o) {
    if (counts.size() < o.counts.size()) counts.resize(o.counts.size(), 0);
    for (std::size_t l = 0; l < o.counts.size(); ++l) counts[l] += o.counts[l];
    total_selected += o.total_selected;
    return *this;
  }
};

inline LayerHistogram layer_histogram(std::span<const ProbeScore> scores, double fraction,
                                      std::size_t n_layers, Pattern pattern) {
  const Selection sel = select_top(std::vector<ProbeScore>(scores.begin(), scores.end()),
                                   fraction, scores.size(), pattern);
  LayerHistogram h{fraction, std::vector<std::size_t>(n_layers, 0), pattern, sel.probes.size()};
  for (const ProbeScore& ps : sel.probes) {
    if (ps.probe.layer >= n_layers)
      fail(ErrorKind::kRange, "probe ", to_string(ps.probe), " beyond ", n_layers, " layers");
    ++h.counts[ps.probe.layer];
  }
  return h;
}

inline std::string to_tsv(const LayerHistogram& h) {
  std::string out = "layer\tcount\tpattern\tfraction\ttotal_selected\n";
  for (std::size_t l = 0; l < h.counts.size(); ++l)
    out += std::to_string(l) + "\t" + std::to_string(h.counts[l]) + "\t" +
           std::string(to_string(h.pattern)) + "\t" + detail::fmt6(h.fraction_used) + "\t" +
           std::to_string(h.total_selected) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Truthful vs. untruthful value distributions
// ---------------------------------------------------------------------------

// Probability that a random positive exceeds a random negative, counting
// ties as one half (Mann-Whitney with mid-ranks).
inline double auroc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) return 0.5;
  struct Entry {
    double v;
    bool pos;
  };
  std::vector<Entry> pooled;
  for (double v : positives) pooled.push_back({v, true});
  for (double v : negatives) pooled.push_back({v, false});
  std::sort(pooled.begin(), pooled.end(), [](const Entry& a, const Entry& b) { return a.v < b.v; });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].v == pooled[i].v) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].pos) pos_rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct DistributionSummary {
  ProbeId probe;
  std::vector<double> truthful_values;
  std::vector<double> untruthful_values;
  double auroc = 0.5;
  double within_item_accuracy = 0.0;
};

inline DistributionSummary activation_distributions(const ProbeRecordSet& records,
                                                    const ProbeId& probe,
                                                    Pattern pattern = Pattern::kArgmax) {
  const std::size_t col = records.column(probe), np = records.n_probes();
  DistributionSummary s;
  s.probe = probe;
  for (const RecordItem& it : records.items) {
    if (it.n_candidates != 2)
      fail(ErrorKind::kRange, "overlap analysis needs two candidates; item '", it.item_id,
           "' has ", it.n_candidates);
    if (!it.label) fail(ErrorKind::kRange, "item '", it.item_id, "' is unlabeled");
    s.truthful_values.push_back(it.value(*it.label, col, np));
    s.untruthful_values.push_back(it.value(1 - *it.label, col, np));
  }
  s.auroc = auroc(s.truthful_values, s.untruthful_values);
  const Voter voter{probe, pattern};
  const Method m = pattern == Pattern::kArgmax ? Method::kTruthvArgmax : Method::kTruthvArgmin;
  s.within_item_accuracy = score_predictions(records, predict_all(records, std::span(&voter, 1), m), m).accuracy;
  return s;
}

inline std::string to_tsv(const DistributionSummary& s) {
  std::string out = "kind\tlayer\tindex\titem\ttruthful\tuntruthful\tauroc\twithin_item_accuracy\n";
  for (std::size_t i = 0; i < s.truthful_values.size(); ++i)
    out += std::string(to_string(s.probe.kind)) + "\t" + std::to_string(s.probe.layer) + "\t" +
           std::to_string(s.probe.index) + "\t" + std::to_string(i) + "\t" +
           io::to_hexfloat(s.truthful_values[i]) + "\t" + io::to_hexfloat(s.untruthful_values[i]) +
           "\t" + detail::fmt6(s.auroc) + "\t" + detail::fmt6(s.within_item_accuracy) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Budget scaling
// ---------------------------------------------------------------------------

struct BudgetOptions {
  double p = kDefaultP;
  std::vector<double> p_grid;  // searched for the full budget; empty = {p}
  Pattern pattern = Pattern::kArgmax;
  ProbeKind kind = ProbeKind::kMlpKey;
  std::uint64_t seed = 0;
  bool require_disjoint = true;
};

struct BudgetRow {
  std::optional<std::size_t> budget;  // nullopt = full selection pool
  std::size_t budget_n = 0;
  double p_used = 0.0;
  EvalReport report;
  double p_grid_min = 0.0;
  double p_grid_max = 0.0;
};

// Default grid: 0.01% .. 1% of probes.
inline std::vector<double> default_p_grid() {
  return {0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01};
}

// Selects on each budget drawn from `pool` and evaluates on `eval`. For the
// full pool the best accuracy over the p grid is reported.
inline std::vector<BudgetRow> budget_scaling(const ProbeRecordSet& pool,
                                             const ProbeRecordSet& eval,
                                             std::span<const std::optional<std::size_t>> budgets,
                                             const BudgetOptions& opt) {
  require_base_pattern(opt.pattern);
  if (opt.require_disjoint) {
    std::set<std::string_view> ids;
    for (const RecordItem& it : pool.items) ids.insert(it.item_id);
    for (const RecordItem& it : eval.items)
      if (ids.count(it.item_id))
        fail(ErrorKind::kRange, "budget pool and evaluation split share item '",
             it.item_id, "'");
  }
  const std::vector<double> grid = opt.p_grid.empty() ? std::vector<double>{opt.p} : opt.p_grid;
  const auto [gmin, gmax] = std::minmax_element(grid.begin(), grid.end());
  std::vector<BudgetRow> rows;
  for (const auto& b : budgets) {
    BudgetRow row;
    row.budget = b;
    row.p_grid_min = *gmin;
    row.p_grid_max = *gmax;
    if (b) {
      const ProbeRecordSet sample = sample_records(pool, *b, opt.seed);
      row.budget_n = *b;
      row.p_used = opt.p;
      row.report = evaluate(eval, select_probes(sample, opt.pattern, opt.p, opt.kind));
    } else {
      row.budget_n = pool.items.size();
      const auto scores = score_probes(pool, opt.pattern, opt.kind);
      bool first = true;
      for (double p : grid) {
        Selection sel = select_top(scores, p, scores.size(), opt.pattern, pool.dataset_name,
                                   pool.items.size());
        EvalReport r = evaluate(eval, sel);
        if (first || r.n_correct > row.report.n_correct) {
          row.report = std::move(r);
          row.p_used = p;
          first = false;
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string to_tsv(std::span<const BudgetRow> rows) {
  std::string out = "budget\tbudget_n\tp\taccuracy\tp_grid_min\tp_grid_max\n";
  for (const BudgetRow& r : rows) {
    char p[32], lo[32], hi[32];
    std::snprintf(p, sizeof(p), "%g", r.p_used);
    std::snprintf(lo, sizeof(lo), "%g", r.p_grid_min);
    std::snprintf(hi, sizeof(hi), "%g", r.p_grid_max);
    out += (r.budget ? std::to_string(*r.budget) : std::string("all")) + "\t" +
           std::to_string(r.budget_n) + "\t" + p + "\t" + detail::fmt6(r.report.accuracy) +
           "\t" + lo + "\t" + hi + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-dataset transfer
// ---------------------------------------------------------------------------

struct TransferCell {
  std::string source_dataset;
  std::string target_dataset;
  double accuracy = 0.0;
  double random_guess = 0.0;
};

inline std::vector<TransferCell> transfer_matrix(std::span<const ProbeRecordSet> record_sets,
                                                 double p, Pattern pattern,
                                                 ProbeKind kind = ProbeKind::kMlpKey) {
  require_base_pattern(pattern);
  if (record_sets.empty()) fail(ErrorKind::kUsage, "transfer needs at least one record set");
  auto universe = [&](const ProbeRecordSet& r) {
    std::vector<ProbeId> ids;
    for (const ProbeId& pid : r.probe_index)
      if (pid.kind == kind) ids.push_back(pid);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto reference = universe(record_sets.front());
  for (const ProbeRecordSet& r : record_sets)
    if (universe(r) != reference)
      fail(ErrorKind::kStructural, "record set '", r.dataset_name,
           "' has a different probe universe from '", record_sets.front().dataset_name, "'");
  std::vector<TransferCell> cells;
  for (const ProbeRecordSet& source : record_sets) {
    const Selection sel = select_probes(source, pattern, p, kind);
    for (const ProbeRecordSet& target : record_sets)
      cells.push_back({source.dataset_name, target.dataset_name,
                       evaluate(target, sel).accuracy, random_guess(target)});
  }
  return cells;
}

inline std::string to_tsv(std::span<const TransferCell> cells) {
  std::string out = "source\ttarget\taccuracy\trandom_guess\n";
  for (const TransferCell& c : cells)
    out += c.source_dataset + "\t" + c.target_dataset + "\t" + detail::fmt6(c.accuracy) + "\t" +
           detail::fmt6(c.random_guess) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary report
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultVocabTopK = 10;

struct VocabEntry {
  ProbeId probe;
  std::size_t rank = 0;
  std::vector<TokenScore> tokens;
  std::vector<float> value_vector;  // filled when requested
};

inline std::vector<VocabEntry> vocab_report(const ModelBundle& model, const Selection& selection,
                                            std::size_t top_k = kDefaultVocabTopK,
                                            bool include_value_vectors = false) {
  std::vector<VocabEntry> out;
  for (const ProbeScore& ps : selection.probes) {
    if (ps.probe.kind != ProbeKind::kMlpKey)
      fail(ErrorKind::kUsage, "vocabulary projection needs mlp_key probes, got ",
           to_string(ps.probe));
    VocabEntry e{ps.probe, ps.rank, project_to_vocab(model, ps.probe.layer, ps.probe.index, top_k), {}};
    if (include_value_vectors)
      e.value_vector = MlpWeights::of(model, ps.probe.layer).value_vector(ps.probe.index);
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string to_tsv(std::span<const VocabEntry> entries) {
  const ByteTokenizer tok;
  std::string out = "rank\tlayer\tindex\tposition\ttoken_id\ttoken\tscore\n";
  for (const VocabEntry& e : entries)
    for (std::size_t k = 0; k < e.tokens.size(); ++k)
      out += std::to_string(e.rank) + "\t" + std::to_string(e.probe.layer) + "\t" +
             std::to_string(e.probe.index) + "\t" + std::to_string(k + 1) + "\t" +
             std::to_string(e.tokens[k].token_id) + "\t" + tok.display(e.tokens[k].token_id) +
             "\t" + io::to_hexfloat(e.tokens[k].score) + "\n";
  return out;
}

// One row per selected probe: its raw value vector, for external embedding tools.
inline std::string value_vectors_tsv(std::span<const VocabEntry> entries) {
  std::string out = "rank\tlayer\tindex\tvalues\n";
  for (const VocabEntry& e : entries) {
    out += std::to_string(e.rank) + "\t" + std::to_string(e.probe.layer) + "\t" +
           std::to_string(e.probe.index) + "\t";
    for (std::size_t k = 0; k < e.value_vector.size(); ++k)
      out += (k ? "," : "") + io::to_hexfloat(e.value_vector[k]);
    out += "\n";
  }
  return out;
}

}  // namespace truthv
