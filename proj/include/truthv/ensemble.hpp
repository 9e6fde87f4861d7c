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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/io_util.hpp"
#include "truthv/mcq_data.hpp"
#include "truthv/parallel.hpp"
#include "truthv/probe_records.hpp"
#include "truthv/selector.hpp"

namespace truthv {

enum class Method { kTruthvArgmax, kTruthvArgmin, kTruthvCombined, kNovoNorm, kLogLikelihood };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kTruthvArgmax: return "truthv_argmax";
    case Method::kTruthvArgmin: return "truthv_argmin";
    case Method::kTruthvCombined: return "truthv_combined";
    case Method::kNovoNorm: return "novo_norm";
    case Method::kLogLikelihood: return "log_likelihood";
  }
  return "unknown";
}

struct Prediction {
  std::string item_id;
  std::size_t chosen = 0;
  std::vector<std::size_t> votes;  // votes[j] = voters choosing candidate j
  std::size_t voter_count = 0;
  Method method = Method::kTruthvArgmax;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Majority vote over voters given in rank order (best first). Each voter picks
// its arg-extreme candidate; a tie on vote count goes to the tied candidate
// chosen by the best-ranked voter among them.
//   values: n_candidates x voter_patterns.size(), row-major.
inline Prediction predict_item(std::span<const double> values, std::size_t n_candidates,
                               std::span<const Pattern> voter_patterns) {
  const std::size_t nv = voter_patterns.size();
  if (nv == 0) fail(ErrorKind::kRange, "prediction needs at least one voter");
  if (n_candidates == 0) fail(ErrorKind::kRange, "prediction needs at least one candidate");
  if (values.size() != n_candidates * nv)
    fail(ErrorKind::kShape, "value matrix has ", values.size(), " entries, expected ",
         n_candidates, "x", nv, " for the selected probes");
  Prediction pred;
  pred.votes.assign(n_candidates, 0);
  pred.voter_count = nv;
  std::vector<std::size_t> choice(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    require_base_pattern(voter_patterns[v]);
    std::size_t best = 0;
    for (std::size_t j = 1; j < n_candidates; ++j) {
      const double x = values[j * nv + v], b = values[best * nv + v];
      if (voter_patterns[v] == Pattern::kArgmax ? x > b : x < b) best = j;
    }
    choice[v] = best;
    ++pred.votes[best];
  }
  const std::size_t top = *std::max_element(pred.votes.begin(), pred.votes.end());
  for (std::size_t v = 0; v < nv; ++v)
    if (pred.votes[choice[v]] == top) {
      pred.chosen = choice[v];
      break;
    }
  return pred;
}

struct Voter {
  ProbeId probe;
  Pattern pattern;
};

struct EvalReport {
  std::string dataset;
  Method method = Method::kTruthvArgmax;
  double accuracy = 0.0;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  std::vector<Prediction> per_item;
  std::vector<Selection> selections;  // provenance; empty for log-likelihood

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Predictions for every item of `records` from the given ranked voters.
inline std::vector<Prediction> predict_all(const ProbeRecordSet& records,
                                           std::span<const Voter> voters, Method method) {
  std::vector<std::size_t> cols;
  std::vector<Pattern> patterns;
  for (const Voter& v : voters) {
    cols.push_back(records.column(v.probe));
    patterns.push_back(v.pattern);
  }
  const std::size_t np = records.n_probes(), nv = cols.size();
  std::vector<Prediction> out(records.items.size());
  parallel_for(records.items.size(), [&](std::size_t i) {
    const RecordItem& it = records.items[i];
    std::vector<double> gathered(it.n_candidates * nv);
    for (std::size_t j = 0; j < it.n_candidates; ++j)
      for (std::size_t v = 0; v < nv; ++v) gathered[j * nv + v] = it.value(j, cols[v], np);
    Prediction p = predict_item(gathered, it.n_candidates, patterns);
    p.item_id = it.item_id;
    p.method = method;
    out[i] = std::move(p);
  });
  return out;
}

inline EvalReport score_predictions(const ProbeRecordSet& records,
                                    std::vector<Prediction> predictions, Method method) {
  EvalReport r;
  r.dataset = records.dataset_name;
  r.method = method;
  r.n_items = records.items.size();
  if (r.n_items == 0) fail(ErrorKind::kRange, "cannot evaluate an empty record set");
  for (std::size_t i = 0; i < r.n_items; ++i) {
    const RecordItem& it = records.items[i];
    if (!it.label) fail(ErrorKind::kRange, "cannot evaluate: item '", it.item_id,
                        "' is unlabeled");
    r.n_correct += predictions[i].chosen == *it.label;
  }
  r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_items);
  r.per_item = std::move(predictions);
  return r;
}

inline Method method_for(const Selection& s) {
  if (!s.probes.empty() && s.probes.front().probe.kind == ProbeKind::kAttnHeadNorm)
    return Method::kNovoNorm;
  return s.pattern == Pattern::kArgmax ? Method::kTruthvArgmax : Method::kTruthvArgmin;
}

inline std::vector<Voter> voters_of(const Selection& s) {
  require_base_pattern(s.pattern);
  std::vector<Voter> voters;
  for (const ProbeScore& ps : s.probes) voters.push_back({ps.probe, s.pattern});
  return voters;
}

inline EvalReport evaluate(const ProbeRecordSet& records, const Selection& selection) {
  const Method m = method_for(selection);
  const auto voters = voters_of(selection);
  EvalReport r = score_predictions(records, predict_all(records, voters, m), m);
  r.selections = {selection};
  return r;
}

// Checks that records and dataset describe the same labeled items, in order.
inline void check_records_match(const ProbeRecordSet& records, const Dataset& dataset) {
  if (records.items.size() != dataset.items.size())
    fail(ErrorKind::kStructural, "records have ", records.items.size(),
         " items but dataset '", dataset.name, "' has ", dataset.items.size());
  for (std::size_t i = 0; i < records.items.size(); ++i) {
    const RecordItem& r = records.items[i];
    const McqItem& d = dataset.items[i];
    if (r.item_id != d.item_id || r.n_candidates != d.candidates.size() || r.label != d.label)
      fail(ErrorKind::kStructural, "records item '", r.item_id,
           "' does not match dataset item '", d.item_id, "'");
  }
}

inline EvalReport evaluate(const ProbeRecordSet& records, const Selection& selection,
                           const Dataset& dataset) {
  check_records_match(records, dataset);
  return evaluate(records, selection);
}

// Voting pool holding both selections: for each rank r, the argmax voter of
// rank r precedes the argmin voter of rank r. A probe in both selections
// votes twice.
inline std::vector<Voter> combined_voters(const Selection& sel_max, const Selection& sel_min) {
  if (sel_max.pattern != Pattern::kArgmax || sel_min.pattern != Pattern::kArgmin)
    fail(ErrorKind::kUsage, "combined voting needs an argmax and an argmin selection");
  if (sel_max.probes.empty() || sel_min.probes.empty())
    fail(ErrorKind::kRange, "combined voting needs two non-empty selections");
  std::vector<Voter> voters;
  const std::size_t n = std::max(sel_max.probes.size(), sel_min.probes.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (r < sel_max.probes.size()) voters.push_back({sel_max.probes[r].probe, Pattern::kArgmax});
    if (r < sel_min.probes.size()) voters.push_back({sel_min.probes[r].probe, Pattern::kArgmin});
  }
  return voters;
}

inline EvalReport combine_patterns(const Selection& sel_max, const Selection& sel_min,
                                   const ProbeRecordSet& records) {
  const auto voters = combined_voters(sel_max, sel_min);
  EvalReport r = score_predictions(records, predict_all(records, voters, Method::kTruthvCombined),
                                   Method::kTruthvCombined);
  r.selections = {sel_max, sel_min};
  return r;
}

inline EvalReport log_likelihood_baseline(const ProbeRecordSet& records) {
  if (!records.find_column(ProbeId::log_likelihood()))
    fail(ErrorKind::kStructural, "records for '", records.dataset_name,
         "' have no log_likelihood values");
  const Voter voter{ProbeId::log_likelihood(), Pattern::kArgmax};
  return score_predictions(records,
                           predict_all(records, std::span(&voter, 1), Method::kLogLikelihood),
                           Method::kLogLikelihood);
}

// Captures answer-span log-likelihoods (summed, or averaged per token when
// length_normalized) and picks the most likely candidate.
inline EvalReport log_likelihood_baseline(const ModelBundle& model, const Dataset& dataset,
                                          bool length_normalized = false) {
  const ProbeId probe = ProbeId::log_likelihood();
  TraceOptions opts;
  opts.length_normalized_loglik = length_normalized;
  return log_likelihood_baseline(capture(model, dataset, std::span(&probe, 1), opts));
}

// Attention-head-norm voting: heads are scored and selected on `budget`
// exactly like value vectors, then vote (argmax) on `records`.
inline EvalReport novo_baseline(const ProbeRecordSet& records, const ProbeRecordSet& budget,
                                double p) {
  const Selection sel = select_probes(budget, Pattern::kArgmax, p, ProbeKind::kAttnHeadNorm);
  EvalReport r = evaluate(records, sel);
  r.method = Method::kNovoNorm;
  for (auto& pred : r.per_item) pred.method = Method::kNovoNorm;
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string format_accuracy(double a) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", a);
  return buf;
}

inline std::string report_to_text(const EvalReport& r) {
  std::string out;
  out += "dataset: " + r.dataset + "\n";
  out += "method: " + std::string(to_string(r.method)) + "\n";
  out += "n_items: " + std::to_string(r.n_items) + "\n";
  out += "correct: " + std::to_string(r.n_correct) + "\n";
  out += "accuracy: " + format_accuracy(r.accuracy) + "\n";
  for (const Selection& s : r.selections) {
    OrderedJson j;
    j["pattern"] = std::string(to_string(s.pattern));
    j["p"] = s.p;
    j["source_dataset"] = s.source_dataset;
    j["budget_n"] = s.budget_n;
    j["total_probes"] = s.total_probe_count;
    j["voters"] = s.probes.size();
    out += "selection: " + j.dump() + "\n";
  }
  return out;
}

inline std::string predictions_to_jsonl(std::span<const Prediction> preds) {
  std::string out;
  for (const Prediction& p : preds) {
    OrderedJson j;
    j["item_id"] = p.item_id;
    j["chosen"] = p.chosen;
    j["votes"] = p.votes;
    j["voter_count"] = p.voter_count;
    j["method"] = std::string(to_string(p.method));
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace truthv
