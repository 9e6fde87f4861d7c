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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "truthv/analysis.hpp"
#include "truthv/ensemble.hpp"
#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/io_util.hpp"
#include "truthv/mcq_data.hpp"
#include "truthv/probe_records.hpp"
#include "truthv/selector.hpp"
#include "truthv/synth.hpp"

namespace truthv::cli {

inline constexpr std::size_t kDefaultBudgetN = 30;

struct RunConfig {
  std::string model_dir;
  std::string dataset;
  std::vector<std::string> records;
  std::vector<std::string> selections;
  std::string pattern;  // empty = subcommand default
  double p = kDefaultP;
  std::size_t budget_n = kDefaultBudgetN;
  std::uint64_t seed = 0;
  std::string out;

  // Subcommand-specific.
  std::string probes = "all";
  std::string kind = "mlp_key";
  std::string budget_records;
  std::string eval_records;
  std::string budgets = "30,all";
  std::string p_grid = "0.0001,0.0002,0.0005,0.001,0.002,0.005,0.01";
  std::string probe;
  std::string config;
  std::string rig = "plant_mlp_neuron";
  std::string value_vectors_out;
  double fraction = 0.001;
  std::size_t n_layers = 0;
  std::size_t top_k = kDefaultVocabTopK;
  std::size_t layer = 1;
  std::size_t index = 7;
  std::size_t n_items = 40;
  std::size_t m_candidates = 3;
  bool length_normalized = false;
};

namespace detail {

inline void require_inputs(std::initializer_list<std::string> paths) {
  for (const std::string& p : paths)
    if (!p.empty() && !std::filesystem::exists(p))
      fail(ErrorKind::kIo, "input '", p, "' does not exist");
}

inline void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorKind::kUsage, flag, " is required");
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

inline std::vector<double> parse_doubles(const std::string& s, const char* flag) {
  std::vector<double> out;
  for (const auto& part : split_csv(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, flag, ": bad number '", part, "'");
    }
  }
  if (out.empty()) fail(ErrorKind::kUsage, flag, " needs at least one value");
  return out;
}

inline std::vector<ProbeId> probes_for(const ModelConfig& c, const std::string& spec) {
  std::vector<ProbeId> out;
  for (const auto& k : split_csv(spec == "all" ? "mlp_key,attn_head_norm,log_likelihood" : spec)) {
    switch (parse_probe_kind(k)) {
      case ProbeKind::kMlpKey: {
        auto v = all_mlp_probes(c);
        out.insert(out.end(), v.begin(), v.end());
        break;
      }
      case ProbeKind::kAttnHeadNorm: {
        auto v = all_head_probes(c);
        out.insert(out.end(), v.begin(), v.end());
        break;
      }
      case ProbeKind::kLogLikelihood: out.push_back(ProbeId::log_likelihood()); break;
    }
  }
  return out;
}

// Budget drawn from the records themselves; 0 means every item.
inline ProbeRecordSet budget_of(const ProbeRecordSet& records, std::size_t n, std::uint64_t seed) {
  if (n == 0) return records;
  return sample_records(records, n, seed);
}

// When --out names a directory, analysis outputs get a metadata-bearing name.
inline std::filesystem::path analysis_path(const std::string& out, const std::string& analysis,
                                           const std::string& pattern, double p) {
  std::filesystem::path path(out);
  if (!std::filesystem::is_directory(path)) return path;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s_%s_p%g.tsv", analysis.c_str(), pattern.c_str(), p);
  return path / buf;
}

// Voters for predict/evaluate: one selection, or an argmax + argmin pair
// for the combined pattern.
struct Ensemble {
  std::vector<Selection> selections;
  Pattern pattern = Pattern::kArgmax;
};

inline Ensemble load_ensemble(const RunConfig& rc) {
  if (rc.selections.empty()) fail(ErrorKind::kUsage, "--selection is required");
  Ensemble e;
  for (const auto& s : rc.selections) {
    require_inputs({s});
    e.selections.push_back(read_selection(s));
  }
  e.pattern = rc.pattern.empty() ? (e.selections.size() == 2 ? Pattern::kCombined
                                                               : e.selections[0].pattern)
                                 : parse_pattern(rc.pattern);
  if (e.pattern == Pattern::kCombined) {
    if (e.selections.size() != 2)
      fail(ErrorKind::kUsage, "--pattern combined needs two --selection files (argmax, argmin)");
    if (e.selections[0].pattern == Pattern::kArgmin) std::swap(e.selections[0], e.selections[1]);
  } else {
    if (e.selections.size() != 1)
      fail(ErrorKind::kUsage, "two --selection files are only valid with --pattern combined");
    if (e.selections[0].pattern != e.pattern)
      fail(ErrorKind::kUsage, "--pattern ", to_string(e.pattern),
           " disagrees with the selection's pattern ", to_string(e.selections[0].pattern));
  }
  return e;
}

inline EvalReport run_ensemble(const Ensemble& e, const ProbeRecordSet& records) {
  if (e.pattern == Pattern::kCombined)
    return combine_patterns(e.selections[0], e.selections[1], records);
  return evaluate(records, e.selections[0]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline void cmd_capture(const RunConfig& rc, std::ostream& out) {
  detail::require_flag(rc.model_dir, "--model");
  detail::require_flag(rc.dataset, "--dataset");
  detail::require_flag(rc.out, "--out");
  detail::require_inputs({rc.model_dir, rc.dataset});
  const ModelBundle model = load_model(rc.model_dir);
  const Dataset ds = load_dataset(rc.dataset);
  const auto probes = detail::probes_for(model.config, rc.probes);
  TraceOptions opts;
  opts.length_normalized_loglik = rc.length_normalized;
  const ProbeRecordSet rec = capture(model, ds, probes, opts);
  write_records(rec, rc.out);
  out << "captured " << rec.items.size() << " items x " << rec.n_probes() << " probes -> "
      << rc.out << "\n";
}

inline void cmd_select(const RunConfig& rc, std::ostream& out) {
  if (rc.records.size() != 1) fail(ErrorKind::kUsage, "select takes exactly one --records");
  detail::require_flag(rc.out, "--out");
  const Pattern pattern = rc.pattern.empty() ? Pattern::kArgmax : parse_pattern(rc.pattern);
  if (pattern == Pattern::kCombined)
    fail(ErrorKind::kUsage, "--pattern combined is not valid for select; select argmax and "
                            "argmin separately and combine at predict/evaluate time");
  detail::require_inputs({rc.records[0]});
  const ProbeRecordSet rec = read_records(rc.records[0]);
  const ProbeRecordSet budget = detail::budget_of(rec, rc.budget_n, rc.seed);
  const Selection sel = select_probes(budget, pattern, rc.p, parse_probe_kind(rc.kind));
  write_selection(sel, rc.out);
  out << "selected " << sel.probes.size() << " of " << sel.total_probe_count << " "
      << rc.kind << " probes (" << to_string(pattern) << ", p=" << rc.p
      << ", budget=" << sel.budget_n << ") -> " << rc.out << "\n";
}

inline void cmd_predict(const RunConfig& rc, std::ostream& out) {
  if (rc.records.size() != 1) fail(ErrorKind::kUsage, "predict takes exactly one --records");
  detail::require_flag(rc.out, "--out");
  detail::require_inputs({rc.records[0]});
  const auto ens = detail::load_ensemble(rc);
  const ProbeRecordSet rec = read_records(rc.records[0]);
  std::vector<Voter> voters;
  Method method;
  if (ens.pattern == Pattern::kCombined) {
    voters = combined_voters(ens.selections[0], ens.selections[1]);
    method = Method::kTruthvCombined;
  } else {
    voters = voters_of(ens.selections[0]);
    method = method_for(ens.selections[0]);
  }
  const auto preds = predict_all(rec, voters, method);
  io::write_file(rc.out, predictions_to_jsonl(preds));
  out << "predicted " << preds.size() << " items -> " << rc.out << "\n";
}

inline void cmd_evaluate(const RunConfig& rc, std::ostream& out) {
  if (rc.records.size() != 1) fail(ErrorKind::kUsage, "evaluate takes exactly one --records");
  detail::require_flag(rc.out, "--out");
  detail::require_inputs({rc.records[0], rc.dataset});
  const auto ens = detail::load_ensemble(rc);
  const ProbeRecordSet rec = read_records(rc.records[0]);
  if (!rc.dataset.empty()) check_records_match(rec, load_dataset(rc.dataset));
  const EvalReport report = detail::run_ensemble(ens, rec);
  io::write_file(rc.out, predictions_to_jsonl(report.per_item));
  out << report_to_text(report);
}

inline void cmd_baseline_loglik(const RunConfig& rc, std::ostream& out) {
  detail::require_flag(rc.out, "--out");
  EvalReport report;
  if (!rc.records.empty()) {
    if (!rc.model_dir.empty() || rc.records.size() != 1)
      fail(ErrorKind::kUsage, "baseline-loglik takes one --records or --model with --dataset");
    detail::require_inputs({rc.records[0]});
    report = log_likelihood_baseline(read_records(rc.records[0]));
  } else {
    detail::require_flag(rc.model_dir, "--model");
    detail::require_flag(rc.dataset, "--dataset");
    detail::require_inputs({rc.model_dir, rc.dataset});
    report = log_likelihood_baseline(load_model(rc.model_dir), load_dataset(rc.dataset),
                                     rc.length_normalized);
  }
  io::write_file(rc.out, predictions_to_jsonl(report.per_item));
  out << report_to_text(report);
}

inline void cmd_baseline_novo(const RunConfig& rc, std::ostream& out) {
  if (rc.records.size() != 1) fail(ErrorKind::kUsage, "baseline-novo takes exactly one --records");
  detail::require_flag(rc.out, "--out");
  detail::require_inputs({rc.records[0], rc.budget_records});
  const ProbeRecordSet rec = read_records(rc.records[0]);
  const ProbeRecordSet pool = rc.budget_records.empty() ? rec : read_records(rc.budget_records);
  const EvalReport report = novo_baseline(rec, detail::budget_of(pool, rc.budget_n, rc.seed), rc.p);
  io::write_file(rc.out, predictions_to_jsonl(report.per_item));
  out << report_to_text(report);
}

inline void cmd_analyze(const std::string& which, const RunConfig& rc, std::ostream& out) {
  detail::require_flag(rc.out, "--out");
  for (const auto& r : rc.records) detail::require_inputs({r});
  detail::require_inputs({rc.model_dir, rc.eval_records});
  const ProbeKind kind = parse_probe_kind(rc.kind);
  const Pattern pattern = rc.pattern.empty() ? Pattern::kArgmax : parse_pattern(rc.pattern);
  const std::string pname(to_string(pattern));
  auto one_records = [&]() {
    if (rc.records.size() != 1) fail(ErrorKind::kUsage, "analyze ", which, " takes one --records");
    return read_records(rc.records[0]);
  };

  if (which == "curve") {
    const auto path = detail::analysis_path(rc.out, "curve", "argmax", 1.0);
    io::write_file(path, to_tsv(ranking_curve(one_records(), kind)));
    out << "wrote " << path.string() << "\n";
  } else if (which == "layers") {
    if (rc.records.empty()) fail(ErrorKind::kUsage, "analyze layers needs --records");
    require_base_pattern(pattern);
    std::size_t n_layers = rc.n_layers;
    if (!rc.model_dir.empty()) n_layers = load_model(rc.model_dir).config.n_layers;
    std::optional<LayerHistogram> total;
    for (const auto& path : rc.records) {
      const ProbeRecordSet rec = read_records(path);
      std::size_t layers = n_layers;
      if (layers == 0)
        for (const ProbeId& p : rec.probe_index)
          if (p.kind == kind) layers = std::max(layers, p.layer + 1);
      const auto h = layer_histogram(score_probes(rec, pattern, kind), rc.fraction, layers, pattern);
      if (total) *total += h;
      else total = h;
    }
    const auto path = detail::analysis_path(rc.out, "layers", pname, rc.fraction);
    io::write_file(path, to_tsv(*total));
    out << "wrote " << path.string() << "\n";
  } else if (which == "overlap") {
    const ProbeRecordSet rec = one_records();
    ProbeId probe;
    if (!rc.probe.empty()) {
      probe = parse_probe(rc.probe);
    } else {
      require_base_pattern(pattern);
      probe = select_top(score_probes(rec, pattern, kind), 1e-12, 1, pattern).probes[0].probe;
    }
    const auto path = detail::analysis_path(rc.out, "overlap", pname, 1.0);
    const auto summary = activation_distributions(rec, probe, pattern);
    io::write_file(path, to_tsv(summary));
    out << "probe " << to_string(probe) << " auroc " << truthv::detail::fmt6(summary.auroc)
        << " within_item_accuracy " << truthv::detail::fmt6(summary.within_item_accuracy) << "\n";
  } else if (which == "budget") {
    detail::require_flag(rc.eval_records, "--eval-records");
    std::vector<std::optional<std::size_t>> budgets;
    for (const auto& b : detail::split_csv(rc.budgets)) {
      if (b == "all") budgets.emplace_back(std::nullopt);
      else budgets.emplace_back(static_cast<std::size_t>(detail::parse_doubles(b, "--budgets")[0]));
    }
    BudgetOptions opt;
    opt.p = rc.p;
    opt.p_grid = detail::parse_doubles(rc.p_grid, "--p-grid");
    opt.pattern = pattern;
    opt.kind = kind;
    opt.seed = rc.seed;
    const auto rows = budget_scaling(one_records(), read_records(rc.eval_records), budgets, opt);
    const auto path = detail::analysis_path(rc.out, "budget", pname, rc.p);
    io::write_file(path, to_tsv(rows));
    out << "wrote " << path.string() << "\n";
  } else if (which == "transfer") {
    if (rc.records.empty()) fail(ErrorKind::kUsage, "analyze transfer needs --records");
    std::vector<ProbeRecordSet> sets;
    for (const auto& r : rc.records) sets.push_back(read_records(r));
    const auto path = detail::analysis_path(rc.out, "transfer", pname, rc.p);
    io::write_file(path, to_tsv(transfer_matrix(sets, rc.p, pattern, kind)));
    out << "wrote " << path.string() << "\n";
  } else if (which == "vocab") {
    detail::require_flag(rc.model_dir, "--model");
    if (rc.selections.size() != 1) fail(ErrorKind::kUsage, "analyze vocab takes one --selection");
    detail::require_inputs({rc.selections[0]});
    const Selection sel = read_selection(rc.selections[0]);
    const auto entries = vocab_report(load_model(rc.model_dir), sel, rc.top_k,
                                      !rc.value_vectors_out.empty());
    const auto path = detail::analysis_path(rc.out, "vocab", std::string(to_string(sel.pattern)), sel.p);
    io::write_file(path, to_tsv(entries));
    if (!rc.value_vectors_out.empty()) io::write_file(rc.value_vectors_out, value_vectors_tsv(entries));
    out << "wrote " << path.string() << "\n";
  } else {
    fail(ErrorKind::kUsage, "unknown analysis '", which, "'");
  }
}

inline ModelConfig model_config_from(const RunConfig& rc) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.d_ff = 48;
  c.n_heads = 4;
  c.head_dim = 4;
  c.vocab_size = ByteTokenizer::kVocabSize;
  c.max_seq_len = 128;
  if (!rc.config.empty()) {
    detail::require_inputs({rc.config});
    Json j;
    try {
      j = Json::parse(io::read_file(rc.config));
    } catch (const Json::exception& e) {
      fail(ErrorKind::kFormat, rc.config, ": ", e.what());
    }
    c = config_from_json(j);
  }
  c.validate();
  return c;
}

inline void cmd_synth(const std::string& which, const RunConfig& rc, std::ostream& out) {
  detail::require_flag(rc.out, "--out");
  if (which == "records") {
    detail::require_flag(rc.config, "--config");
    detail::require_inputs({rc.config});
    Json j;
    try {
      j = Json::parse(io::read_file(rc.config));
    } catch (const Json::exception& e) {
      fail(ErrorKind::kFormat, rc.config, ": ", e.what());
    }
    const auto synth = gen_records(plant_spec_from_json(j));
    write_records(synth.records, rc.out);
    if (!rc.dataset.empty()) write_dataset(synth.dataset, rc.dataset);
    out << "generated " << synth.records.items.size() << " items x "
        << synth.records.n_probes() << " probes -> " << rc.out << "\n";
  } else if (which == "model") {
    const RigKind kind = parse_rig(rc.rig);
    const ModelConfig cfg = model_config_from(rc);
    const std::filesystem::path dir(rc.out);
    Dataset ds;
    if (!rc.dataset.empty()) {
      detail::require_inputs({rc.dataset});
      ds = load_dataset(rc.dataset);
    } else {
      ds = gen_rigged_dataset(rc.n_items, rc.m_candidates, rc.seed);
    }
    const ModelBundle m = gen_rigged_model(cfg, ds, {kind, rc.layer, rc.index}, rc.seed);
    save_model(m, dir);
    if (rc.dataset.empty()) write_dataset(ds, dir / "dataset.jsonl");
    out << "wrote " << to_string(kind) << " model -> " << dir.string() << "\n";
  } else {
    fail(ErrorKind::kUsage, "unknown synth target '", which, "'");
  }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

// Returns the process exit status: 0 on success, 2 for usage errors, 1 for
// everything else. Failures print one line: "error: <category>: <message>".
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"Truthfulness detection from MLP value vectors", "truthv"};
  app.require_subcommand(1);

  auto add_common = [&rc](CLI::App* sub) {
    sub->add_option("--model", rc.model_dir, "model bundle directory");
    sub->add_option("--dataset", rc.dataset, "dataset items file (.jsonl)");
    sub->add_option("--records", rc.records, "probe records file (repeatable where noted)");
    sub->add_option("--selection", rc.selections, "selection file (twice for combined)");
    sub->add_option("--pattern", rc.pattern, "argmax | argmin | combined");
    sub->add_option("--p", rc.p, "fraction of probes to keep")->capture_default_str();
    sub->add_option("--budget-n", rc.budget_n, "labeled budget size; 0 = all items")
        ->capture_default_str();
    sub->add_option("--seed", rc.seed, "seed for budget sampling / generation")->capture_default_str();
    sub->add_option("--out", rc.out, "output path")->capture_default_str();
    sub->add_option("--kind", rc.kind, "probe kind to select over")->capture_default_str();
  };

  auto* capture_cmd = app.add_subcommand("capture", "run the model and record probe values");
  add_common(capture_cmd);
  capture_cmd->add_option("--probes", rc.probes, "all | comma list of probe kinds")
      ->capture_default_str();
  capture_cmd->add_flag("--length-normalized", rc.length_normalized,
                        "store per-token mean answer log-likelihood");

  auto* select_cmd = app.add_subcommand("select", "score and keep the top-p probes");
  add_common(select_cmd);
  auto* predict_cmd = app.add_subcommand("predict", "majority-vote predictions per item");
  add_common(predict_cmd);
  auto* evaluate_cmd = app.add_subcommand("evaluate", "predict and report accuracy");
  add_common(evaluate_cmd);
  auto* loglik_cmd = app.add_subcommand("baseline-loglik", "highest answer log-likelihood");
  add_common(loglik_cmd);
  loglik_cmd->add_flag("--length-normalized", rc.length_normalized,
                       "average instead of sum over answer tokens");
  auto* novo_cmd = app.add_subcommand("baseline-novo", "attention-head-norm voting");
  add_common(novo_cmd);
  novo_cmd->add_option("--budget-records", rc.budget_records,
                       "records to select heads on (default: sample of --records)");

  auto* analyze_cmd = app.add_subcommand("analyze", "analyses emitting tab-separated tables");
  analyze_cmd->require_subcommand(1);
  const std::pair<const char*, const char*> analyses[] = {
      {"curve", "per-probe argmax and argmin accuracy, ranked"},
      {"layers", "layer histogram of the top probes"},
      {"overlap", "within-item accuracy vs pooled AUROC for one probe"},
      {"budget", "accuracy as the labeled budget grows"},
      {"transfer", "select on one dataset, evaluate on another"},
      {"vocab", "top vocabulary tokens of selected value vectors"}};
  for (const auto& [name, help] : analyses) {
    auto* sub = analyze_cmd->add_subcommand(name, help);
    add_common(sub);
    sub->add_option("--fraction", rc.fraction, "layers: fraction of probes")->capture_default_str();
    sub->add_option("--n-layers", rc.n_layers, "layers: layer count (default: inferred)");
    sub->add_option("--probe", rc.probe, "overlap: probe as kind:layer:index");
    sub->add_option("--eval-records", rc.eval_records, "budget: evaluation records");
    sub->add_option("--budgets", rc.budgets, "budget: comma list of sizes or 'all'")
        ->capture_default_str();
    sub->add_option("--p-grid", rc.p_grid, "budget: p values searched for 'all'")
        ->capture_default_str();
    sub->add_option("--top-k", rc.top_k, "vocab: tokens per probe")->capture_default_str();
    sub->add_option("--value-vectors", rc.value_vectors_out, "vocab: also write raw value vectors");
  }

  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic records or rigged models");
  synth_cmd->require_subcommand(1);
  const std::pair<const char*, const char*> synths[] = {
      {"records", "probe records with planted probes"}, {"model", "rigged model bundle and dataset"}};
  for (const auto& [name, help] : synths) {
    auto* sub = synth_cmd->add_subcommand(name, help);
    add_common(sub);
    sub->add_option("--config", rc.config, "plant spec (records) or model config (model)");
    sub->add_option("--rig", rc.rig, "uniform_logits | label_tokens_dominant | plant_mlp_neuron")
        ->capture_default_str();
    sub->add_option("--layer", rc.layer, "plant layer")->capture_default_str();
    sub->add_option("--index", rc.index, "plant neuron index")->capture_default_str();
    sub->add_option("--n-items", rc.n_items, "rigged dataset size")->capture_default_str();
    sub->add_option("--m", rc.m_candidates, "rigged dataset candidates per item")
        ->capture_default_str();
  }

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      fail(ErrorKind::kUsage, e.what());
    }
    if (capture_cmd->parsed()) cmd_capture(rc, out);
    else if (select_cmd->parsed()) cmd_select(rc, out);
    else if (predict_cmd->parsed()) cmd_predict(rc, out);
    else if (evaluate_cmd->parsed()) cmd_evaluate(rc, out);
    else if (loglik_cmd->parsed()) cmd_baseline_loglik(rc, out);
    else if (novo_cmd->parsed()) cmd_baseline_novo(rc, out);
    else if (analyze_cmd->parsed()) cmd_analyze(analyze_cmd->get_subcommands().front()->get_name(), rc, out);
    else if (synth_cmd->parsed()) cmd_synth(synth_cmd->get_subcommands().front()->get_name(), rc, out);
    return 0;
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << to_string(e.kind()) << ": " << msg << "\n";
    return e.kind() == ErrorKind::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace truthv::cli
