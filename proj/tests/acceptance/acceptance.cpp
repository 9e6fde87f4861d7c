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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runs library code in-process and the CLI binary as a subprocess.

#include <sys/wait.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "truthv/truthv.hpp"

namespace fs = std::filesystem;
using namespace truthv;

namespace {

struct Verdict {
  bool ok = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with stdout/stderr captured to files; returns the exit status.
int run_cli(const std::string& args, const fs::path& stdout_file, const std::string& env = "") {
  const std::string cmd = (env.empty() ? "" : env + " ") + quote(TRUTHV_CLI_PATH) + " " + args + " >" +
                          quote(stdout_file.string()) + " 2>" + quote(stdout_file.string() + ".err");
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

ProbeRecordSet random_records(std::size_t n_items, std::size_t m, std::size_t n_probes,
                              std::uint64_t seed) {
  Rng rng(seed);
  ProbeRecordSet r{"random", {}, {}};
  for (std::size_t c = 0; c < n_probes; ++c) r.probe_index.push_back(ProbeId::mlp_key(c / 100, c % 100));
  for (std::size_t i = 0; i < n_items; ++i) {
    RecordItem it{"item-" + std::to_string(i), rng.below(m), m, {}};
    for (std::size_t v = 0; v < m * n_probes; ++v) it.values.push_back(rng.normal());
    r.items.push_back(std::move(it));
  }
  return r;
}

bool has_within_item_ties(const ProbeRecordSet& r) {
  const std::size_t np = r.n_probes();
  for (const auto& it : r.items)
    for (std::size_t c = 0; c < np; ++c) {
      std::set<double> seen;
      for (std::size_t j = 0; j < it.n_candidates; ++j)
        if (!seen.insert(it.value(j, c, np)).second) return true;
    }
  return false;
}

PlantSpec spec_of(std::size_t n_items, std::size_t m, std::size_t noise, std::uint64_t seed,
                  std::vector<PlantedProbe> planted, const std::string& name = "synthetic") {
  PlantSpec s;
  s.name = name;
  s.n_items = n_items;
  s.m_candidates = m;
  s.noise_probe_count = noise;
  s.seed = seed;
  s.planted = std::move(planted);
  return s;
}

std::vector<PlantedProbe> plants(std::size_t layer, std::size_t count, double reliability) {
  std::vector<PlantedProbe> out;
  for (std::size_t k = 0; k < count; ++k)
    out.push_back({ProbeId::mlp_key(layer, 100 + 37 * k), Pattern::kArgmax, reliability});
  return out;
}

// ---------------------------------------------------------------------------

Verdict glu_decomposition() {
  const Timer t;
  double worst = 0.0;
  constexpr std::size_t d = 16, f = 48;
  for (Activation act : {Activation::kSilu, Activation::kGelu}) {
    Rng rng(act == Activation::kSilu ? 1 : 2);
    std::vector<float> gate(f * d), up(f * d), down(d * f), h(d);
    for (int draw = 0; draw < 1000; ++draw) {
      for (float& x : gate) x = static_cast<float>(rng.normal() / 4.0);
      for (float& x : up) x = static_cast<float>(rng.normal() / 4.0);
      for (float& x : down) x = static_cast<float>(rng.normal() / std::sqrt(48.0));
      for (float& x : h) x = static_cast<float>(rng.normal());
      const MlpWeights w{0, d, f, act, gate, up, down};
      const MlpOutput out = mlp_forward(h, w);
      std::vector<float> summed(d, 0.0f);
      for (std::size_t i = 0; i < f; ++i) {
        const auto v = w.value_vector(i);
        for (std::size_t r = 0; r < d; ++r) summed[r] += out.keys[i] * v[r];
      }
      float err = 0.0f, scale = 0.0f;
      for (std::size_t r = 0; r < d; ++r) {
        err = std::max(err, std::abs(out.m[r] - summed[r]));
        scale = std::max(scale, std::abs(out.m[r]));
      }
      worst = std::max(worst, double(err / scale));
    }
  }
  const double secs = t.seconds();
  return {worst < 1e-5 && secs < 5.0,
          "2000 draws, max relative error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Verdict scoring_oracle() {
  const Timer t;
  const ProbeRecordSet r = random_records(100, 4, 500, 11);
  std::size_t mismatches = 0;
  for (Pattern p : {Pattern::kArgmax, Pattern::kArgmin}) {
    const auto scores = score_probes(r, p);
    const auto ref = oracle::score_correct(r, p == Pattern::kArgmax);
    for (std::size_t c = 0; c < scores.size(); ++c)
      mismatches += scores[c].correct != ref[c] || scores[c].n_items != 100 || scores[c].probe != r.probe_index[c];
  }
  const double secs = t.seconds();
  return {mismatches == 0 && secs < 5.0,
          std::to_string(mismatches) + " mismatches over 2x500 probes, " + fmt("%.2f", secs) + " s"};
}

Verdict negation_duality() {
  const ProbeRecordSet r = random_records(150, 4, 400, 12);
  if (has_within_item_ties(r)) return {false, "generated records contain ties"};
  const auto a = score_probes(r, Pattern::kArgmin);
  const auto b = score_probes(negated(r), Pattern::kArgmax);
  std::size_t diff = 0;
  for (std::size_t c = 0; c < a.size(); ++c) diff += a[c].correct != b[c].correct;
  const NegationReport rep = negate_pattern_check(r);
  return {diff == 0 && rep.violations.empty(),
          std::to_string(diff) + " differing probes of 400, " + std::to_string(rep.violations.size()) +
              " reported violations"};
}

Verdict planted_recovery_records() {
  const Timer t;
  const auto perfect = plants(2, 5, 1.0);
  const auto syn = gen_records(spec_of(200, 4, 2000, 1, perfect));
  const Selection top = select_top(score_probes(syn.records, Pattern::kArgmax), 1.0, 2005, Pattern::kArgmax);
  std::set<ProbeId> top5, want;
  for (std::size_t k = 0; k < 5; ++k) top5.insert(top.probes[k].probe);
  for (const auto& p : perfect) want.insert(p.probe);
  const bool exact = top5 == want;

  std::size_t good_seeds = 0;
  const auto noisy = plants(2, 5, 0.9);
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const auto s = gen_records(spec_of(200, 4, 2000, seed, noisy));
    const Selection sel = select_top(score_probes(s.records, Pattern::kArgmax), 20.0 / 2005.0, 2005,
                                     Pattern::kArgmax);
    std::set<ProbeId> top20;
    for (const auto& ps : sel.probes) top20.insert(ps.probe);
    bool all = sel.probes.size() == 20;
    for (const auto& p : noisy) all = all && top20.count(p.probe);
    good_seeds += all;
  }
  const double secs = t.seconds();
  return {exact && good_seeds >= 48 && secs < 30.0,
          std::string("reliability 1.0 ranks 1-5 ") + (exact ? "exact" : "WRONG") +
              ", reliability 0.9 all in top 20 for " + std::to_string(good_seeds) + "/50 seeds, " +
              fmt("%.2f", secs) + " s"};
}

Verdict planted_recovery_end_to_end() {
  const Timer t;
  const fs::path dir = oracle::scratch_dir("acc-e2e");
  const std::string d = dir.string();
  const std::string log = (dir / "log").string();
  std::string detail;
  bool ok = run_cli("synth model --rig plant_mlp_neuron --layer 1 --index 7 --out " + quote(d + "/model"), log) == 0 &&
            run_cli("capture --model " + quote(d + "/model") + " --dataset " + quote(d + "/model/dataset.jsonl") +
                        " --out " + quote(d + "/rec.jsonl"),
                    log) == 0 &&
            run_cli("select --records " + quote(d + "/rec.jsonl") + " --out " + quote(d + "/sel.jsonl"), log) == 0;
  if (ok) {
    const Selection sel = read_selection(dir / "sel.jsonl");
    ok = !sel.probes.empty() && sel.probes[0].probe == ProbeId::mlp_key(1, 7) && sel.probes[0].rank == 1;
    detail = "rank 1 = " + (sel.probes.empty() ? std::string("none") : to_string(sel.probes[0].probe));
    const fs::path report = dir / "report.txt";
    ok = run_cli("evaluate --records " + quote(d + "/rec.jsonl") + " --selection " + quote(d + "/sel.jsonl") +
                     " --dataset " + quote(d + "/model/dataset.jsonl") + " --out " + quote(d + "/pred.jsonl"),
                 report) == 0 &&
         ok;
    const std::string text = io::read_file(report);
    const auto pos = text.find("accuracy: ");
    const std::string acc = pos == std::string::npos ? "missing" : text.substr(pos + 10, 6);
    ok = ok && acc == "1.0000";
    detail += ", evaluate accuracy " + acc;
  } else {
    detail = "pipeline command failed: " + io::read_file(log + ".err");
  }
  const double secs = t.seconds();
  fs::remove_all(dir);
  return {ok && secs < 60.0, detail + ", " + fmt("%.2f", secs) + " s"};
}

Verdict ensemble_binomial() {
  constexpr int kVoters = 11;
  Rng rng(77);
  ProbeRecordSet r{"binomial", {}, {}};
  Selection sel{Pattern::kArgmax, 1.0, {}, "binomial", 0, kVoters};
  for (int v = 0; v < kVoters; ++v) {
    r.probe_index.push_back(ProbeId::mlp_key(0, v));
    sel.probes.push_back({ProbeId::mlp_key(0, v), 0, 0, std::size_t(v + 1)});
  }
  for (int i = 0; i < 10000; ++i) {
    const std::size_t label = rng.below(2);
    RecordItem it{"i" + std::to_string(i), label, 2, std::vector<double>(2 * kVoters, 0.0)};
    for (int v = 0; v < kVoters; ++v) it.values[(rng.bernoulli(0.7) ? label : 1 - label) * kVoters + v] = 1.0;
    r.items.push_back(std::move(it));
  }
  const double expected = oracle::binomial_tail_by_enumeration(kVoters, 0.7, 6);
  const double got = evaluate(r, sel).accuracy;
  return {std::abs(got - expected) <= 0.02,
          "accuracy " + fmt("%.4f", got) + " vs binomial tail " + fmt("%.4f", expected)};
}

Verdict single_voter() {
  const ProbeRecordSet r = random_records(300, 3, 800, 13);
  Rng pick(5);
  std::size_t mismatches = 0;
  for (int k = 0; k < 50; ++k) {
    const Pattern pat = k % 2 ? Pattern::kArgmin : Pattern::kArgmax;
    const std::size_t c = pick.below(800);
    const ProbeScore s = score_probes(r, pat)[c];
    Selection one{pat, 1.0, {s}, "random", 300, 1};
    one.probes[0].rank = 1;
    const EvalReport rep = evaluate(r, one);
    const auto ref = oracle::score_correct(r, pat == Pattern::kArgmax)[c];
    mismatches += rep.n_correct != s.correct || rep.n_correct != ref || rep.n_items != 300;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 50 probes"};
}

Verdict overlap() {
  PlantSpec s = spec_of(2000, 2, 0, 21, {{ProbeId::mlp_key(3, 3), Pattern::kArgmax, 1.0}});
  s.baseline_spread = 1000.0;
  const auto syn = gen_records(s);
  const DistributionSummary d = activation_distributions(syn.records, ProbeId::mlp_key(3, 3));
  return {d.within_item_accuracy == 1.0 && d.auroc >= 0.45 && d.auroc <= 0.60,
          "within-item accuracy " + fmt("%.4f", d.within_item_accuracy) + ", pooled AUROC " + fmt("%.4f", d.auroc)};
}

Verdict binary_complement() {
  const ProbeRecordSet r = random_records(500, 2, 600, 14);
  if (has_within_item_ties(r)) return {false, "generated records contain ties"};
  const RankingCurve c = ranking_curve(r);
  std::size_t bad = 0;
  for (const auto& row : c.rows) bad += row.argmax.correct + row.argmin.correct != row.argmax.n_items;
  return {bad == 0 && c.rows.size() == 600, std::to_string(bad) + " of 600 probes violate acc_max + acc_min = 1"};
}

Verdict budget_monotonicity() {
  double sum30 = 0.0, sum_all = 0.0;
  const auto pl = plants(1, 5, 0.9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pool = gen_records(spec_of(400, 4, 1995, 1000 + seed, pl, "pool"));
    const auto eval = gen_records(spec_of(400, 4, 1995, 2000 + seed, pl, "eval")).records;
    BudgetOptions opt;
    opt.p_grid = default_p_grid();
    opt.seed = seed;
    const std::vector<std::optional<std::size_t>> budgets{30, std::nullopt};
    const auto rows = budget_scaling(pool.records, eval, budgets, opt);
    sum30 += rows[0].report.accuracy;
    sum_all += rows[1].report.accuracy;
  }
  return {sum_all >= sum30,
          "mean accuracy budget 30 = " + fmt("%.4f", sum30 / 20) + ", all = " + fmt("%.4f", sum_all / 20) +
              " over 20 seeds"};
}

Verdict transfer_structure() {
  auto make = [](const std::string& name, std::uint64_t seed, std::size_t layer) {
    std::vector<PlantedProbe> pl;
    for (std::size_t k = 0; k < 3; ++k) pl.push_back({ProbeId::mlp_key(layer, 10 + k), Pattern::kArgmax, 1.0});
    return gen_records(spec_of(1000, 4, 2997, seed, pl, name)).records;
  };
  const std::vector<ProbeRecordSet> sets{make("A", 31, 0), make("B", 32, 0), make("C", 33, 2)};
  const auto cells = transfer_matrix(sets, 0.001, Pattern::kArgmax);
  bool shared = true, disjoint = true, floor = true;
  double worst_disjoint = 0.0;
  for (const auto& c : cells) {
    floor = floor && c.accuracy >= c.random_guess - 0.05;
    if (c.source_dataset == c.target_dataset) continue;
    const bool c_involved = c.source_dataset == "C" || c.target_dataset == "C";
    if (!c_involved) {
      shared = shared && c.accuracy == 1.0;
    } else {
      worst_disjoint = std::max(worst_disjoint, std::abs(c.accuracy - c.random_guess));
      disjoint = disjoint && std::abs(c.accuracy - c.random_guess) <= 0.05;
    }
  }
  return {shared && disjoint && floor && cells.size() == 9,
          std::string("shared pair off-diagonal ") + (shared ? "1.0" : "below 1.0") +
              ", disjoint pairs max |acc - guess| " + fmt("%.4f", worst_disjoint) + ", floor " +
              (floor ? "held" : "violated")};
}

// Every subcommand once per run directory; returns the commands that failed.
std::vector<std::string> run_all_subcommands(const fs::path& dir, const std::string& env) {
  fs::create_directories(dir / "tables");
  const std::string d = dir.string();
  auto P = [&](const std::string& name) { return quote(d + "/" + name); };
  io::write_file(dir / "spec.json",
                 R"({"name":"syn","noise_probe_count":400,"n_items":150,"m_candidates":2,"seed":5,)"
                 R"("baseline_spread":3.0,"planted":[{"kind":"mlp_key","layer":0,"index":9,"reliability":0.9}]})");
  io::write_file(dir / "spec_eval.json",
                 R"({"name":"syn_eval","noise_probe_count":400,"n_items":100,"m_candidates":2,"seed":6,)"
                 R"("planted":[{"kind":"mlp_key","layer":0,"index":9,"reliability":0.9}]})");
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth_model", "synth model --rig plant_mlp_neuron --out " + P("model")},
      {"synth_model_ll", "synth model --rig label_tokens_dominant --dataset " + P("model/dataset.jsonl") +
                             " --out " + P("model_ll")},
      {"synth_records", "synth records --config " + P("spec.json") + " --dataset " + P("syn_items.jsonl") +
                            " --out " + P("syn.tvrc")},
      {"synth_records_eval", "synth records --config " + P("spec_eval.json") + " --out " + P("syn_eval.jsonl")},
      {"capture", "capture --model " + P("model") + " --dataset " + P("model/dataset.jsonl") + " --out " +
                      P("rec.jsonl")},
      {"select_max", "select --records " + P("rec.jsonl") + " --p 0.05 --seed 3 --out " + P("max.jsonl")},
      {"select_min", "select --records " + P("rec.jsonl") + " --p 0.05 --pattern argmin --out " + P("min.jsonl")},
      {"select_heads", "select --records " + P("rec.jsonl") + " --kind attn_head_norm --p 0.5 --out " +
                           P("heads.jsonl")},
      {"predict", "predict --records " + P("rec.jsonl") + " --selection " + P("max.jsonl") + " --out " +
                      P("pred.jsonl")},
      {"predict_combined", "predict --records " + P("rec.jsonl") + " --selection " + P("max.jsonl") +
                               " --selection " + P("min.jsonl") + " --pattern combined --out " + P("predc.jsonl")},
      {"evaluate", "evaluate --records " + P("rec.jsonl") + " --selection " + P("max.jsonl") + " --dataset " +
                       P("model/dataset.jsonl") + " --out " + P("eval.jsonl")},
      {"baseline_loglik", "baseline-loglik --records " + P("rec.jsonl") + " --out " + P("ll.jsonl")},
      {"baseline_loglik_model", "baseline-loglik --model " + P("model_ll") + " --dataset " +
                                    P("model/dataset.jsonl") + " --out " + P("ll_model.jsonl")},
      {"baseline_novo", "baseline-novo --records " + P("rec.jsonl") + " --p 0.25 --out " + P("novo.jsonl")},
      {"analyze_curve", "analyze curve --records " + P("syn.tvrc") + " --out " + P("tables")},
      {"analyze_layers", "analyze layers --records " + P("rec.jsonl") + " --fraction 0.05 --out " + P("tables")},
      {"analyze_overlap", "analyze overlap --records " + P("syn.tvrc") + " --out " + P("tables")},
      {"analyze_budget", "analyze budget --records " + P("syn.tvrc") + " --eval-records " +
                             P("syn_eval.jsonl") + " --budgets 30,all --out " + P("tables") + " --seed 2"},
      {"analyze_transfer", "analyze transfer --records " + P("syn.tvrc") + " --records " +
                               P("syn_eval.jsonl") + " --p 0.01 --out " + P("tables")},
      {"analyze_vocab", "analyze vocab --model " + P("model") + " --selection " + P("max.jsonl") +
                            " --value-vectors " + P("vv.tsv") + " --out " + P("tables")},
  };
  std::vector<std::string> failed;
  for (const auto& [name, args] : commands)
    if (run_cli(args, dir / ("stdout_" + name + ".txt"), env) != 0) failed.push_back(name);
  return failed;
}

// Byte-compares every file below a and b, with b's path replaced by a's in text.
std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b) {
  std::vector<std::string> diffs;
  std::set<fs::path> rel_a, rel_b;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel_a.insert(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rel_b.insert(fs::relative(e.path(), b));
  if (rel_a != rel_b) diffs.push_back("file sets differ");
  for (const auto& rel : rel_a) {
    if (!rel_b.count(rel)) continue;
    std::string x = io::read_file(a / rel), y = io::read_file(b / rel);
    for (std::size_t pos; (pos = y.find(b.string())) != std::string::npos;) y.replace(pos, b.string().size(), a.string());
    if (x != y) diffs.push_back(rel.string());
  }
  return diffs;
}

Verdict determinism() {
  const fs::path root = oracle::scratch_dir("acc-det");
  std::vector<std::string> failed;
  for (const auto& [sub, env] : std::vector<std::pair<std::string, std::string>>{
           {"run1", "TRUTHV_THREADS=1"}, {"run2", "TRUTHV_THREADS=1"}, {"run4", "TRUTHV_THREADS=4"}}) {
    const auto f = run_all_subcommands(root / sub, env);
    for (const auto& name : f) failed.push_back(sub + ":" + name);
  }
  std::vector<std::string> diffs;
  for (const auto& d : tree_differences(root / "run1", root / "run2")) diffs.push_back("repeat:" + d);
  for (const auto& d : tree_differences(root / "run1", root / "run4")) diffs.push_back("threads:" + d);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "run1")) files += e.is_regular_file();
  fs::remove_all(root);
  std::string detail = "20 invocations x 3 runs, " + std::to_string(files) + " files compared per run";
  for (const auto& f : failed) detail += "; failed " + f;
  for (const auto& d : diffs) detail += "; differs " + d;
  return {failed.empty() && diffs.empty(), detail};
}

double awkward(Rng& rng) {
  switch (rng.below(5)) {
    case 0: return std::numeric_limits<double>::denorm_min() * double(1 + rng.below(1u << 20));
    case 1: return -std::numeric_limits<double>::min() * rng.uniform();
    case 2: return std::numeric_limits<double>::max() * (rng.uniform() - 0.5);
    case 3: return rng.bernoulli(0.5) ? 0.0 : -0.0;
    default: return rng.normal() * std::ldexp(1.0, int(rng.below(200)) - 100);
  }
}

bool bit_identical(const ProbeRecordSet& a, const ProbeRecordSet& b) {
  if (a.dataset_name != b.dataset_name || a.probe_index != b.probe_index || a.items.size() != b.items.size())
    return false;
  for (std::size_t k = 0; k < a.items.size(); ++k) {
    const auto &x = a.items[k], &y = b.items[k];
    if (x.item_id != y.item_id || x.label != y.label || x.n_candidates != y.n_candidates ||
        x.values.size() != y.values.size())
      return false;
    for (std::size_t v = 0; v < x.values.size(); ++v)
      if (std::bit_cast<std::uint64_t>(x.values[v]) != std::bit_cast<std::uint64_t>(y.values[v])) return false;
  }
  return true;
}

Verdict format_round_trip() {
  const fs::path dir = oracle::scratch_dir("acc-fmt");
  Rng rng(99);
  std::size_t subnormals = 0, round_trip_failures = 0;
  for (int trial = 0; trial < 10; ++trial) {
    ProbeRecordSet r{"fmt", {}, {}};
    for (std::size_t c = 0; c < 40; ++c) r.probe_index.push_back(ProbeId::mlp_key(c % 4, 39 - c));
    r.probe_index.push_back(ProbeId::head_norm(1, 1));
    r.probe_index.push_back(ProbeId::log_likelihood());
    for (int i = 0; i < 30; ++i) {
      RecordItem it{"x" + std::to_string(i), std::nullopt, 1 + rng.below(4), {}};
      if (i % 4) it.label = rng.below(it.n_candidates);
      for (std::size_t v = 0; v < it.n_candidates * r.n_probes(); ++v) {
        it.values.push_back(awkward(rng));
        subnormals += std::fpclassify(it.values.back()) == FP_SUBNORMAL;
      }
      r.items.push_back(std::move(it));
    }
    for (const char* name : {"r.jsonl", "r.tvrc"}) {
      write_records(r, dir / name);
      round_trip_failures += !bit_identical(read_records(dir / name), r.canonicalized());
    }
  }
  auto rejected = [&](const std::string& bytes, const char* name) {
    io::write_file(dir / name, bytes);
    try {
      read_records(dir / name);
    } catch (const Error&) {
      return true;
    }
    return false;
  };
  const std::string text = io::read_file(dir / "r.jsonl");
  const std::string bin = io::read_file(dir / "r.tvrc");
  std::size_t corruptions = 0, caught = 0;
  auto check = [&](const std::string& bytes, const char* name) {
    ++corruptions;
    caught += rejected(bytes, name);
  };
  for (std::size_t cut = 1; cut < text.size(); cut += text.size() / 23) check(text.substr(0, cut), "t.jsonl");
  for (std::size_t cut = 1; cut < bin.size(); cut += bin.size() / 23) check(bin.substr(0, cut), "t.tvrc");
  for (std::size_t pos = text.find('\n') + 1; pos < text.size(); pos += text.size() / 17) {
    std::string flipped = text;
    flipped[pos] = flipped[pos] == '0' ? '1' : '0';
    check(flipped, "f.jsonl");
  }
  for (std::size_t pos = 8; pos < bin.size(); pos += bin.size() / 17) {
    std::string flipped = bin;
    flipped[pos] ^= 0x04;
    check(flipped, "f.tvrc");
  }
  std::string v99 = text;
  v99.replace(v99.find("\"version\":1"), 11, "\"version\":99");
  check(v99, "v.jsonl");
  fs::remove_all(dir);
  return {round_trip_failures == 0 && subnormals > 0 && caught == corruptions,
          "20 round trips, " + std::to_string(round_trip_failures) + " failures (" + std::to_string(subnormals) +
              " subnormals), " + std::to_string(caught) + "/" + std::to_string(corruptions) +
              " corrupted or truncated files rejected"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"glu-decomposition-equivalence", glu_decomposition},
      {"scoring-oracle-equivalence", scoring_oracle},
      {"negation-duality", negation_duality},
      {"planted-recovery-records", planted_recovery_records},
      {"planted-recovery-end-to-end", planted_recovery_end_to_end},
      {"ensemble-vs-binomial-oracle", ensemble_binomial},
      {"single-voter-degeneracy", single_voter},
      {"overlap-operationalization", overlap},
      {"binary-complement", binary_complement},
      {"budget-monotonicity", budget_monotonicity},
      {"transfer-structure", transfer_structure},
      {"determinism", determinism},
      {"format-round-trip", format_round_trip},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.ok;
    std::cout << (v.ok ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - failures << "/" << criteria.size()
            << std::endl;
  return failures ? 1 : 0;
}
