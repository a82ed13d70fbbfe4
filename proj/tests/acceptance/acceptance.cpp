// Acceptance runner: exercises the seven release gates and prints exactly one
// PASS/FAIL line per criterion. Exits nonzero if any gate fails.
//
//   1  gradient audit           analytic vs central finite differences
//   2  metric oracles           bitwise match against brute-force loops
//   3  hand-computed goldens    nPRF, PD, TS, softmax NLL reference values
//   4  headline trade-off       TS halves |dA-PRF| at <= 10% recall cost
//   5  imbalance robustness     TS beats PD under group imbalance 0.85
//   6  fairness-metric laws     swap antisymmetry, monotone invariance
//   7  determinism              byte-identical end-to-end pipeline runs

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "fairrank/bias.hpp"
#include "fairrank/corpus.hpp"
#include "fairrank/gradcheck.hpp"
#include "fairrank/losses.hpp"
#include "fairrank/metrics.hpp"
#include "fairrank/trainer.hpp"

using namespace fairrank;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int n, const char* title, bool pass, const std::string& details) {
  std::printf("criterion %d (%s): %s — %s\n", n, title, pass ? "PASS" : "FAIL",
              details.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

// --- criterion 1 -----------------------------------------------------------

bool criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = trainer::grad_check(2026, 120);
  const double elapsed = seconds_since(t0);
  bool enough = true;
  for (const auto& e : rep.entries) enough = enough && e.checked >= 100;
  const bool pass = rep.all_ok() && rep.worst() < 1e-5 && enough && elapsed < 60.0;
  report(1, "gradient audit", pass,
         fmt("worst rel err %.3g over %zu paths x 120 fixtures, %.1fs",
             rep.worst(), rep.entries.size(), elapsed));
  return pass;
}

// --- criterion 2 -----------------------------------------------------------

bool criterion_oracles() {
  Rng rng(77);
  std::size_t mismatches = 0;
  const double eps_pool[3] = {1e-8, 1e-12, 0.5};
  for (int it = 0; it < 1000; ++it) {
    const auto gp = oracles::random_gendered_pair(rng, 10);
    if (metrics::prf(gp) != oracles::prf(gp)) ++mismatches;
    const auto sp = oracles::random_pair(rng, 10);
    if (losses::nprf(sp).value != oracles::nprf(sp)) ++mismatches;

    const auto male = oracles::random_group(rng, 20);
    const auto female = oracles::random_group(rng, 20);
    const auto st = oracles::state_of(male, female);
    if (losses::pd_loss(st).value != oracles::pd(male, female)) ++mismatches;

    losses::FairnessConfig cfg;
    cfg.denom_epsilon = eps_pool[rng.below(3)];
    cfg.ts_formula = losses::TsFormula::standard_t_squared;
    if (losses::ts_loss(st, cfg).value !=
        oracles::ts(male, female, cfg.denom_epsilon, false))
      ++mismatches;
    cfg.ts_formula = losses::TsFormula::literal_paper;
    if (losses::ts_loss(st, cfg).value !=
        oracles::ts(male, female, cfg.denom_epsilon, true))
      ++mismatches;
  }
  const bool pass = mismatches == 0;
  report(2, "metric oracles", pass,
         fmt("%zu mismatches across 1000 fixtures x 5 closed forms (bitwise)",
             mismatches));
  return pass;
}

// --- criterion 3 -----------------------------------------------------------

bool criterion_goldens() {
  auto rel_ok = [](double got, double want) {
    return std::abs(got - want) <= 1e-9 * std::abs(want);
  };

  losses::ScoredPair nprf_sp;
  nprf_sp.scores = {0.5, 0.3, 0.7};
  nprf_sp.clicked = 0;
  nprf_sp.bias_labels = {1, 0, 0};
  const double nprf_v = losses::nprf(nprf_sp).value;
  const bool nprf_ok = rel_ok(nprf_v, std::sqrt(0.125));

  const double pd_v = losses::pd_loss(oracles::state_of({0.4}, {0.2, 0.3})).value;
  const bool pd_ok = rel_ok(pd_v, 0.025);

  losses::FairnessConfig cfg;
  cfg.denom_epsilon = 1e-12;  // small enough to sit within 1e-6 of the eps-free value
  const double ts_v = losses::ts_loss(oracles::state_of({0.4, 0.6}, {0.2, 0.2}), cfg).value;
  const bool ts_ok = std::abs(ts_v - 18.0) <= 1e-6;

  losses::ScoredPair nll_sp;
  nll_sp.scores = {0.3, 0.3};
  nll_sp.clicked = 0;
  nll_sp.bias_labels = {0, 0};
  const double nll_v = losses::ranking_loss(nll_sp).value;
  const bool nll_ok = rel_ok(nll_v, std::log(2.0));

  const bool pass = nprf_ok && pd_ok && ts_ok && nll_ok;
  report(3, "hand-computed goldens", pass,
         fmt("nprf=%.12f pd=%.12f ts=%.9f nll=%.12f", nprf_v, pd_v, ts_v, nll_v));
  return pass;
}

// --- criteria 4 and 5: the two-phase synthetic protocol ---------------------

trainer::TrainData slice_pairs(const trainer::TrainData& full, std::size_t lo,
                               std::size_t hi) {
  trainer::TrainData d;
  d.coll = full.coll;
  d.queries = full.queries;
  d.labels = full.labels;
  d.pairs.assign(full.pairs.begin() + static_cast<std::ptrdiff_t>(lo),
                 full.pairs.begin() + static_cast<std::ptrdiff_t>(hi));
  return d;
}

struct ProtocolRun {
  corpus::SynthCorpus corpus;  // owns what TrainData points into
  trainer::TrainData train_data, test_data;
  encoder::Params pretrained;

  ProtocolRun(double group_imbalance, std::uint64_t corpus_seed) {
    corpus::SynthSpec spec;
    spec.num_queries = 300;
    spec.k = 20;
    spec.vocab_size = 2000;
    spec.bias_strength = 0.8;
    spec.group_imbalance = group_imbalance;
    spec.seed = corpus_seed;
    corpus = corpus::generate_synthetic(spec);
    auto full = trainer::bind_training_data(corpus.passages, corpus.queries,
                                            corpus.pairs, corpus.lexicon);
    train_data = slice_pairs(full, 0, 200);    // 200 train / 50 dev held out
    test_data = slice_pairs(full, 250, 300);   // 50 test

    // Phase 1: ranking-only SGD pretrain.
    trainer::TrainConfig pre;
    pre.batch_size = 16;
    pre.learning_rate = 1.0;
    pre.epochs = 30;
    pre.seed = 3;
    pre.optimizer = trainer::Optimizer::sgd;
    pre.encoder.vocab_buckets = 1u << 14;
    pre.encoder.seed = 3;
    pretrained = trainer::train(pre, train_data, Exec::parallel).state.params;
  }

  // Phase 2: Adam fine-tune from the pretrained weights, then test-set eval.
  metrics::EvalReport tune_and_eval(losses::Regularizer reg, double lambda) const {
    trainer::TrainConfig ft;
    ft.batch_size = 32;
    ft.learning_rate = 5e-4;
    ft.epochs = 5;
    ft.seed = 4;
    ft.optimizer = trainer::Optimizer::adam;
    ft.encoder.vocab_buckets = 1u << 14;
    ft.encoder.seed = 3;
    ft.fairness.regularizer = reg;
    ft.fairness.lambda_value = lambda;
    const auto res = trainer::train(ft, train_data, Exec::parallel, &pretrained);
    metrics::EvalOptions opt;
    opt.with_rab = false;
    return metrics::evaluate(
        trainer::score_eval_pairs(res.state.params, test_data, nullptr, Exec::parallel),
        opt, Exec::parallel);
  }
};

bool criterion_tradeoff() {
  const auto t0 = std::chrono::steady_clock::now();
  ProtocolRun run(0.6, 1);
  const auto base = run.tune_and_eval(losses::Regularizer::none, 0.0);
  const auto ts = run.tune_and_eval(losses::Regularizer::ts, 1.0);
  const double elapsed = seconds_since(t0);

  if (!base.delta_a_prf || !ts.delta_a_prf) {
    report(4, "headline trade-off", false, "|dA-PRF| undefined on the test slice");
    return false;
  }
  const double reduction = 1.0 - *ts.delta_a_prf / *base.delta_a_prf;
  const bool recall_ok = ts.recall >= 0.9 * base.recall;

  std::vector<double> a, b;
  for (const auto& [qid, v] : base.per_query_prf) a.push_back(v);
  for (const auto& [qid, v] : ts.per_query_prf) b.push_back(v);
  const double p = metrics::bootstrap_significance(a, b, 10000, 99);

  const bool pass =
      reduction >= 0.5 && recall_ok && p < 0.05 && elapsed < 300.0;
  report(4, "headline trade-off", pass,
         fmt("|dA-PRF| %.4f -> %.4f (-%.0f%%), recall %.3f -> %.3f, p=%.4f, %.1fs",
             *base.delta_a_prf, *ts.delta_a_prf, 100.0 * reduction, base.recall,
             ts.recall, p, elapsed));
  return pass;
}

bool criterion_imbalance() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ProtocolRun run(0.85, seed);
    const auto ts = run.tune_and_eval(losses::Regularizer::ts, 1.0);
    const auto pd = run.tune_and_eval(losses::Regularizer::pd, 1.0);
    const bool defined = ts.delta_a_prf && pd.delta_a_prf;
    const bool win = defined && *ts.delta_a_prf <= *pd.delta_a_prf;
    if (win) ++wins;
    detail += fmt("%s%.3f%svs%.3f", seed == 1 ? "" : " ",
                  defined ? *ts.delta_a_prf : -1.0, win ? "<=" : ">",
                  defined ? *pd.delta_a_prf : -1.0);
  }
  const bool pass = wins >= 4;
  report(5, "imbalance robustness", pass,
         fmt("TS vs PD |dA-PRF| wins %d/5 [%s]", wins, detail.c_str()));
  return pass;
}

// --- criterion 6 -----------------------------------------------------------

bool criterion_fairness_laws() {
  const auto lex = bias::default_lexicon();
  const auto sw = bias::swapped(lex);
  Rng rng(606);
  std::vector<std::string> pool = {"he",   "she",  "man",   "woman", "king", "queen",
                                   "father", "mother", "report", "x1",  "x2",   "x3"};
  auto random_tokens = [&]() {
    std::vector<std::string> tokens;
    const std::size_t n = rng.below(10);
    for (std::size_t i = 0; i < n; ++i) tokens.push_back(pool[rng.below(pool.size())]);
    return tokens;
  };

  bool swap_ok = true;
  for (int it = 0; it < 500; ++it) {
    const auto tokens = random_tokens();
    const double mag = bias::magnitude(tokens, lex);
    const double mag_sw = bias::magnitude(tokens, sw);
    swap_ok = swap_ok && mag_sw == -mag;
    const auto g = bias::label_of(mag);
    const auto gs = bias::label_of(mag_sw);
    swap_ok = swap_ok &&
              ((g == bias::Group::neutral && gs == bias::Group::neutral) ||
               (g == bias::Group::male && gs == bias::Group::female) ||
               (g == bias::Group::female && gs == bias::Group::male));
  }

  // RaB antisymmetry: the same passages labeled under the swapped lexicon.
  auto random_eval_pairs = [&](bool neutral_only) {
    std::vector<metrics::EvalPair> pairs;
    for (int i = 0; i < 40; ++i) {
      metrics::EvalPair p;
      p.sp = oracles::random_gendered_pair(rng, 8);
      p.sp.qid = "q" + std::to_string(i);
      for (std::size_t j = 0; j < p.sp.k(); ++j) {
        const auto tokens = neutral_only ? std::vector<std::string>{"report", "x1"}
                                         : random_tokens();
        p.sides.push_back(bias::side_magnitudes(tokens, lex));
      }
      pairs.push_back(std::move(p));
    }
    return pairs;
  };

  const auto pairs = random_eval_pairs(false);
  auto swapped_sides = pairs;
  for (auto& p : swapped_sides)
    for (auto& s : p.sides) std::swap(s.male, s.female);  // = side_magnitudes under sw
  bool rab_ok = true;
  for (std::size_t t : {1, 3, 5, 8})
    rab_ok = rab_ok && metrics::rab(swapped_sides, t) == -metrics::rab(pairs, t);

  // |dA-PRF| is invariant under strictly monotone score transforms.
  const auto d0 = metrics::delta_a_prf(pairs);
  bool mono_ok = d0.has_value();
  for (auto* f : {+[](double x) { return 3.0 * x - 7.0; },
                  +[](double x) { return std::tanh(x); },
                  +[](double x) { return std::exp(x); }}) {
    auto tr = pairs;
    for (auto& p : tr)
      for (auto& s : p.sp.scores) s = f(s);
    const auto d = metrics::delta_a_prf(tr);
    mono_ok = mono_ok && d.has_value() && *d == *d0;
  }

  // An all-neutral corpus has zero rank bias at every depth.
  const auto neutral = random_eval_pairs(true);
  bool neutral_ok = true;
  for (std::size_t t : {1, 2, 5, 10})
    neutral_ok = neutral_ok && metrics::rab(neutral, t) == 0.0;

  const bool pass = swap_ok && rab_ok && mono_ok && neutral_ok;
  report(6, "fairness-metric laws", pass,
         fmt("swap antisymmetry %s, rab antisymmetry %s, monotone invariance %s, "
             "all-neutral rab %s",
             swap_ok ? "ok" : "violated", rab_ok ? "ok" : "violated",
             mono_ok ? "ok" : "violated", neutral_ok ? "ok" : "violated"));
  return pass;
}

// --- criterion 7 -----------------------------------------------------------

bool run_pipeline(const fs::path& dir) {
  const std::string tool = FAIRRANK_TOOL_PATH;
  const std::string d = dir.string();
  const std::vector<std::string> commands = {
      tool + " gen-synth --queries 40 --candidates 8 --vocab 300 --seed 11 --out " + d,
      tool + " label-bias --collection " + d + "/collection.tsv --lexicon " + d +
          "/lexicon.json --out " + d + "/labels.tsv",
      tool + " train --collection " + d + "/collection.tsv --queries " + d +
          "/queries.tsv --run " + d + "/run.tsv --qrels " + d + "/qrels.tsv" +
          " --lexicon " + d + "/lexicon.json --regularizer ts --lambda 0.5" +
          " --optimizer adam --lr 1e-3 --epochs 2 --batch-size 8" +
          " --vocab-buckets 4096 --d-emb 16 --d 16 --seed 9 --log " + d +
          "/train.log --state-out " + d + "/state.bin --out " + d + "/model.bin",
      tool + " rerank --checkpoint " + d + "/model.bin --collection " + d +
          "/collection.tsv --queries " + d + "/queries.tsv --run " + d +
          "/run.tsv --out " + d + "/reranked.tsv",
      tool + " eval --run " + d + "/reranked.tsv --qrels " + d +
          "/qrels.tsv --collection " + d + "/collection.tsv --lexicon " + d +
          "/lexicon.json --per-query " + d + "/per_query.tsv --report " + d +
          "/report.json",
  };
  for (const auto& cmd : commands)
    if (std::system((cmd + " >/dev/null 2>&1").c_str()) != 0) return false;
  return true;
}

bool criterion_determinism() {
  const auto root = fs::temp_directory_path() / "fairrank_acceptance";
  fs::remove_all(root);
  const auto a = root / "a", b = root / "b";
  fs::create_directories(a);
  fs::create_directories(b);

  if (!run_pipeline(a) || !run_pipeline(b)) {
    report(7, "determinism", false, "a pipeline command failed");
    return false;
  }

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::string differing;
  for (const char* f :
       {"collection.tsv", "queries.tsv", "run.tsv", "qrels.tsv", "lexicon.json",
        "labels.tsv", "train.log", "state.bin", "model.bin", "reranked.tsv",
        "report.json", "per_query.tsv"}) {
    const auto body = slurp(a / f);
    if (body.empty() || body != slurp(b / f)) differing += std::string(" ") + f;
  }
  const bool pass = differing.empty();
  report(7, "determinism", pass,
         pass ? "12 pipeline artifacts byte-identical across two runs"
              : fmt("artifacts differ or are empty:%s", differing.c_str()));
  fs::remove_all(root);
  return pass;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= criterion_gradients();
  ok &= criterion_oracles();
  ok &= criterion_goldens();
  ok &= criterion_tradeoff();
  ok &= criterion_imbalance();
  ok &= criterion_fairness_laws();
  ok &= criterion_determinism();
  return ok ? 0 : 1;
}
