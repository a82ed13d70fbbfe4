// fairrank: fairness-regularized passage reranking pipeline.
//
// Subcommands: label-bias, gen-synth, train, rerank, eval, grad-check,
// grid-search. Exit codes: 0 success, 1 usage error, 2 data/format error,
// 3 numerical abort.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairrank/bias.hpp"
#include "fairrank/corpus.hpp"
#include "fairrank/encoder.hpp"
#include "fairrank/errors.hpp"
#include "fairrank/gradcheck.hpp"
#include "fairrank/metrics.hpp"
#include "fairrank/trainer.hpp"

namespace {

using namespace fairrank;

Exec exec_for(int jobs) {
  if (jobs <= 1) return Exec::serial;
  set_threads(jobs);
  return Exec::parallel;
}

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', pos), csv.size());
    const std::string item = csv.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw FormatError(std::string(what) + ": bad number '" + item + "' in '" + csv + "'");
    }
    pos = comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv, const char* what) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(csv, what)) {
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw FormatError(std::string(what) + ": '" + std::to_string(v) +
                        "' is not a non-negative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

bias::Lexicon lexicon_from(const std::string& path) {
  return path.empty() ? bias::default_lexicon() : bias::load_lexicon(path);
}

// Candidate lists per query, rebuilt from a run file: first-appearance qid
// order, rank order within a query, optionally capped at top k.
struct RunGroup {
  std::string qid;
  std::vector<corpus::RunEntry> entries;
};

std::vector<RunGroup> group_run(const std::vector<corpus::RunEntry>& run, std::size_t top_k) {
  std::vector<RunGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& e : run) {
    auto [it, fresh] = index.try_emplace(e.qid, groups.size());
    if (fresh) groups.push_back({e.qid, {}});
    groups[it->second].entries.push_back(e);
  }
  for (auto& g : groups) {
    std::stable_sort(g.entries.begin(), g.entries.end(),
                     [](const auto& a, const auto& b) { return a.rank < b.rank; });
    if (top_k > 0 && g.entries.size() > top_k) g.entries.resize(top_k);
  }
  return groups;
}

struct DataFlags {
  std::string collection, queries, run, qrels, lexicon;
  std::size_t top_k = 1000;
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool with_lexicon = true) {
  cmd->add_option("--collection", f.collection, "Passage collection TSV (id<TAB>text)")
      ->required();
  cmd->add_option("--queries", f.queries, "Query TSV (id<TAB>text)")->required();
  cmd->add_option("--run", f.run, "Candidate run file (six-column trec format)")->required();
  cmd->add_option("--qrels", f.qrels, "Relevance judgments (qid 0 pid grade)")->required();
  if (with_lexicon)
    cmd->add_option("--lexicon", f.lexicon, "Gendered-word lexicon JSON (default: built-in)");
  cmd->add_option("--top-k", f.top_k, "Candidates kept per query")->capture_default_str();
}

struct TrainFlags {
  trainer::TrainConfig cfg;
  std::string regularizer = "none";
  std::string lambda_mode = "fixed";
  std::string ts_formula = "standard";
  std::string optimizer = "adam";
  std::uint64_t seed = 1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--batch-size", f.cfg.batch_size, "Pairs per training batch")->capture_default_str();
  cmd->add_option("--lr", f.cfg.learning_rate, "Peak learning rate")->capture_default_str();
  cmd->add_option("--warmup-ratio", f.cfg.warmup_ratio, "Linear warmup fraction")->capture_default_str();
  cmd->add_option("--weight-decay", f.cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--epochs", f.cfg.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for init and batch shuffling")->capture_default_str();
  cmd->add_option("--optimizer", f.optimizer, "adam|sgd")->capture_default_str()
      ->check(CLI::IsMember({"adam", "sgd"}));
  cmd->add_option("--lambda", f.cfg.fairness.lambda_value, "Fairness penalty weight")->capture_default_str();
  cmd->add_option("--lambda-mode", f.lambda_mode, "fixed|trainable")->capture_default_str()
      ->check(CLI::IsMember({"fixed", "trainable"}));
  cmd->add_option("--ts-formula", f.ts_formula, "standard|literal")->capture_default_str()
      ->check(CLI::IsMember({"standard", "literal"}));
  cmd->add_option("--eps", f.cfg.fairness.denom_epsilon, "TS denominator epsilon")->capture_default_str();
  cmd->add_option("--min-group", f.cfg.fairness.min_group_size,
                  "Smallest per-batch group size the fairness term needs")->capture_default_str();
  cmd->add_option("--vocab-buckets", f.cfg.encoder.vocab_buckets, "Hashed vocabulary size")->capture_default_str();
  cmd->add_option("--d-emb", f.cfg.encoder.d_emb, "Embedding dimension")->capture_default_str();
  cmd->add_option("--d", f.cfg.encoder.d, "Encoder output dimension")->capture_default_str();
  cmd->add_flag_function(
      "--separate-towers",
      [&f](std::int64_t) { f.cfg.encoder.shared_towers = false; },
      "Use distinct query/passage towers (default: shared)");
}

trainer::TrainConfig resolve_train_flags(const TrainFlags& f) {
  trainer::TrainConfig cfg = f.cfg;
  cfg.seed = f.seed;
  cfg.encoder.seed = f.seed;
  cfg.optimizer = f.optimizer == "sgd" ? trainer::Optimizer::sgd : trainer::Optimizer::adam;
  cfg.fairness.regularizer = f.regularizer == "pd"   ? losses::Regularizer::pd
                             : f.regularizer == "ts" ? losses::Regularizer::ts
                                                     : losses::Regularizer::none;
  cfg.fairness.lambda_mode = f.lambda_mode == "trainable" ? losses::LambdaMode::trainable
                                                          : losses::LambdaMode::fixed;
  cfg.fairness.ts_formula = f.ts_formula == "literal" ? losses::TsFormula::literal_paper
                                                      : losses::TsFormula::standard_t_squared;
  return cfg;
}

struct LoadedData {
  corpus::Collection coll;
  corpus::QuerySet queries;
  trainer::TrainData data;
};

LoadedData load_training_data(const DataFlags& f, const bias::Lexicon& lex) {
  LoadedData out;
  out.coll = corpus::load_collection(f.collection);
  out.queries = corpus::load_queries(f.queries);
  corpus::LoadStats stats;
  auto pairs = corpus::load_pairs(f.queries, f.run, f.qrels, f.top_k, &stats);
  if (stats.skipped_no_relevant || stats.skipped_no_candidates || stats.skipped_short)
    std::cerr << "loaded " << stats.loaded << " pairs (skipped: " << stats.skipped_no_relevant
              << " without qrels, " << stats.skipped_no_candidates << " without candidates, "
              << stats.skipped_short << " too short)\n";
  out.data = trainer::bind_training_data(out.coll, out.queries, pairs, lex);
  return out;
}

// --------------------------------------------------------------------------
// Subcommands.
// --------------------------------------------------------------------------

int cmd_label_bias(const std::string& collection, const std::string& lexicon,
                   const std::string& out, int jobs) {
  const Exec exec = exec_for(jobs);
  const auto coll = corpus::load_collection(collection);
  const auto labels = bias::label_collection(coll, lexicon_from(lexicon), exec);
  bias::write_labels(labels, out);
  std::size_t male = 0, female = 0;
  for (const auto& l : labels) {
    male += l.group == bias::Group::male;
    female += l.group == bias::Group::female;
  }
  std::cout << "labeled " << labels.size() << " passages: " << male << " male, " << female
            << " female, " << (labels.size() - male - female) << " neutral\n";
  return 0;
}

int cmd_gen_synth(const corpus::SynthSpec& spec, const std::string& out,
                  const std::string& splits_csv) {
  std::filesystem::create_directories(out);
  const auto corpus = corpus::generate_synthetic(spec);
  corpus::write_synth_corpus(corpus, out);
  if (!splits_csv.empty()) {
    const auto sizes = parse_size_list(splits_csv, "--splits");
    if (sizes.size() != 3)
      throw FormatError("--splits needs exactly three sizes (train,dev,test)");
    if (sizes[0] + sizes[1] + sizes[2] > corpus.pairs.size())
      throw FormatError("--splits sum exceeds the number of generated queries");
    static const char* names[3] = {"train", "dev", "test"};
    std::size_t lo = 0;
    for (int s = 0; s < 3; ++s) {
      const std::vector<corpus::DataPair> slice(corpus.pairs.begin() + lo,
                                                corpus.pairs.begin() + lo + sizes[s]);
      corpus::write_pairs(slice, out + "/run." + names[s] + ".tsv",
                          out + "/qrels." + names[s] + ".tsv");
      lo += sizes[s];
    }
  }
  std::cout << "wrote " << corpus.queries.size() << " queries, " << corpus.passages.size()
            << " passages under " << out << "\n";
  return 0;
}

int cmd_train(const DataFlags& data_flags, const TrainFlags& train_flags,
              const std::string& regularizer, const std::string& init_params,
              const std::string& out, const std::string& state_out, const std::string& log,
              int jobs) {
  const Exec exec = exec_for(jobs);
  TrainFlags tf = train_flags;
  tf.regularizer = regularizer;
  const auto cfg = resolve_train_flags(tf);
  const auto loaded = load_training_data(data_flags, lexicon_from(data_flags.lexicon));

  std::optional<encoder::Params> init;
  if (!init_params.empty()) init = encoder::load_params(init_params);
  const auto result = trainer::train(cfg, loaded.data, exec, init ? &*init : nullptr);

  encoder::save_params(result.state.params, out);
  if (!state_out.empty()) trainer::save_state(result.state, state_out);
  if (!log.empty()) trainer::write_log(result.logs, log);
  const auto& last = result.logs.back();
  std::cout << "trained " << result.logs.size() << " steps; final total=" << last.total
            << " L_rank=" << last.l_rank << " L_fair=" << last.l_fair
            << " lambda=" << last.lambda << "\n";
  return 0;
}

int cmd_rerank(const std::string& checkpoint, const std::string& collection,
               const std::string& queries_path, const std::string& run_path, std::size_t top_k,
               const std::string& tag, const std::string& out, int jobs) {
  const Exec exec = exec_for(jobs);
  const auto params = encoder::load_params(checkpoint);
  const auto coll = corpus::load_collection(collection);
  const auto queries = corpus::load_queries(queries_path);
  const auto groups = group_run(corpus::load_run(run_path), top_k);

  for (const auto& g : groups) {
    if (!queries.contains(g.qid)) throw FormatError("run query '" + g.qid + "' not in queries");
    for (const auto& e : g.entries)
      if (!coll.contains(e.pid))
        throw FormatError("run passage '" + e.pid + "' not in collection");
  }

  std::vector<std::vector<double>> scores(groups.size());
  for_each_index(exec, groups.size(), [&](std::size_t i) {
    const auto& g = groups[i];
    const auto& q = queries.at(g.qid);
    scores[i].resize(g.entries.size());
    for (std::size_t c = 0; c < g.entries.size(); ++c)
      scores[i][c] = encoder::sim(params, q.tokens, coll.at(g.entries[c].pid).tokens);
  });

  std::vector<corpus::RunEntry> reranked;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    std::vector<std::size_t> order(g.entries.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[i][a] > scores[i][b]; });
    for (std::size_t r = 0; r < order.size(); ++r) {
      corpus::RunEntry e;
      e.qid = g.qid;
      e.pid = g.entries[order[r]].pid;
      e.rank = static_cast<int>(r) + 1;
      e.score = scores[i][order[r]];
      e.tag = tag;
      reranked.push_back(std::move(e));
    }
  }
  corpus::write_run(reranked, out);
  std::cout << "reranked " << groups.size() << " queries\n";
  return 0;
}

int cmd_eval(const std::string& run_path, const std::string& qrels_path,
             const std::string& labels_path, const std::string& collection,
             const std::string& lexicon, const metrics::EvalOptions& base_opt,
             const std::string& report_path, const std::string& per_query, int jobs) {
  const Exec exec = exec_for(jobs);
  if (labels_path.empty() == collection.empty())
    throw FormatError("eval needs exactly one of --labels or --collection");

  // Label lookup, plus side magnitudes (RaB) when the collection is present.
  std::unordered_map<std::string, int> label_of;
  std::unordered_map<std::string, bias::SideMagnitudes> sides_of;
  const bool with_sides = !collection.empty();
  if (with_sides) {
    const auto coll = corpus::load_collection(collection);
    const auto lex = lexicon_from(lexicon);
    const auto labels = bias::label_collection(coll, lex, exec);
    for (std::size_t i = 0; i < coll.size(); ++i) {
      label_of[labels[i].pid] = static_cast<int>(bias::label_of(labels[i].magnitude) ==
                                                 bias::Group::male) -
                                static_cast<int>(bias::label_of(labels[i].magnitude) ==
                                                 bias::Group::female);
      sides_of[labels[i].pid] = bias::side_magnitudes(coll.items[i].tokens, lex);
    }
  } else {
    for (const auto& l : bias::load_labels(labels_path))
      label_of[l.pid] = static_cast<int>(l.group == bias::Group::male) -
                        static_cast<int>(l.group == bias::Group::female);
  }

  const auto groups = group_run(corpus::load_run(run_path), 0);
  const auto qrels = corpus::load_qrels(qrels_path);

  std::vector<metrics::EvalPair> pairs;
  std::size_t skipped = 0;
  for (const auto& g : groups) {
    const auto rel = qrels.find(g.qid);
    std::size_t clicked = g.entries.size();
    if (rel != qrels.end())
      for (std::size_t c = 0; c < g.entries.size(); ++c)
        if (g.entries[c].pid == rel->second) clicked = c;
    if (g.entries.size() < 2 || clicked == g.entries.size()) {
      ++skipped;
      continue;
    }
    metrics::EvalPair ep;
    ep.sp.qid = g.qid;
    ep.sp.clicked = clicked;
    for (const auto& e : g.entries) {
      const auto it = label_of.find(e.pid);
      if (it == label_of.end())
        throw FormatError("passage '" + e.pid + "' has no bias label");
      ep.sp.scores.push_back(e.score);
      ep.sp.bias_labels.push_back(it->second);
      if (with_sides) ep.sides.push_back(sides_of.at(e.pid));
    }
    pairs.push_back(std::move(ep));
  }
  if (skipped)
    std::cerr << "skipped " << skipped << " queries without a judged candidate list\n";

  metrics::EvalOptions opt = base_opt;
  opt.with_rab = with_sides;
  const auto report = metrics::evaluate(pairs, opt, exec);
  metrics::write_report(report, report_path);
  if (!per_query.empty()) metrics::write_per_query(report, per_query);
  std::cout << metrics::report_to_json(report) << "\n";
  return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t fixtures, double tolerance) {
  auto report = trainer::grad_check(seed, fixtures);
  report.tolerance = tolerance;
  trainer::print_report(report, std::cout);
  return report.all_ok() ? 0 : 3;
}

int cmd_grid_search(const DataFlags& data_flags, const std::string& dev_run,
                    const std::string& dev_qrels, const TrainFlags& train_flags,
                    const std::string& regularizer, const std::string& grid_csv,
                    double recall_tolerance, const std::string& out,
                    const std::string& checkpoint_out, int jobs) {
  const Exec exec = exec_for(jobs);
  TrainFlags tf = train_flags;
  tf.regularizer = regularizer;
  auto cfg = resolve_train_flags(tf);
  if (!grid_csv.empty()) cfg.lambda_grid = parse_double_list(grid_csv, "--grid");

  const auto lex = lexicon_from(data_flags.lexicon);
  auto loaded = load_training_data(data_flags, lex);
  DataFlags dev_flags = data_flags;
  dev_flags.run = dev_run;
  dev_flags.qrels = dev_qrels;
  corpus::LoadStats dev_stats;
  const auto dev_pairs = corpus::load_pairs(dev_flags.queries, dev_flags.run, dev_flags.qrels,
                                            dev_flags.top_k, &dev_stats);
  const auto dev_data =
      trainer::bind_training_data(loaded.coll, loaded.queries, dev_pairs, lex);

  const auto outcome =
      trainer::grid_search_lambda(cfg, loaded.data, dev_data, recall_tolerance, exec, &std::cerr);

  nlohmann::ordered_json j;
  j["chosen_lambda"] = outcome.chosen_lambda;
  j["constraint_met"] = outcome.constraint_met;
  j["baseline"] = nlohmann::ordered_json::parse(metrics::report_to_json(outcome.baseline));
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : outcome.entries)
    j["entries"].push_back({{"lambda", e.lambda},
                            {"report", nlohmann::ordered_json::parse(
                                           metrics::report_to_json(e.report))}});
  std::ofstream f(out);
  if (!f) throw FormatError("cannot write '" + out + "'");
  f << j.dump(2) << "\n";

  if (!checkpoint_out.empty()) {
    cfg.fairness.lambda_value = outcome.chosen_lambda;
    const auto result = trainer::train(cfg, loaded.data, exec);
    encoder::save_params(result.state.params, checkpoint_out);
  }
  std::cout << "chosen lambda " << outcome.chosen_lambda
            << (outcome.constraint_met ? "" : " (recall constraint not met)") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-regularized passage reranking pipeline", "fairrank"};
  app.require_subcommand(1);

  // label-bias
  std::string lb_collection, lb_lexicon, lb_out;
  int lb_jobs = 1;
  auto* lb = app.add_subcommand("label-bias", "Label passages with gender bias magnitudes");
  lb->add_option("--collection", lb_collection, "Passage collection TSV")->required();
  lb->add_option("--lexicon", lb_lexicon, "Lexicon JSON (default: built-in)");
  lb->add_option("--out", lb_out, "Output labels TSV")->required();
  lb->add_option("--jobs", lb_jobs, "Worker threads")->capture_default_str();

  // gen-synth
  corpus::SynthSpec spec;
  std::string gs_out, gs_splits;
  auto* gs = app.add_subcommand("gen-synth", "Generate a seeded synthetic corpus");
  gs->add_option("--out", gs_out, "Output directory")->required();
  gs->add_option("--queries", spec.num_queries, "Number of queries")->capture_default_str();
  gs->add_option("--candidates", spec.k, "Candidates per query")->capture_default_str();
  gs->add_option("--vocab", spec.vocab_size, "Topic vocabulary size")->capture_default_str();
  gs->add_option("--bias-strength", spec.bias_strength,
                 "Probability a hard distractor carries opposite-group terms")->capture_default_str();
  gs->add_option("--group-imbalance", spec.group_imbalance,
                 "Fraction of male-clicked queries")->capture_default_str();
  gs->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  gs->add_option("--splits", gs_splits,
                 "train,dev,test query counts; writes run.<split>.tsv + qrels.<split>.tsv");

  // train
  DataFlags tr_data;
  TrainFlags tr_flags;
  std::string tr_regularizer = "none", tr_init, tr_out, tr_state_out, tr_log;
  int tr_jobs = 1;
  auto* tr = app.add_subcommand("train", "Train the two-tower ranker");
  add_data_flags(tr, tr_data);
  add_train_flags(tr, tr_flags);
  tr->add_option("--regularizer", tr_regularizer, "none|pd|ts")->capture_default_str()
      ->check(CLI::IsMember({"none", "pd", "ts"}));
  tr->add_option("--init-params", tr_init, "Warm-start checkpoint (FRNK)");
  tr->add_option("--out", tr_out, "Output parameter checkpoint")->required();
  tr->add_option("--state-out", tr_state_out, "Full optimizer-state checkpoint");
  tr->add_option("--log", tr_log, "Per-step training log TSV");
  tr->add_option("--jobs", tr_jobs, "Worker threads")->capture_default_str();

  // rerank
  std::string rr_ckpt, rr_collection, rr_queries, rr_run, rr_tag = "fairrank", rr_out;
  std::size_t rr_top_k = 1000;
  int rr_jobs = 1;
  auto* rr = app.add_subcommand("rerank", "Score and reorder a candidate run");
  rr->add_option("--checkpoint", rr_ckpt, "Parameter checkpoint")->required();
  rr->add_option("--collection", rr_collection, "Passage collection TSV")->required();
  rr->add_option("--queries", rr_queries, "Query TSV")->required();
  rr->add_option("--run", rr_run, "Candidate run file")->required();
  rr->add_option("--top-k", rr_top_k, "Candidates reranked per query")->capture_default_str();
  rr->add_option("--tag", rr_tag, "Run tag for the output file")->capture_default_str();
  rr->add_option("--out", rr_out, "Output run file")->required();
  rr->add_option("--jobs", rr_jobs, "Worker threads")->capture_default_str();

  // eval
  std::string ev_run, ev_qrels, ev_labels, ev_collection, ev_lexicon, ev_report, ev_per_query;
  std::string ev_rab_t = "5,10";
  metrics::EvalOptions ev_opt;
  int ev_jobs = 1;
  auto* ev = app.add_subcommand("eval", "Ranking + fairness evaluation of a scored run");
  ev->add_option("--run", ev_run, "Scored run file")->required();
  ev->add_option("--qrels", ev_qrels, "Relevance judgments")->required();
  ev->add_option("--labels", ev_labels, "Bias labels TSV (from label-bias)");
  ev->add_option("--collection", ev_collection,
                 "Passage collection TSV (labels computed on the fly, enables RaB)");
  ev->add_option("--lexicon", ev_lexicon, "Lexicon JSON (default: built-in)");
  ev->add_option("--k-recall", ev_opt.k_recall, "Recall cutoff")->capture_default_str();
  ev->add_option("--k-ndcg", ev_opt.k_ndcg, "NDCG cutoff")->capture_default_str();
  ev->add_option("--rab-t", ev_rab_t, "RaB depths (csv)")->capture_default_str();
  ev->add_option("--report", ev_report, "Output report JSON")->required();
  ev->add_option("--per-query", ev_per_query, "Optional per-query PRF TSV");
  ev->add_option("--jobs", ev_jobs, "Worker threads")->capture_default_str();

  // grad-check
  std::uint64_t gc_seed = 1;
  std::size_t gc_fixtures = 120;
  double gc_tolerance = 1e-5;
  auto* gc = app.add_subcommand("grad-check",
                                "Finite-difference audit of every analytic gradient");
  gc->add_option("--seed", gc_seed, "Fixture seed")->capture_default_str();
  gc->add_option("--fixtures", gc_fixtures, "Fixtures per loss")->capture_default_str();
  gc->add_option("--tolerance", gc_tolerance, "Max relative error accepted")->capture_default_str();

  // grid-search
  DataFlags gr_data;
  TrainFlags gr_flags;
  std::string gr_dev_run, gr_dev_qrels, gr_regularizer = "ts", gr_grid, gr_out, gr_ckpt;
  double gr_tol = 0.10;
  int gr_jobs = 1;
  auto* gr = app.add_subcommand("grid-search",
                                "Pick the fairness weight on a dev split");
  add_data_flags(gr, gr_data);
  add_train_flags(gr, gr_flags);
  gr->add_option("--dev-run", gr_dev_run, "Dev candidate run file")->required();
  gr->add_option("--dev-qrels", gr_dev_qrels, "Dev relevance judgments")->required();
  gr->add_option("--regularizer", gr_regularizer, "pd|ts")->capture_default_str()
      ->check(CLI::IsMember({"pd", "ts"}));
  gr->add_option("--grid", gr_grid, "Lambda grid (csv, default 0.1,0.5,1,5,10)");
  gr->add_option("--recall-tolerance", gr_tol, "Allowed relative Recall@10 loss")->capture_default_str();
  gr->add_option("--out", gr_out, "Output grid report JSON")->required();
  gr->add_option("--checkpoint-out", gr_ckpt, "Retrain at the chosen lambda and save");
  gr->add_option("--jobs", gr_jobs, "Worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (*lb) return cmd_label_bias(lb_collection, lb_lexicon, lb_out, lb_jobs);
    if (*gs) return cmd_gen_synth(spec, gs_out, gs_splits);
    if (*tr)
      return cmd_train(tr_data, tr_flags, tr_regularizer, tr_init, tr_out, tr_state_out,
                       tr_log, tr_jobs);
    if (*rr)
      return cmd_rerank(rr_ckpt, rr_collection, rr_queries, rr_run, rr_top_k, rr_tag, rr_out,
                        rr_jobs);
    if (*ev) {
      ev_opt.rab_t = parse_size_list(ev_rab_t, "--rab-t");
      return cmd_eval(ev_run, ev_qrels, ev_labels, ev_collection, ev_lexicon, ev_opt,
                      ev_report, ev_per_query, ev_jobs);
    }
    if (*gc) return cmd_grad_check(gc_seed, gc_fixtures, gc_tolerance);
    if (*gr)
      return cmd_grid_search(gr_data, gr_dev_run, gr_dev_qrels, gr_flags, gr_regularizer,
                             gr_grid, gr_tol, gr_out, gr_ckpt, gr_jobs);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // flag errors are exit 1, --help is 0
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
