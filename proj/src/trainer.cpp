#include "fairrank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fairrank/errors.hpp"
#include "fairrank/rng.hpp"

namespace fairrank::trainer {

void TrainConfig::validate() const {
  if (batch_size < 2) throw FormatError("batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw FormatError("learning_rate must be > 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0))
    throw FormatError("warmup_ratio must be in [0,1)");
  if (weight_decay < 0.0) throw FormatError("weight_decay must be >= 0");
  if (epochs == 0) throw FormatError("epochs must be >= 1");
  if (lambda_grid.empty()) throw FormatError("lambda_grid must be non-empty");
  fairness.validate();
}

TrainState::TrainState(const encoder::Config& config)
    : params(encoder::init_params(config)), m(params), v(params) {}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state(cfg.encoder);
  if (cfg.fairness.lambda_mode == losses::LambdaMode::trainable)
    state.lambda_theta = losses::inverse_softplus(std::max(cfg.fairness.lambda_value, 1e-4));
  return state;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_pairs,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  if (n_pairs == 0) throw FormatError("make_batches needs at least one pair");
  if (batch_size == 0) throw FormatError("batch_size must be >= 1");
  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
  Rng rng(splitmix64(seed ^ splitmix64(0xBA7C4E5ull + epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n_pairs; at += batch_size) {
    const std::size_t end = std::min(n_pairs, at + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Schedule make_schedule(const TrainConfig& cfg, std::size_t n_pairs) {
  Schedule s;
  const std::size_t per_epoch = (n_pairs + cfg.batch_size - 1) / cfg.batch_size;
  s.total_steps = cfg.epochs * per_epoch;
  s.warmup_steps = static_cast<std::size_t>(cfg.warmup_ratio * static_cast<double>(s.total_steps));
  return s;
}

double lr_at(double base, const Schedule& sched, std::size_t step) {
  const double t = static_cast<double>(sched.total_steps);
  const double w = static_cast<double>(sched.warmup_steps);
  const double s = static_cast<double>(step);
  if (step >= sched.total_steps) return 0.0;
  double warm = sched.warmup_steps > 0 ? s / w : 1.0;
  double decay = (t - s) / (t - w);
  return base * std::min(warm, decay);
}

TrainData bind_training_data(const corpus::Collection& coll,
                             const corpus::QuerySet& queries,
                             const std::vector<corpus::DataPair>& pairs,
                             const bias::Lexicon& lex) {
  TrainData data;
  data.coll = &coll;
  data.queries = &queries;
  data.pairs = corpus::bind_pairs(coll, queries, pairs);
  auto labels = bias::label_collection(coll, lex);
  data.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    data.labels[i] = labels[i].group == bias::Group::male
                         ? 1
                         : (labels[i].group == bias::Group::female ? -1 : 0);
  }
  return data;
}

namespace {

losses::ScoredPair make_scored(const TrainData& data, const corpus::BoundPair& bp,
                               std::vector<double> scores) {
  losses::ScoredPair sp;
  sp.qid = data.queries->items[bp.query].id;
  sp.scores = std::move(scores);
  sp.clicked = bp.clicked;
  sp.bias_labels.reserve(bp.candidates.size());
  for (auto ci : bp.candidates) sp.bias_labels.push_back(data.labels[ci]);
  return sp;
}

void adamw_update(encoder::Matrix& theta, encoder::Matrix& m, encoder::Matrix& v,
                  const encoder::Matrix& g, double lr, double wd, std::uint64_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.data.size(); ++i) {
    const double gi = g.data[i];
    m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
    v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    theta.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta.data[i]);
  }
}

void sgd_update(encoder::Matrix& theta, const encoder::Matrix& g, double lr, double wd) {
  for (std::size_t i = 0; i < theta.data.size(); ++i)
    theta.data[i] -= lr * (g.data[i] + wd * theta.data[i]);
}

double grad_sq_sum(const encoder::Matrix& g) {
  double s = 0.0;
  for (double x : g.data) s += x * x;
  return s;
}

}  // namespace

StepLog train_step(TrainState& state, const TrainData& data,
                   const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                   const Schedule& sched, Exec exec) {
  if (batch.empty()) throw FormatError("empty batch");

  // Forward: score each pair into its own slot (parallel-safe), then build
  // the loss in fixed batch order.
  std::vector<std::vector<double>> scores(batch.size());
  for_each_index(exec, batch.size(), [&](std::size_t i) {
    encoder::score_pair(state.params, *data.coll, *data.queries, data.pairs[batch[i]],
                        scores[i]);
  });

  std::vector<losses::ScoredPair> scored;
  scored.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    scored.push_back(make_scored(data, data.pairs[batch[i]], std::move(scores[i])));

  auto tl = losses::total_loss(scored, cfg.fairness, state.lambda_theta);
  if (!std::isfinite(tl.value)) {
    std::string qids;
    for (const auto& sp : scored) {
      if (!qids.empty()) qids += ", ";
      qids += sp.qid;
    }
    throw NumericalError("non-finite loss at step " + std::to_string(state.step) +
                         " over queries [" + qids + "]");
  }

  // Backward: per-pair contributions accumulated serially in batch order so
  // both Exec modes produce identical sums.
  encoder::GradBuffer grads(state.params);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& bp = data.pairs[batch[i]];
    const auto& q = data.queries->items[bp.query];
    for (std::size_t j = 0; j < bp.candidates.size(); ++j) {
      encoder::backward_sim(state.params, q.tokens,
                            data.coll->items[bp.candidates[j]].tokens,
                            tl.score_grads[i][j], grads);
    }
  }

  const double lr = lr_at(cfg.learning_rate, sched, state.step);
  const std::uint64_t t = state.step + 1;
  double gsq = grad_sq_sum(grads.query.embedding) + grad_sq_sum(grads.query.projection);
  if (!cfg.encoder.shared_towers)
    gsq += grad_sq_sum(grads.passage.embedding) + grad_sq_sum(grads.passage.projection);

  auto update_tower = [&](encoder::Tower& tower, encoder::Tower& m, encoder::Tower& v,
                          const encoder::Tower& g) {
    if (cfg.optimizer == Optimizer::adam) {
      adamw_update(tower.embedding, m.embedding, v.embedding, g.embedding, lr,
                   cfg.weight_decay, t);
      adamw_update(tower.projection, m.projection, v.projection, g.projection, lr,
                   cfg.weight_decay, t);
    } else {
      sgd_update(tower.embedding, g.embedding, lr, cfg.weight_decay);
      sgd_update(tower.projection, g.projection, lr, cfg.weight_decay);
    }
  };
  update_tower(state.params.query, state.m.query, state.v.query, grads.query);
  if (!cfg.encoder.shared_towers)
    update_tower(state.params.passage, state.m.passage, state.v.passage, grads.passage);

  if (cfg.fairness.lambda_mode == losses::LambdaMode::trainable) {
    // no weight decay on lambda's parameter
    const double g = tl.lambda_theta_grad;
    gsq += g * g;
    if (cfg.optimizer == Optimizer::adam) {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      state.lambda_m = b1 * state.lambda_m + (1.0 - b1) * g;
      state.lambda_v = b2 * state.lambda_v + (1.0 - b2) * g * g;
      const double mhat = state.lambda_m / (1.0 - std::pow(b1, static_cast<double>(t)));
      const double vhat = state.lambda_v / (1.0 - std::pow(b2, static_cast<double>(t)));
      state.lambda_theta -= lr * mhat / (std::sqrt(vhat) + eps);
    } else {
      state.lambda_theta -= lr * g;
    }
  }

  StepLog log;
  log.step = state.step;
  log.lr = lr;
  log.l_rank = tl.ranking;
  log.l_fair = tl.fairness;
  log.lambda = tl.lambda;
  log.total = tl.value;
  log.grad_norm = std::sqrt(gsq);
  ++state.step;
  return log;
}

TrainResult train(const TrainConfig& cfg, const TrainData& data, Exec exec,
                  const encoder::Params* init) {
  cfg.validate();
  if (data.pairs.empty()) throw FormatError("no training pairs");
  TrainResult result{init_state(cfg), {}};
  if (init) {
    if (init->config.vocab_buckets != cfg.encoder.vocab_buckets ||
        init->config.d_emb != cfg.encoder.d_emb || init->config.d != cfg.encoder.d ||
        init->config.shared_towers != cfg.encoder.shared_towers)
      throw FormatError("init params shape does not match the encoder config");
    result.state.params = *init;
  }
  const auto sched = make_schedule(cfg, data.pairs.size());
  result.logs.reserve(sched.total_steps);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : make_batches(data.pairs.size(), cfg.batch_size, cfg.seed, epoch))
      result.logs.push_back(train_step(result.state, data, batch, cfg, sched, exec));
  }
  return result;
}

void write_log(const std::vector<StepLog>& logs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  char buf[160];
  for (const auto& l : logs) {
    std::snprintf(buf, sizeof buf, "%llu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  static_cast<unsigned long long>(l.step), l.lr, l.l_rank, l.l_fair,
                  l.lambda, l.total);
    out << buf;
  }
}

namespace {

constexpr char kStateMagic[4] = {'F', 'R', 'S', 'T'};
constexpr std::uint32_t kStateVersion = 1;

void put_raw(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_matrix_data(std::ostream& out, const encoder::Matrix& m) {
  put_raw(out, m.data.data(), m.data.size() * sizeof(double));
}

void get_matrix_data(std::istream& in, encoder::Matrix& m, const std::string& path) {
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!in) throw FormatError(path + ": truncated state file");
}

}  // namespace

void save_state(const TrainState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(kStateMagic, 4);
  put_raw(out, &kStateVersion, sizeof kStateVersion);
  encoder::write_params(out, state.params);
  put_raw(out, &state.lambda_theta, sizeof state.lambda_theta);
  put_raw(out, &state.step, sizeof state.step);
  put_raw(out, &state.lambda_m, sizeof state.lambda_m);
  put_raw(out, &state.lambda_v, sizeof state.lambda_v);
  put_matrix_data(out, state.m.query.embedding);
  put_matrix_data(out, state.m.query.projection);
  put_matrix_data(out, state.v.query.embedding);
  put_matrix_data(out, state.v.query.projection);
  if (!state.params.config.shared_towers) {
    put_matrix_data(out, state.m.passage.embedding);
    put_matrix_data(out, state.m.passage.projection);
    put_matrix_data(out, state.v.passage.embedding);
    put_matrix_data(out, state.v.passage.projection);
  }
  if (!out) throw FormatError("failed writing " + path);
}

TrainState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || std::memcmp(magic, kStateMagic, 4) != 0)
    throw FormatError(path + ": not a training state file");
  if (version != kStateVersion)
    throw FormatError(path + ": unsupported state version " + std::to_string(version));
  auto params = encoder::read_params(in, path);
  TrainState state(params.config);
  state.params = std::move(params);
  in.read(reinterpret_cast<char*>(&state.lambda_theta), sizeof state.lambda_theta);
  in.read(reinterpret_cast<char*>(&state.step), sizeof state.step);
  in.read(reinterpret_cast<char*>(&state.lambda_m), sizeof state.lambda_m);
  in.read(reinterpret_cast<char*>(&state.lambda_v), sizeof state.lambda_v);
  if (!in) throw FormatError(path + ": truncated state file");
  get_matrix_data(in, state.m.query.embedding, path);
  get_matrix_data(in, state.m.query.projection, path);
  get_matrix_data(in, state.v.query.embedding, path);
  get_matrix_data(in, state.v.query.projection, path);
  if (!state.params.config.shared_towers) {
    get_matrix_data(in, state.m.passage.embedding, path);
    get_matrix_data(in, state.m.passage.projection, path);
    get_matrix_data(in, state.v.passage.embedding, path);
    get_matrix_data(in, state.v.passage.projection, path);
  }
  return state;
}

std::vector<metrics::EvalPair> score_eval_pairs(
    const encoder::Params& params, const TrainData& data,
    const std::vector<bias::SideMagnitudes>* sides, Exec exec) {
  auto scores = encoder::score_pairs(params, *data.coll, *data.queries, data.pairs, exec);
  std::vector<metrics::EvalPair> out(data.pairs.size());
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    metrics::EvalPair ep;
    ep.sp = make_scored(data, data.pairs[i], std::move(scores[i]));
    if (sides) {
      ep.sides.reserve(data.pairs[i].candidates.size());
      for (auto ci : data.pairs[i].candidates) ep.sides.push_back((*sides)[ci]);
    }
    out[i] = std::move(ep);
  }
  return out;
}

GridOutcome grid_search_lambda(const TrainConfig& cfg, const TrainData& train_data,
                               const TrainData& dev_data, double recall_tolerance,
                               Exec exec, std::ostream* progress) {
  cfg.validate();
  if (cfg.fairness.regularizer == losses::Regularizer::none)
    throw FormatError("grid search needs a fairness regularizer");

  metrics::EvalOptions opt;
  opt.with_rab = false;

  auto run_one = [&](double lambda) {
    TrainConfig c = cfg;
    c.fairness.lambda_value = lambda;
    if (lambda == 0.0) c.fairness.regularizer = losses::Regularizer::none;
    auto result = train(c, train_data, exec);
    auto pairs = score_eval_pairs(result.state.params, dev_data, nullptr, exec);
    return metrics::evaluate(pairs, opt, exec);
  };

  GridOutcome out;
  out.baseline = run_one(0.0);
  if (progress)
    *progress << "lambda 0 (baseline): recall@" << opt.k_recall << " = " << out.baseline.recall
              << ", dA-PRF = "
              << (out.baseline.delta_a_prf ? std::to_string(*out.baseline.delta_a_prf)
                                           : std::string("undefined"))
              << "\n";

  for (double lambda : cfg.lambda_grid) {
    GridEntry entry;
    entry.lambda = lambda;
    entry.report = run_one(lambda);
    if (progress)
      *progress << "lambda " << lambda << ": recall@" << opt.k_recall << " = "
                << entry.report.recall << ", dA-PRF = "
                << (entry.report.delta_a_prf ? std::to_string(*entry.report.delta_a_prf)
                                             : std::string("undefined"))
                << "\n";
    out.entries.push_back(std::move(entry));
  }

  const double floor = (1.0 - recall_tolerance) * out.baseline.recall;
  auto fairness_of = [](const GridEntry& e) {
    return e.report.delta_a_prf ? *e.report.delta_a_prf
                                : std::numeric_limits<double>::infinity();
  };
  auto better = [&](const GridEntry& a, const GridEntry& b) {
    if (fairness_of(a) != fairness_of(b)) return fairness_of(a) < fairness_of(b);
    return a.lambda < b.lambda;  // ties toward the smaller penalty
  };

  const GridEntry* best_ok = nullptr;
  const GridEntry* best_any = nullptr;
  for (const auto& e : out.entries) {
    if (!best_any || better(e, *best_any)) best_any = &e;
    if (e.report.recall >= floor && (!best_ok || better(e, *best_ok))) best_ok = &e;
  }
  if (best_ok) {
    out.chosen_lambda = best_ok->lambda;
    out.constraint_met = true;
  } else {
    out.chosen_lambda = best_any->lambda;
    out.constraint_met = false;
  }
  return out;
}

}  // namespace fairrank::trainer
