#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fairrank/corpus.hpp"
#include "fairrank/encoder.hpp"
#include "fairrank/losses.hpp"
#include "fairrank/metrics.hpp"
#include "fairrank/parallel.hpp"

namespace fairrank::trainer {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  std::size_t batch_size = 150;
  double learning_rate = 3e-5;
  double warmup_ratio = 0.10;
  double weight_decay = 0.01;
  std::size_t epochs = 3;
  std::uint64_t seed = 1;
  losses::FairnessConfig fairness;
  std::vector<double> lambda_grid = {0.1, 0.5, 1.0, 5.0, 10.0};
  Optimizer optimizer = Optimizer::adam;
  encoder::Config encoder;

  void validate() const;  // throws FormatError
};

/// Everything mutable across steps. Saving and reloading this reproduces the
/// remaining trajectory bit for bit; batch order needs no RNG state because
/// shuffles are keyed by (seed, epoch).
struct TrainState {
  encoder::Params params;
  double lambda_theta = 0.0;  // lambda = softplus(theta) in trainable mode
  std::uint64_t step = 0;
  encoder::GradBuffer m, v;  // adam moments
  double lambda_m = 0.0, lambda_v = 0.0;

  explicit TrainState(const encoder::Config& config);
};

/// Fresh seeded parameters; lambda_theta = inverse_softplus(lambda_value)
/// in trainable mode.
TrainState init_state(const TrainConfig& cfg);

/// Index batches under a deterministic shuffle keyed by (seed, epoch); the
/// final short batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n_pairs,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed,
                                                   std::size_t epoch);

struct Schedule {
  std::size_t total_steps = 0;
  std::size_t warmup_steps = 0;
};

Schedule make_schedule(const TrainConfig& cfg, std::size_t n_pairs);

/// Linear warmup to base over warmup_steps, then linear decay to 0 at
/// total_steps. lr(0) = 0 when warmup_steps > 0.
double lr_at(double base, const Schedule& sched, std::size_t step);

/// A corpus bound for training/evaluation: resolved pairs plus per-passage
/// bias labels.
struct TrainData {
  const corpus::Collection* coll = nullptr;
  const corpus::QuerySet* queries = nullptr;
  std::vector<corpus::BoundPair> pairs;
  std::vector<int> labels;  // d(p) per collection passage
};

TrainData bind_training_data(const corpus::Collection& coll,
                             const corpus::QuerySet& queries,
                             const std::vector<corpus::DataPair>& pairs,
                             const bias::Lexicon& lex);

struct StepLog {
  std::uint64_t step = 0;
  double lr = 0.0;
  double l_rank = 0.0;
  double l_fair = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

/// One optimizer step over the given batch (indices into data.pairs).
/// Forward scoring runs under `exec` with per-pair output slots; gradient
/// accumulation and the parameter update run in fixed order, so results are
/// identical for both Exec modes. Decoupled weight decay applies to encoder
/// matrices only, never to lambda_theta. Throws NumericalError (with the
/// batch's query ids) if the loss goes non-finite.
StepLog train_step(TrainState& state, const TrainData& data,
                   const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                   const Schedule& sched, Exec exec = Exec::parallel);

struct TrainResult {
  TrainState state;
  std::vector<StepLog> logs;
};

/// Runs the full schedule. When `init` is given its weights replace the fresh
/// seeded ones (optimizer state starts cold), so a ranking-only model can be
/// fine-tuned with a fairness term.
TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  Exec exec = Exec::parallel,
                  const encoder::Params* init = nullptr);

// Training log: `step<TAB>lr<TAB>L_rank<TAB>L_fair<TAB>lambda<TAB>total`.
void write_log(const std::vector<StepLog>& logs, const std::string& path);

// Full-state checkpoint (params + moments + step + lambda_theta).
void save_state(const TrainState& state, const std::string& path);
TrainState load_state(const std::string& path);

/// Scores every pair of `data` with the given parameters and packages them
/// for module metrics. `sides` (per collection passage) may be null; RaB is
/// then unavailable.
std::vector<metrics::EvalPair> score_eval_pairs(
    const encoder::Params& params, const TrainData& data,
    const std::vector<bias::SideMagnitudes>* sides, Exec exec = Exec::parallel);

struct GridEntry {
  double lambda = 0.0;
  metrics::EvalReport report;
};

struct GridOutcome {
  double chosen_lambda = 0.0;
  bool constraint_met = true;          // some lambda kept recall within tolerance
  metrics::EvalReport baseline;        // the lambda = 0 run
  std::vector<GridEntry> entries;      // one per grid value, grid order
};

/// Trains one model per grid value (identical seed-derived init each, so
/// runs differ only in lambda) plus a lambda=0 baseline, evaluates each on
/// dev, and picks the lambda minimizing |dA-PRF| among those with
/// Recall@10 >= (1 - recall_tolerance) * baseline Recall@10; ties go to the
/// smaller lambda. If no lambda passes the constraint, the best |dA-PRF| is
/// returned with constraint_met = false. Undefined |dA-PRF| sorts last.
GridOutcome grid_search_lambda(const TrainConfig& cfg, const TrainData& train_data,
                               const TrainData& dev_data,
                               double recall_tolerance = 0.10,
                               Exec exec = Exec::parallel,
                               std::ostream* progress = nullptr);

}  // namespace fairrank::trainer
