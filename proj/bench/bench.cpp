// Serial vs parallel wall time for the batch kernels. Each kernel is timed
// as min over repeats after one warmup run; both modes are checksummed to
// show they compute the same numbers. Not a test -- run it by hand:
//   build/bench/fairrank_bench [--queries N] [--candidates K] [--repeats R]
#include <omp.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include <CLI11.hpp>

#include "fairrank/bias.hpp"
#include "fairrank/corpus.hpp"
#include "fairrank/encoder.hpp"
#include "fairrank/metrics.hpp"
#include "fairrank/parallel.hpp"
#include "fairrank/trainer.hpp"

using namespace fairrank;

namespace {

struct Sample {
  double seconds = 0.0;
  double checksum = 0.0;
};

template <typename F>
Sample timed(std::size_t repeats, F&& run) {
  Sample best;
  best.checksum = run();  // warmup, also pins the checksum
  best.seconds = 1e300;
  for (std::size_t r = 0; r < repeats; ++r) {
    const double t0 = omp_get_wtime();
    const double sum = run();
    const double t1 = omp_get_wtime();
    if (t1 - t0 < best.seconds) best.seconds = t1 - t0;
    if (sum != best.checksum) std::fprintf(stderr, "warning: unstable checksum\n");
  }
  return best;
}

void row(const char* name, const Sample& serial, const Sample& parallel) {
  const char* match = serial.checksum == parallel.checksum ? "yes" : "NO";
  std::printf("%-14s %10.4f s %10.4f s %9.2fx   %s\n", name, serial.seconds,
              parallel.seconds, serial.seconds / parallel.seconds, match);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel kernel benchmark", "fairrank_bench"};
  std::size_t queries = 2000, candidates = 16, repeats = 3, threads = 0;
  app.add_option("--queries", queries, "synthetic corpus size");
  app.add_option("--candidates", candidates, "candidates per query");
  app.add_option("--repeats", repeats, "timed repeats per kernel (min is kept)");
  app.add_option("--threads", threads, "OpenMP thread count (0 = default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_threads(threads);

  corpus::SynthSpec spec;
  spec.num_queries = queries;
  spec.k = candidates;
  spec.vocab_size = 5000;
  spec.bias_strength = 0.7;
  spec.group_imbalance = 0.6;
  spec.seed = 42;
  const auto corpus = corpus::generate_synthetic(spec);
  const auto data = trainer::bind_training_data(corpus.passages, corpus.queries,
                                                corpus.pairs, corpus.lexicon);

  trainer::TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 1;
  cfg.seed = 7;
  cfg.encoder.vocab_buckets = 1u << 15;
  cfg.encoder.seed = cfg.seed;
  cfg.fairness.regularizer = losses::Regularizer::ts;
  cfg.fairness.lambda_value = 1.0;
  const auto params = encoder::init_params(cfg.encoder);

  std::printf("corpus: %zu queries x %zu candidates, %zu threads\n", queries,
              candidates, static_cast<std::size_t>(current_threads()));
  std::printf("%-14s %12s %12s %10s   %s\n", "kernel", "serial", "parallel",
              "speedup", "same result");

  const auto bench_labels = [&](Exec exec) {
    return timed(repeats, [&] {
      const auto labels = bias::label_collection(corpus.passages, corpus.lexicon, exec);
      double sum = 0.0;
      for (const auto& l : labels) sum += l.magnitude;
      return sum;
    });
  };
  row("label-bias", bench_labels(Exec::serial), bench_labels(Exec::parallel));

  const auto bench_score = [&](Exec exec) {
    return timed(repeats, [&] {
      const auto scores =
          encoder::score_pairs(params, corpus.passages, corpus.queries, data.pairs, exec);
      double sum = 0.0;
      for (const auto& s : scores)
        for (double v : s) sum += v;
      return sum;
    });
  };
  row("score-pairs", bench_score(Exec::serial), bench_score(Exec::parallel));

  std::vector<bias::SideMagnitudes> sides(corpus.passages.size());
  for (std::size_t i = 0; i < corpus.passages.size(); ++i)
    sides[i] = bias::side_magnitudes(corpus.passages.items[i].tokens, corpus.lexicon);
  const auto eval_pairs = trainer::score_eval_pairs(params, data, &sides);
  const auto bench_eval = [&](Exec exec) {
    return timed(repeats, [&] {
      const auto report = metrics::evaluate(eval_pairs, metrics::EvalOptions{}, exec);
      return report.recall + report.mrr + report.ndcg +
             report.delta_a_prf.value_or(0.0) + report.rab->at(5);
    });
  };
  row("evaluate", bench_eval(Exec::serial), bench_eval(Exec::parallel));

  const auto sched = trainer::make_schedule(cfg, data.pairs.size());
  const auto batches = trainer::make_batches(data.pairs.size(), cfg.batch_size, cfg.seed, 0);
  const auto bench_epoch = [&](Exec exec) {
    return timed(repeats, [&] {
      auto state = trainer::init_state(cfg);
      double sum = 0.0;
      for (const auto& batch : batches)
        sum += trainer::train_step(state, data, batch, cfg, sched, exec).total;
      return sum;
    });
  };
  row("train-epoch", bench_epoch(Exec::serial), bench_epoch(Exec::parallel));

  return 0;
}
