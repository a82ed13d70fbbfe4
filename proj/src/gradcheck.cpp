#include "fairrank/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "fairrank/encoder.hpp"
#include "fairrank/losses.hpp"
#include "fairrank/rng.hpp"

namespace fairrank::trainer {

namespace {

constexpr double kH = 1e-5;

double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / denom;
}

// central difference of f around x
template <class F>
double central(F&& f, double& x) {
  const double saved = x;
  x = saved + kH;
  const double hi = f();
  x = saved - kH;
  const double lo = f();
  x = saved;
  return (hi - lo) / (2.0 * kH);
}

// A pair is FD-safe when no indicator is within 1e-3 of flipping and the
// clicked score is not near 0 (where the nPRF sqrt kinks).
bool fd_safe(const losses::ScoredPair& sp) {
  const double rj = sp.scores[sp.clicked];
  if (std::abs(rj) < 1e-3) return false;
  for (std::size_t j = 0; j < sp.k(); ++j) {
    if (j == sp.clicked) continue;
    if (std::abs(rj - sp.scores[j]) < 1e-3) return false;
  }
  return true;
}

losses::ScoredPair random_pair(Rng& rng, std::size_t k, bool neutral_allowed) {
  losses::ScoredPair sp;
  sp.qid = "fixture";
  sp.scores.resize(k);
  for (auto& s : sp.scores) s = rng.uniform(-2.0, 2.0);
  sp.clicked = rng.below(k);
  sp.bias_labels.resize(k);
  for (auto& l : sp.bias_labels)
    l = static_cast<int>(rng.below(3)) - 1;
  if (!neutral_allowed && sp.bias_labels[sp.clicked] == 0)
    sp.bias_labels[sp.clicked] = rng.bernoulli(0.5) ? 1 : -1;
  return sp;
}

struct Acc {
  GradCheckEntry entry;
  void observe(double analytic, double numeric) {
    entry.max_rel_err = std::max(entry.max_rel_err, rel_err(analytic, numeric));
  }
};

void check_encoder(Rng rng, std::size_t fixtures, GradCheckReport& rep) {
  Acc acc;
  acc.entry.name = "encoder_sim";
  encoder::Config cfg;
  cfg.vocab_buckets = 64;
  cfg.d_emb = 8;
  cfg.d = 6;

  auto random_text = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::string> tokens;
    const std::size_t n = lo + rng.below(hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i)
      tokens.push_back("tok" + std::to_string(rng.below(40)));
    return tokens;
  };

  for (std::size_t f = 0; f < fixtures; ++f) {
    cfg.seed = rng.next_u64();
    auto params = encoder::init_params(cfg);
    // perturb away from the identity projection so gradients are generic
    for (auto& x : params.query.projection.data) x += rng.uniform(-0.1, 0.1);
    const auto qt = random_text(1, 6);
    const auto pt = random_text(1, 8);
    const double coeff = rng.uniform(-2.0, 2.0);

    encoder::GradBuffer grads(params);
    encoder::backward_sim(params, qt, pt, coeff, grads);

    const std::size_t n_emb = params.query.embedding.data.size();
    const std::size_t n_all = n_emb + params.query.projection.data.size();
    for (int probe = 0; probe < 20; ++probe) {
      const std::size_t idx = rng.below(n_all);
      double& x = idx < n_emb ? params.query.embedding.data[idx]
                              : params.query.projection.data[idx - n_emb];
      const double analytic = idx < n_emb ? grads.query.embedding.data[idx]
                                          : grads.query.projection.data[idx - n_emb];
      const double numeric =
          central([&] { return coeff * encoder::sim(params, qt, pt); }, x);
      acc.observe(analytic, numeric);
    }
    ++acc.entry.checked;
  }
  rep.entries.push_back(acc.entry);
}

void check_ranking(Rng rng, std::size_t fixtures, GradCheckReport& rep) {
  Acc acc;
  acc.entry.name = "ranking_loss";
  for (std::size_t f = 0; f < fixtures; ++f) {
    auto sp = random_pair(rng, 2 + rng.below(9), true);
    const auto vg = losses::ranking_loss(sp);
    for (std::size_t j = 0; j < sp.k(); ++j) {
      const double numeric =
          central([&] { return losses::ranking_loss(sp).value; }, sp.scores[j]);
      acc.observe(vg.grad[j], numeric);
    }
    ++acc.entry.checked;
  }
  rep.entries.push_back(acc.entry);
}

void check_nprf(Rng rng, std::size_t fixtures, GradCheckReport& rep) {
  Acc acc;
  acc.entry.name = "nprf";
  std::size_t done = 0;
  while (done < fixtures) {
    auto sp = random_pair(rng, 2 + rng.below(9), true);
    if (!fd_safe(sp)) {
      ++acc.entry.skipped;
      continue;
    }
    const auto vg = losses::nprf(sp);
    for (std::size_t j = 0; j < sp.k(); ++j) {
      const double numeric = central([&] { return losses::nprf(sp).value; }, sp.scores[j]);
      acc.observe(vg.grad[j], numeric);
    }
    ++acc.entry.checked;
    ++done;
  }
  rep.entries.push_back(acc.entry);
}

losses::BatchFairnessState random_state(Rng& rng, std::size_t min_side) {
  losses::BatchFairnessState st;
  const std::size_t nm = min_side + rng.below(6);
  const std::size_t nf = min_side + rng.below(6);
  st.male_nprfs.resize(nm);
  st.female_nprfs.resize(nf);
  for (auto& x : st.male_nprfs) x = rng.uniform(0.0, 2.0);
  for (auto& x : st.female_nprfs) x = rng.uniform(0.0, 2.0);
  return st;
}

// Near-zero TS denominators blow the loss up to ~1/epsilon, which is exact
// math but numerically hopeless for central differences (the huge constant
// term cancels). Those points are excluded like indicator flips; the values
// themselves are covered by closed-form unit tests.
bool ts_conditioned(const losses::BatchFairnessState& st) {
  if (st.n_m() == 0 || st.n_f() == 0) return true;  // guarded zero branch
  auto var_over_n = [](const std::vector<double>& xs) {
    double mu = 0.0;
    for (double x : xs) mu += x;
    mu /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - mu) * (x - mu);
    return v / static_cast<double>(xs.size() * xs.size());
  };
  return var_over_n(st.male_nprfs) + var_over_n(st.female_nprfs) >= 1e-3;
}

void check_pd(Rng rng, std::size_t fixtures, GradCheckReport& rep) {
  Acc acc;
  acc.entry.name = "pd_loss";
  for (std::size_t f = 0; f < fixtures; ++f) {
    auto st = random_state(rng, 1);
    const auto gg = losses::pd_loss(st);
    for (std::size_t c = 0; c < st.n_m(); ++c) {
      const double numeric =
          central([&] { return losses::pd_loss(st).value; }, st.male_nprfs[c]);
      acc.observe(gg.male[c], numeric);
    }
    for (std::size_t d = 0; d < st.n_f(); ++d) {
      const double numeric =
          central([&] { return losses::pd_loss(st).value; }, st.female_nprfs[d]);
      acc.observe(gg.female[d], numeric);
    }
    ++acc.entry.checked;
  }
  rep.entries.push_back(acc.entry);
}

void check_ts(Rng rng, std::size_t fixtures, losses::TsFormula formula, const char* name,
              GradCheckReport& rep) {
  Acc acc;
  acc.entry.name = name;
  losses::FairnessConfig cfg;
  cfg.ts_formula = formula;
  std::size_t done = 0;
  while (done < fixtures) {
    auto st = random_state(rng, 1);
    if (!ts_conditioned(st)) {
      ++acc.entry.skipped;
      continue;
    }
    const auto gg = losses::ts_loss(st, cfg);
    for (std::size_t c = 0; c < st.n_m(); ++c) {
      const double numeric =
          central([&] { return losses::ts_loss(st, cfg).value; }, st.male_nprfs[c]);
      acc.observe(gg.male[c], numeric);
    }
    for (std::size_t d = 0; d < st.n_f(); ++d) {
      const double numeric =
          central([&] { return losses::ts_loss(st, cfg).value; }, st.female_nprfs[d]);
      acc.observe(gg.female[d], numeric);
    }
    ++acc.entry.checked;
    ++done;
  }
  rep.entries.push_back(acc.entry);
}

void check_total(Rng rng, std::size_t fixtures, losses::LambdaMode mode, const char* name,
                 GradCheckReport& rep) {
  Acc acc;
  acc.entry.name = name;
  std::size_t done = 0;
  while (done < fixtures) {
    losses::FairnessConfig cfg;
    cfg.regularizer = rng.bernoulli(0.5) ? losses::Regularizer::pd : losses::Regularizer::ts;
    cfg.ts_formula = rng.bernoulli(0.5) ? losses::TsFormula::standard_t_squared
                                        : losses::TsFormula::literal_paper;
    cfg.lambda_mode = mode;
    cfg.lambda_value = rng.uniform(0.0, 2.0);
    double theta = rng.uniform(-1.0, 1.5);

    // at least two pairs per group so the min_group_size gate stays open
    const std::size_t b = 4 + rng.below(3);
    std::vector<losses::ScoredPair> batch;
    bool safe = true;
    for (std::size_t i = 0; i < b; ++i) {
      batch.push_back(random_pair(rng, 2 + rng.below(5), true));
      if (i < 4) batch.back().bias_labels[batch.back().clicked] = i < 2 ? 1 : -1;
      if (batch.back().clicked_group() != bias::Group::neutral && !fd_safe(batch.back()))
        safe = false;
    }
    if (safe && cfg.regularizer == losses::Regularizer::ts)
      safe = ts_conditioned(losses::collect_nprfs(batch));
    if (!safe) {
      ++acc.entry.skipped;
      continue;
    }

    const auto tl = losses::total_loss(batch, cfg, theta);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < batch[i].k(); ++j) {
        const double numeric = central(
            [&] { return losses::total_loss(batch, cfg, theta).value; },
            batch[i].scores[j]);
        acc.observe(tl.score_grads[i][j], numeric);
      }
    }
    if (mode == losses::LambdaMode::trainable) {
      const double numeric =
          central([&] { return losses::total_loss(batch, cfg, theta).value; }, theta);
      acc.observe(tl.lambda_theta_grad, numeric);
    }
    ++acc.entry.checked;
    ++done;
  }
  rep.entries.push_back(acc.entry);
}

}  // namespace

bool GradCheckReport::all_ok() const {
  for (const auto& e : entries)
    if (!(e.max_rel_err < tolerance)) return false;
  return !entries.empty();
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

GradCheckReport grad_check(std::uint64_t seed, std::size_t fixtures_per_loss) {
  GradCheckReport rep;
  Rng root(seed);
  check_encoder(root.fork(1), fixtures_per_loss, rep);
  check_ranking(root.fork(2), fixtures_per_loss, rep);
  check_nprf(root.fork(3), fixtures_per_loss, rep);
  check_pd(root.fork(4), fixtures_per_loss, rep);
  check_ts(root.fork(5), fixtures_per_loss, losses::TsFormula::standard_t_squared,
           "ts_standard", rep);
  check_ts(root.fork(6), fixtures_per_loss, losses::TsFormula::literal_paper, "ts_literal",
           rep);
  check_total(root.fork(7), fixtures_per_loss, losses::LambdaMode::fixed, "total_fixed",
              rep);
  check_total(root.fork(8), fixtures_per_loss, losses::LambdaMode::trainable,
              "total_trainable", rep);
  return rep;
}

void print_report(const GradCheckReport& report, std::ostream& out) {
  char buf[128];
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%-16s checked=%-5zu skipped=%-5zu max_rel_err=%.3e %s\n",
                  e.name.c_str(), e.checked, e.skipped, e.max_rel_err,
                  e.max_rel_err < report.tolerance ? "ok" : "FAIL");
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "worst=%.3e tolerance=%.0e => %s\n", report.worst(),
                report.tolerance, report.all_ok() ? "PASS" : "FAIL");
  out << buf;
}

}  // namespace fairrank::trainer
