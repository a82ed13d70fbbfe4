#include "fairrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fairrank/errors.hpp"
#include "fairrank/rng.hpp"

namespace fairrank::metrics {

double prf(const losses::ScoredPair& sp) {
  const std::size_t k = sp.k();
  if (k < 2) throw FormatError("prf needs K >= 2");
  if (sp.clicked_group() == bias::Group::neutral)
    throw FormatError("prf is undefined for a neutral-clicked pair");
  const double rj = sp.scores[sp.clicked];
  double fired = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (j == sp.clicked) continue;
    if (rj >= sp.scores[j]) fired += 1.0;
  }
  return fired / static_cast<double>(k - 1);
}

std::size_t rank_of_clicked(const std::vector<double>& scores, std::size_t clicked) {
  const double s = scores[clicked];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s) ++rank;
    else if (scores[j] == s && j < clicked) ++rank;
  }
  return rank;
}

std::optional<double> delta_a_prf(const std::vector<EvalPair>& pairs) {
  double sum_m = 0.0, sum_f = 0.0;
  std::size_t nm = 0, nf = 0;
  for (const auto& p : pairs) {
    const auto g = p.sp.clicked_group();
    if (g == bias::Group::male) {
      sum_m += prf(p.sp);
      ++nm;
    } else if (g == bias::Group::female) {
      sum_f += prf(p.sp);
      ++nf;
    }
  }
  if (nm == 0 || nf == 0) return std::nullopt;
  return std::abs(sum_m / static_cast<double>(nm) - sum_f / static_cast<double>(nf));
}

namespace {

// candidate indices sorted by score descending, stable in input order
std::vector<std::size_t> ranked_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double rab(const std::vector<EvalPair>& pairs, std::size_t t) {
  if (t < 1) throw FormatError("rab needs t >= 1");
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.sides.size() != p.sp.k())
      throw FormatError("rab needs side magnitudes for every candidate");
    auto order = ranked_order(p.sp.scores);
    const std::size_t top = std::min(t, order.size());
    double m = 0.0, f = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
      m += p.sides[order[r]].male;
      f += p.sides[order[r]].female;
    }
    total += m / static_cast<double>(top) - f / static_cast<double>(top);
  }
  return total / static_cast<double>(pairs.size());
}

double recall_at_k(const std::vector<EvalPair>& pairs, std::size_t k) {
  if (k < 1) throw FormatError("recall needs k >= 1");
  if (pairs.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& p : pairs)
    if (rank_of_clicked(p.sp.scores, p.sp.clicked) <= k) hits += 1.0;
  return hits / static_cast<double>(pairs.size());
}

double mrr(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs)
    total += 1.0 / static_cast<double>(rank_of_clicked(p.sp.scores, p.sp.clicked));
  return total / static_cast<double>(pairs.size());
}

double ndcg_at_k(const std::vector<EvalPair>& pairs, std::size_t k) {
  if (k < 1) throw FormatError("ndcg needs k >= 1");
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) {
    const std::size_t rank = rank_of_clicked(p.sp.scores, p.sp.clicked);
    if (rank <= k) total += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return total / static_cast<double>(pairs.size());
}

double bootstrap_significance(const std::vector<double>& a, const std::vector<double>& b,
                              std::size_t resamples, std::uint64_t seed) {
  if (a.size() != b.size()) throw FormatError("bootstrap: length mismatch");
  if (a.empty()) throw FormatError("bootstrap: empty input");
  if (resamples == 0) throw FormatError("bootstrap: resamples must be >= 1");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double observed = 0.0;
  for (double x : d) observed += x;
  observed /= static_cast<double>(n);

  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += d[rng.below(n)];
    const double centered = s / static_cast<double>(n) - observed;
    if (std::abs(centered) >= std::abs(observed)) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(resamples + 1);
}

EvalReport evaluate(const std::vector<EvalPair>& pairs, const EvalOptions& opt, Exec exec) {
  EvalReport rep;
  rep.k_recall = opt.k_recall;
  rep.k_ndcg = opt.k_ndcg;
  rep.n_queries = pairs.size();
  if (pairs.empty()) return rep;

  // Validate up front: the parallel loop below must not throw.
  for (const auto& p : pairs) {
    if (p.sp.k() < 2) throw FormatError("evaluate needs K >= 2 for every pair");
    if (p.sp.clicked >= p.sp.k() || p.sp.bias_labels.size() != p.sp.k())
      throw FormatError("malformed scored pair for query '" + p.sp.qid + "'");
    if (opt.with_rab && p.sides.size() != p.sp.k())
      throw FormatError("rab needs side magnitudes for every candidate");
  }

  struct Slot {
    std::size_t rank = 0;
    int group = 0;  // +1 male, -1 female, 0 neutral
    double prf = 0.0;
    std::vector<double> rab_diff;  // per opt.rab_t entry
  };
  std::vector<Slot> slots(pairs.size());

  for_each_index(exec, pairs.size(), [&](std::size_t i) {
    const auto& p = pairs[i];
    Slot s;
    s.rank = rank_of_clicked(p.sp.scores, p.sp.clicked);
    const auto g = p.sp.clicked_group();
    s.group = g == bias::Group::male ? 1 : (g == bias::Group::female ? -1 : 0);
    if (s.group != 0) s.prf = prf(p.sp);
    if (opt.with_rab) {
      auto order = ranked_order(p.sp.scores);
      for (std::size_t t : opt.rab_t) {
        const std::size_t top = std::min(t, order.size());
        double m = 0.0, f = 0.0;
        for (std::size_t r = 0; r < top; ++r) {
          m += p.sides[order[r]].male;
          f += p.sides[order[r]].female;
        }
        s.rab_diff.push_back(m / static_cast<double>(top) - f / static_cast<double>(top));
      }
    }
    slots[i] = std::move(s);
  });

  const double n = static_cast<double>(pairs.size());
  double hits = 0.0, rr = 0.0, dcg = 0.0, sum_m = 0.0, sum_f = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (s.rank <= opt.k_recall) hits += 1.0;
    rr += 1.0 / static_cast<double>(s.rank);
    if (s.rank <= opt.k_ndcg) dcg += 1.0 / std::log2(static_cast<double>(s.rank) + 1.0);
    if (s.group == 1) {
      sum_m += s.prf;
      ++rep.n_male;
      rep.per_query_prf.emplace_back(pairs[i].sp.qid, s.prf);
    } else if (s.group == -1) {
      sum_f += s.prf;
      ++rep.n_female;
      rep.per_query_prf.emplace_back(pairs[i].sp.qid, s.prf);
    }
  }
  rep.recall = hits / n;
  rep.mrr = rr / n;
  rep.ndcg = dcg / n;
  if (rep.n_male > 0) rep.mean_prf_male = sum_m / static_cast<double>(rep.n_male);
  if (rep.n_female > 0) rep.mean_prf_female = sum_f / static_cast<double>(rep.n_female);
  if (rep.mean_prf_male && rep.mean_prf_female)
    rep.delta_a_prf = std::abs(*rep.mean_prf_male - *rep.mean_prf_female);

  if (opt.with_rab) {
    std::map<std::size_t, double> rmap;
    for (std::size_t ti = 0; ti < opt.rab_t.size(); ++ti) {
      double total = 0.0;
      for (const auto& s : slots) total += s.rab_diff[ti];
      rmap[opt.rab_t[ti]] = total / n;
    }
    rep.rab = std::move(rmap);
  }
  return rep;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["counts"] = {{"queries", report.n_queries},
                 {"male", report.n_male},
                 {"female", report.n_female}};
  j["recall"] = {{"k", report.k_recall}, {"value", report.recall}};
  j["mrr"] = report.mrr;
  j["ndcg"] = {{"k", report.k_ndcg}, {"value", report.ndcg}};
  j["prf"]["male"] =
      report.mean_prf_male ? nlohmann::ordered_json(*report.mean_prf_male) : nullptr;
  j["prf"]["female"] =
      report.mean_prf_female ? nlohmann::ordered_json(*report.mean_prf_female) : nullptr;
  j["delta_a_prf"] =
      report.delta_a_prf ? nlohmann::ordered_json(*report.delta_a_prf) : nullptr;
  if (report.rab) {
    auto& r = j["rab"];
    for (const auto& [t, v] : *report.rab) r[std::to_string(t)] = v;
  } else {
    j["rab"] = nullptr;
  }
  return j.dump(2);
}

void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << report_to_json(report) << '\n';
}

void write_per_query(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  char buf[32];
  for (const auto& [qid, v] : report.per_query_prf) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << qid << "\tprf\t" << buf << '\n';
  }
}

}  // namespace fairrank::metrics
