#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairrank/bias.hpp"
#include "fairrank/losses.hpp"
#include "fairrank/parallel.hpp"

namespace fairrank::metrics {

/// Fraction of non-clicked candidates k with R+ >= R_k. Throws FormatError
/// for a neutral-clicked pair (callers filter) or K < 2.
double prf(const losses::ScoredPair& sp);

/// 1-based rank of the clicked candidate when scores are sorted descending,
/// ties broken by candidate input order.
std::size_t rank_of_clicked(const std::vector<double>& scores, std::size_t clicked);

/// A scored pair extended with what evaluation needs beyond the losses:
/// per-candidate side magnitudes for RaB (empty when unavailable).
struct EvalPair {
  losses::ScoredPair sp;
  std::vector<bias::SideMagnitudes> sides;
};

/// |mean PRF over male-clicked - mean PRF over female-clicked|; nullopt when
/// either group is empty (undefined, distinct from 0).
std::optional<double> delta_a_prf(const std::vector<EvalPair>& pairs);

/// Mean over pairs of (mean top-t male side magnitude - mean top-t female
/// side magnitude); pairs with fewer than t candidates average over what
/// exists. Requires sides on every pair.
double rab(const std::vector<EvalPair>& pairs, std::size_t t);

double recall_at_k(const std::vector<EvalPair>& pairs, std::size_t k);
double mrr(const std::vector<EvalPair>& pairs);
double ndcg_at_k(const std::vector<EvalPair>& pairs, std::size_t k);

/// Two-sided paired bootstrap p-value for the mean of a-b, with the
/// resampled means centered at the observed mean:
///   p = (1 + #{ |mean_b - mean| >= |mean| }) / (resamples + 1).
/// Throws FormatError on length mismatch or empty input.
double bootstrap_significance(const std::vector<double>& a, const std::vector<double>& b,
                              std::size_t resamples, std::uint64_t seed);

struct EvalOptions {
  std::size_t k_recall = 10;
  std::size_t k_ndcg = 10;
  std::vector<std::size_t> rab_t = {5, 10};
  bool with_rab = true;  // false when side magnitudes are unavailable
};

struct EvalReport {
  std::size_t n_queries = 0;
  std::size_t n_male = 0;    // male-clicked pairs
  std::size_t n_female = 0;
  std::size_t k_recall = 10;
  std::size_t k_ndcg = 10;
  double recall = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  std::optional<double> mean_prf_male;
  std::optional<double> mean_prf_female;
  std::optional<double> delta_a_prf;
  std::optional<std::map<std::size_t, double>> rab;  // nullopt without sides
  /// qid -> PRF for every non-neutral-clicked pair, in input order. Feeds
  /// bootstrap_significance across two models evaluated on the same pairs.
  std::vector<std::pair<std::string, double>> per_query_prf;
};

/// Runs the whole suite. Per-pair statistics are computed in parallel into
/// per-pair slots; means reduce serially in input order.
EvalReport evaluate(const std::vector<EvalPair>& pairs, const EvalOptions& opt,
                    Exec exec = Exec::parallel);

/// JSON report; nulls for undefined metrics. Layout:
///   {counts:{queries,male,female}, recall:{k,value}, mrr, ndcg:{k,value},
///    prf:{male,female}, delta_a_prf, rab:{"5":..,"10":..}}
std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

/// Optional per-query table: qid<TAB>metric<TAB>value.
void write_per_query(const EvalReport& report, const std::string& path);

}  // namespace fairrank::metrics
