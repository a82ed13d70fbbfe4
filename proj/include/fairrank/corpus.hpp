#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fairrank/lexicon.hpp"

namespace fairrank::corpus {

/// Lowercase, replace punctuation and other non-alphanumeric bytes with
/// spaces, split on whitespace. Only ASCII letters are case-folded so the
/// result does not depend on locale.
std::vector<std::string> tokenize(std::string_view text);

struct Passage {
  std::string id;
  std::string text;  // raw, as loaded; writers emit it verbatim
  std::vector<std::string> tokens;
};

struct Query {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
};

/// Ordered passage store with id lookup. Order is the file/generation order
/// and is what all deterministic iteration relies on.
struct Collection {
  std::vector<Passage> items;
  std::unordered_map<std::string, std::size_t> by_id;

  std::size_t size() const { return items.size(); }
  bool contains(const std::string& id) const { return by_id.count(id) != 0; }
  const Passage& at(const std::string& id) const;
  /// Throws FormatError on duplicate id.
  void add(Passage p);
};

struct QuerySet {
  std::vector<Query> items;
  std::unordered_map<std::string, std::size_t> by_id;

  std::size_t size() const { return items.size(); }
  bool contains(const std::string& id) const { return by_id.count(id) != 0; }
  const Query& at(const std::string& id) const;
  void add(Query q);
};

/// One query with its candidate passages and the single clicked slot.
struct DataPair {
  std::string query_id;
  std::vector<std::string> candidates;  // passage ids, no duplicates, size >= 2
  std::size_t clicked_index = 0;
};

// ---------------------------------------------------------------------------
// File formats.  All files are UTF-8 with LF line endings.
//   collection / queries:  id<TAB>text
//   run:                   qid Q0 pid rank score tag   (rank ascending from 1)
//   qrels:                 qid 0 pid grade
// ---------------------------------------------------------------------------

Collection load_collection(const std::string& path);
void write_collection(const Collection& coll, const std::string& path);

QuerySet load_queries(const std::string& path);
void write_queries(const QuerySet& qs, const std::string& path);

struct RunEntry {
  std::string qid;
  std::string pid;
  int rank = 0;
  double score = 0.0;
  std::string tag;
};

std::vector<RunEntry> load_run(const std::string& path);
void write_run(const std::vector<RunEntry>& entries, const std::string& path);

/// qid -> relevant pid. Grades >= 1 count as relevant; a query with more
/// than one relevant passage is a format error.
std::unordered_map<std::string, std::string> load_qrels(const std::string& path);
void write_qrels(const std::vector<std::pair<std::string, std::string>>& rels,
                 const std::string& path);

struct LoadStats {
  std::size_t loaded = 0;
  std::size_t skipped_no_relevant = 0;   // query absent from qrels
  std::size_t skipped_no_candidates = 0; // query absent from run
  std::size_t skipped_short = 0;         // fewer than 2 candidates
};

/// Builds DataPairs from the run's top-k entries per query. If the relevant
/// passage is not among them it replaces the last slot. k caps the candidate
/// count; shorter runs are kept as-is, never padded.
std::vector<DataPair> load_pairs(const std::string& queries_path,
                                 const std::string& run_path,
                                 const std::string& qrels_path,
                                 std::size_t k,
                                 LoadStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Synthetic corpora.
// ---------------------------------------------------------------------------

/// Knobs for the generator. bias_strength in [0,1] controls how strongly
/// gendered terms correlate with candidate hardness; group_imbalance in
/// (0,1) is the exact fraction of male-clicked queries.
struct SynthSpec {
  std::size_t num_queries = 100;
  std::size_t k = 8;
  std::size_t vocab_size = 500;
  double bias_strength = 0.5;
  double group_imbalance = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthCorpus {
  Collection passages;
  QuerySet queries;
  std::vector<DataPair> pairs;
  bias::Lexicon lexicon;
};

/// Pure function of the spec: same spec, same corpus, byte for byte.
SynthCorpus generate_synthetic(const SynthSpec& spec);

/// Writes one run file (each pair's candidates at ranks 1..K, descending
/// placeholder scores) and one qrels file for a pair list, so load_pairs
/// round-trips it.
void write_pairs(const std::vector<DataPair>& pairs, const std::string& run_path,
                 const std::string& qrels_path, const std::string& tag = "synth");

/// Writes collection.tsv, queries.tsv, run.tsv, qrels.tsv and lexicon.json
/// under dir.
void write_synth_corpus(const SynthCorpus& corpus, const std::string& dir);

// ---------------------------------------------------------------------------
// Bound pairs: id-resolved view used by scoring, training and evaluation.
// ---------------------------------------------------------------------------

struct BoundPair {
  std::size_t query = 0;                // index into QuerySet::items
  std::vector<std::size_t> candidates;  // indices into Collection::items
  std::size_t clicked = 0;
};

/// Resolves ids to indices, validating that every id exists, candidates are
/// unique and each pair has >= 2 candidates with a valid clicked slot.
std::vector<BoundPair> bind_pairs(const Collection& coll, const QuerySet& qs,
                                  const std::vector<DataPair>& pairs);

}  // namespace fairrank::corpus
