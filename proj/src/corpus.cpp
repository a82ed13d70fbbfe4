#include "fairrank/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "fairrank/errors.hpp"
#include "fairrank/rng.hpp"

namespace fairrank::corpus {

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  return out;
}

[[noreturn]] void bad_line(const std::string& path, std::size_t lineno, const std::string& what) {
  throw FormatError(path + ":" + std::to_string(lineno) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& s, const std::string& path, std::size_t lineno) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    bad_line(path, lineno, "bad number '" + s + "'");
  return v;
}

long parse_int(const std::string& s, const std::string& path, std::size_t lineno) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    bad_line(path, lineno, "bad integer '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (keep) {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const Passage& Collection::at(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw FormatError("unknown passage id '" + id + "'");
  return items[it->second];
}

void Collection::add(Passage p) {
  if (p.id.empty()) throw FormatError("empty passage id");
  if (!by_id.emplace(p.id, items.size()).second)
    throw FormatError("duplicate passage id '" + p.id + "'");
  items.push_back(std::move(p));
}

const Query& QuerySet::at(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw FormatError("unknown query id '" + id + "'");
  return items[it->second];
}

void QuerySet::add(Query q) {
  if (q.id.empty()) throw FormatError("empty query id");
  if (!by_id.emplace(q.id, items.size()).second)
    throw FormatError("duplicate query id '" + q.id + "'");
  items.push_back(std::move(q));
}

namespace {

// Shared reader for the two id<TAB>text formats.
template <class Add>
void read_tsv(const std::string& path, Add&& add) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) bad_line(path, lineno, "expected id<TAB>text");
    std::string id = line.substr(0, tab);
    std::string text = line.substr(tab + 1);
    if (id.empty()) bad_line(path, lineno, "empty id");
    add(std::move(id), std::move(text), lineno);
  }
}

}  // namespace

Collection load_collection(const std::string& path) {
  Collection coll;
  read_tsv(path, [&](std::string id, std::string text, std::size_t lineno) {
    if (coll.contains(id)) bad_line(path, lineno, "duplicate passage id '" + id + "'");
    Passage p;
    p.id = std::move(id);
    p.tokens = tokenize(text);
    p.text = std::move(text);
    coll.add(std::move(p));
  });
  return coll;
}

void write_collection(const Collection& coll, const std::string& path) {
  auto out = open_out(path);
  for (const auto& p : coll.items) out << p.id << '\t' << p.text << '\n';
}

QuerySet load_queries(const std::string& path) {
  QuerySet qs;
  read_tsv(path, [&](std::string id, std::string text, std::size_t lineno) {
    if (qs.contains(id)) bad_line(path, lineno, "duplicate query id '" + id + "'");
    Query q;
    q.id = std::move(id);
    q.tokens = tokenize(text);
    q.text = std::move(text);
    qs.add(std::move(q));
  });
  return qs;
}

void write_queries(const QuerySet& qs, const std::string& path) {
  auto out = open_out(path);
  for (const auto& q : qs.items) out << q.id << '\t' << q.text << '\n';
}

std::vector<RunEntry> load_run(const std::string& path) {
  auto in = open_in(path);
  std::vector<RunEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_ws(line);
    if (cols.size() != 6) bad_line(path, lineno, "expected 6 columns, got " + std::to_string(cols.size()));
    RunEntry e;
    e.qid = cols[0];
    e.pid = cols[2];
    e.rank = static_cast<int>(parse_int(cols[3], path, lineno));
    if (e.rank < 1) bad_line(path, lineno, "rank must be >= 1");
    e.score = parse_double(cols[4], path, lineno);
    e.tag = cols[5];
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_run(const std::vector<RunEntry>& entries, const std::string& path) {
  auto out = open_out(path);
  for (const auto& e : entries)
    out << e.qid << " Q0 " << e.pid << ' ' << e.rank << ' ' << fmt_double(e.score)
        << ' ' << e.tag << '\n';
}

std::unordered_map<std::string, std::string> load_qrels(const std::string& path) {
  auto in = open_in(path);
  std::unordered_map<std::string, std::string> rel;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_ws(line);
    if (cols.size() != 4) bad_line(path, lineno, "expected 4 columns, got " + std::to_string(cols.size()));
    long grade = parse_int(cols[3], path, lineno);
    if (grade < 1) continue;
    auto [it, fresh] = rel.emplace(cols[0], cols[2]);
    if (!fresh && it->second != cols[2])
      bad_line(path, lineno, "query '" + cols[0] + "' has more than one relevant passage");
  }
  return rel;
}

void write_qrels(const std::vector<std::pair<std::string, std::string>>& rels,
                 const std::string& path) {
  auto out = open_out(path);
  for (const auto& [qid, pid] : rels) out << qid << " 0 " << pid << " 1\n";
}

std::vector<DataPair> load_pairs(const std::string& queries_path,
                                 const std::string& run_path,
                                 const std::string& qrels_path, std::size_t k,
                                 LoadStats* stats) {
  if (k < 2) throw FormatError("K must be >= 2");
  auto qs = load_queries(queries_path);
  auto run = load_run(run_path);
  auto rel = load_qrels(qrels_path);

  std::unordered_map<std::string, std::vector<const RunEntry*>> by_query;
  for (const auto& e : run) by_query[e.qid].push_back(&e);

  LoadStats local;
  std::vector<DataPair> pairs;
  for (const auto& q : qs.items) {
    auto rit = rel.find(q.id);
    if (rit == rel.end()) {
      ++local.skipped_no_relevant;
      continue;
    }
    auto eit = by_query.find(q.id);
    if (eit == by_query.end() || eit->second.empty()) {
      ++local.skipped_no_candidates;
      continue;
    }
    auto entries = eit->second;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const RunEntry* a, const RunEntry* b) { return a->rank < b->rank; });
    if (entries.size() > k) entries.resize(k);

    DataPair dp;
    dp.query_id = q.id;
    std::unordered_set<std::string> seen;
    for (const auto* e : entries) {
      if (!seen.insert(e->pid).second)
        throw FormatError(run_path + ": duplicate candidate '" + e->pid +
                          "' for query '" + q.id + "'");
      dp.candidates.push_back(e->pid);
    }
    auto pos = std::find(dp.candidates.begin(), dp.candidates.end(), rit->second);
    if (pos == dp.candidates.end()) {
      dp.candidates.back() = rit->second;  // evict rank K
      dp.clicked_index = dp.candidates.size() - 1;
    } else {
      dp.clicked_index = static_cast<std::size_t>(pos - dp.candidates.begin());
    }
    if (dp.candidates.size() < 2) {
      ++local.skipped_short;
      continue;
    }
    ++local.loaded;
    pairs.push_back(std::move(dp));
  }
  if (stats) *stats = local;
  return pairs;
}

void SynthSpec::validate() const {
  if (num_queries == 0) throw FormatError("num_queries must be positive");
  if (k < 2) throw FormatError("K must be >= 2");
  if (vocab_size < 8) throw FormatError("vocab_size must be >= 8");
  if (!(bias_strength >= 0.0 && bias_strength <= 1.0))
    throw FormatError("bias_strength must be in [0,1]");
  if (!(group_imbalance > 0.0 && group_imbalance < 1.0))
    throw FormatError("group_imbalance must be in (0,1)");
}

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthSpec& spec) {
  spec.validate();

  // Queries share two function words so that trained gendered-token weights
  // transfer to held-out queries; four topic words carry the relevance
  // signal. The clicked passage repeats all four topics plus two tokens of
  // the query's group; hard distractors share three topics and carry
  // opposite-group tokens with probability bias_strength.
  static const std::vector<std::string> kMale = {"he",   "him",  "his",  "man",
                                                 "men",  "male", "boy",  "father"};
  static const std::vector<std::string> kFemale = {"she",   "her",    "hers", "woman",
                                                   "women", "female", "girl", "mother"};
  static const char* kFunction[3] = {"find", "info", "about"};

  Rng root(spec.seed);
  Rng group_rng = root.fork(0);
  Rng topic_rng = root.fork(1);
  Rng passage_rng = root.fork(2);
  Rng order_rng = root.fork(3);

  const std::size_t n = spec.num_queries;
  const std::size_t v = spec.vocab_size;
  std::vector<std::string> vocab(v);
  for (std::size_t i = 0; i < v; ++i) vocab[i] = padded("t", i, 4);

  std::vector<int> male_clicked(n, 0);
  auto n_male = static_cast<std::size_t>(std::llround(spec.group_imbalance * static_cast<double>(n)));
  for (std::size_t i = 0; i < n_male && i < n; ++i) male_clicked[i] = 1;
  group_rng.shuffle(male_clicked);

  auto draw_topics = [&](std::size_t count) {
    std::vector<std::size_t> out;
    while (out.size() < count) {
      std::size_t t = topic_rng.below(v);
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
  };
  auto gender_tokens = [&](bool male) {
    const auto& side = male ? kMale : kFemale;
    std::size_t a = passage_rng.below(side.size());
    std::size_t b = (a + 1 + passage_rng.below(side.size() - 1)) % side.size();
    return std::vector<std::string>{side[a], side[b]};
  };

  SynthCorpus out;
  out.lexicon.male = kMale;
  out.lexicon.female = kFemale;

  const std::size_t hard = std::min<std::size_t>(8, spec.k - 1);
  const std::size_t easy = spec.k - 1 - hard;

  for (std::size_t qi = 0; qi < n; ++qi) {
    const bool male = male_clicked[qi] == 1;
    const auto topics = draw_topics(3);

    Query q;
    q.id = padded("q", qi, 5);
    q.tokens = {kFunction[0], kFunction[1], kFunction[2],
                vocab[topics[0]], vocab[topics[1]], vocab[topics[2]]};
    q.text = join(q.tokens);

    std::vector<std::string> pids;
    std::size_t serial = 0;
    auto add_passage = [&](std::vector<std::string> tokens) {
      Passage p;
      p.id = q.id + "_p" + std::to_string(serial++);
      p.text = join(tokens);
      p.tokens = std::move(tokens);
      pids.push_back(p.id);
      out.passages.add(std::move(p));
    };

    {  // clicked: all topics, one repeated (a real relevance edge over the
       // hard distractors), plus own-group tokens and a filler
      std::vector<std::string> tokens;
      for (auto t : topics) tokens.push_back(vocab[t]);
      tokens.push_back(vocab[topics[0]]);
      for (auto& g : gender_tokens(male)) tokens.push_back(g);
      tokens.push_back(vocab[passage_rng.below(v)]);
      add_passage(std::move(tokens));
    }
    for (std::size_t h = 0; h < hard; ++h) {
      // hard distractor: same topics and same length, so the gendered tokens
      // carry most of the clicked-vs-distractor signal the ranker can use
      std::vector<std::string> tokens;
      for (auto t : topics) tokens.push_back(vocab[t]);
      if (passage_rng.bernoulli(spec.bias_strength))
        for (auto& g : gender_tokens(!male)) tokens.push_back(g);
      else
        for (int f = 0; f < 2; ++f) tokens.push_back(vocab[passage_rng.below(v)]);
      for (int f = 0; f < 2; ++f) tokens.push_back(vocab[passage_rng.below(v)]);
      add_passage(std::move(tokens));
    }
    for (std::size_t e = 0; e < easy; ++e) {
      std::vector<std::string> tokens;
      for (int f = 0; f < 7; ++f) tokens.push_back(vocab[passage_rng.below(v)]);
      add_passage(std::move(tokens));
    }

    std::vector<std::size_t> order(pids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);

    DataPair dp;
    dp.query_id = q.id;
    for (std::size_t i = 0; i < order.size(); ++i) {
      dp.candidates.push_back(pids[order[i]]);
      if (order[i] == 0) dp.clicked_index = i;
    }
    out.queries.add(std::move(q));
    out.pairs.push_back(std::move(dp));
  }
  return out;
}

void write_pairs(const std::vector<DataPair>& pairs, const std::string& run_path,
                 const std::string& qrels_path, const std::string& tag) {
  std::vector<RunEntry> run;
  std::vector<std::pair<std::string, std::string>> rels;
  for (const auto& dp : pairs) {
    for (std::size_t i = 0; i < dp.candidates.size(); ++i) {
      RunEntry e;
      e.qid = dp.query_id;
      e.pid = dp.candidates[i];
      e.rank = static_cast<int>(i) + 1;
      e.score = static_cast<double>(dp.candidates.size() - i);
      e.tag = tag;
      run.push_back(std::move(e));
    }
    rels.emplace_back(dp.query_id, dp.candidates[dp.clicked_index]);
  }
  write_run(run, run_path);
  write_qrels(rels, qrels_path);
}

void write_synth_corpus(const SynthCorpus& corpus, const std::string& dir) {
  write_collection(corpus.passages, dir + "/collection.tsv");
  write_queries(corpus.queries, dir + "/queries.tsv");
  write_pairs(corpus.pairs, dir + "/run.tsv", dir + "/qrels.tsv");
  bias::write_lexicon(corpus.lexicon, dir + "/lexicon.json");
}

std::vector<BoundPair> bind_pairs(const Collection& coll, const QuerySet& qs,
                                  const std::vector<DataPair>& pairs) {
  std::vector<BoundPair> bound;
  bound.reserve(pairs.size());
  for (const auto& dp : pairs) {
    if (dp.candidates.size() < 2)
      throw FormatError("pair for query '" + dp.query_id + "' has fewer than 2 candidates");
    if (dp.clicked_index >= dp.candidates.size())
      throw FormatError("pair for query '" + dp.query_id + "' has clicked_index out of range");
    BoundPair bp;
    auto qit = qs.by_id.find(dp.query_id);
    if (qit == qs.by_id.end()) throw FormatError("unknown query id '" + dp.query_id + "'");
    bp.query = qit->second;
    std::unordered_set<std::string> seen;
    for (const auto& pid : dp.candidates) {
      if (!seen.insert(pid).second)
        throw FormatError("duplicate candidate '" + pid + "' for query '" + dp.query_id + "'");
      auto pit = coll.by_id.find(pid);
      if (pit == coll.by_id.end()) throw FormatError("unknown passage id '" + pid + "'");
      bp.candidates.push_back(pit->second);
    }
    bp.clicked = dp.clicked_index;
    bound.push_back(std::move(bp));
  }
  return bound;
}

}  // namespace fairrank::corpus
