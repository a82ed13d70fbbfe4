#include "fairrank/bias.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "fairrank/errors.hpp"

namespace fairrank::bias {

void Lexicon::validate() const {
  if (male.empty() || female.empty())
    throw FormatError("lexicon: both word lists must be non-empty");
  std::unordered_set<std::string> m(male.begin(), male.end());
  for (const auto& w : female)
    if (m.count(w)) throw FormatError("lexicon: word '" + w + "' appears on both sides");
}

namespace {

std::vector<std::string> read_side(const nlohmann::json& j, const char* key,
                                   const std::string& path) {
  if (!j.contains(key) || !j[key].is_array())
    throw FormatError(path + ": missing list '" + std::string(key) + "'");
  std::vector<std::string> out;
  for (const auto& w : j[key]) {
    if (!w.is_string()) throw FormatError(path + ": non-string entry in '" + key + "'");
    out.push_back(w.get<std::string>());
  }
  return out;
}

}  // namespace

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  Lexicon lex;
  lex.male = read_side(j, "male", path);
  lex.female = read_side(j, "female", path);
  lex.validate();
  return lex;
}

void write_lexicon(const Lexicon& lex, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  nlohmann::ordered_json j;
  j["male"] = lex.male;
  j["female"] = lex.female;
  out << j.dump(2) << '\n';
}

Lexicon default_lexicon() {
  Lexicon lex;
  lex.male = {"he",      "him",      "his",     "himself", "man",    "men",
              "male",    "males",    "boy",     "boys",    "father", "fathers",
              "son",     "sons",     "brother", "brothers", "uncle", "uncles",
              "husband", "husbands", "king",    "kings",   "prince", "princes",
              "sir",     "mr",       "gentleman", "gentlemen", "dad", "grandfather"};
  lex.female = {"she",   "her",   "hers",   "herself", "woman",  "women",
                "female", "females", "girl", "girls",  "mother", "mothers",
                "daughter", "daughters", "sister", "sisters", "aunt", "aunts",
                "wife",  "wives", "queen",  "queens",  "princess", "princesses",
                "madam", "mrs",   "lady",   "ladies",  "mom",    "grandmother"};
  return lex;
}

Lexicon swapped(const Lexicon& lex) {
  Lexicon out;
  out.male = lex.female;
  out.female = lex.male;
  return out;
}

const char* group_name(Group g) {
  switch (g) {
    case Group::female: return "female";
    case Group::male: return "male";
    default: return "neutral";
  }
}

std::size_t word_count(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& side) {
  std::unordered_set<std::string_view> words(side.begin(), side.end());
  std::size_t count = 0;
  for (const auto& t : tokens) count += words.count(t);
  return count;
}

SideMagnitudes side_magnitudes(const std::vector<std::string>& tokens, const Lexicon& lex) {
  // Per-word counts summed in lexicon order, so the magnitude of a fixed
  // passage/lexicon is reproducible to the bit.
  std::unordered_map<std::string_view, std::size_t> counts;
  counts.reserve(lex.male.size() + lex.female.size());
  for (const auto& w : lex.male) counts.emplace(w, 0);
  for (const auto& w : lex.female) counts.emplace(w, 0);
  for (const auto& t : tokens) {
    auto it = counts.find(t);
    if (it != counts.end()) ++it->second;
  }
  SideMagnitudes sm;
  for (const auto& w : lex.male) sm.male += std::log1p(static_cast<double>(counts[w]));
  for (const auto& w : lex.female) sm.female += std::log1p(static_cast<double>(counts[w]));
  return sm;
}

double magnitude(const std::vector<std::string>& tokens, const Lexicon& lex) {
  auto sm = side_magnitudes(tokens, lex);
  return sm.male - sm.female;
}

Group label_of(double magnitude) {
  if (magnitude > 0.0) return Group::male;
  if (magnitude < 0.0) return Group::female;
  return Group::neutral;
}

std::vector<PassageLabel> label_collection(const corpus::Collection& coll,
                                           const Lexicon& lex, Exec exec) {
  lex.validate();
  std::vector<PassageLabel> labels(coll.size());
  for_each_index(exec, coll.size(), [&](std::size_t i) {
    const auto& p = coll.items[i];
    PassageLabel pl;
    pl.pid = p.id;
    pl.magnitude = magnitude(p.tokens, lex);
    pl.group = label_of(pl.magnitude);
    labels[i] = std::move(pl);
  });
  return labels;
}

void write_labels(const std::vector<PassageLabel>& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  char buf[32];
  for (const auto& l : labels) {
    std::snprintf(buf, sizeof buf, "%.17g", l.magnitude);
    int lab = l.group == Group::male ? 1 : (l.group == Group::female ? -1 : 0);
    out << l.pid << '\t' << buf << '\t' << lab << '\n';
  }
}

std::vector<PassageLabel> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<PassageLabel> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected pid<TAB>magnitude<TAB>label");
    PassageLabel pl;
    pl.pid = line.substr(0, t1);
    try {
      pl.magnitude = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      int lab = std::stoi(line.substr(t2 + 1));
      if (lab < -1 || lab > 1) throw std::invalid_argument("label");
      pl.group = lab == 1 ? Group::male : (lab == -1 ? Group::female : Group::neutral);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad magnitude or label");
    }
    labels.push_back(std::move(pl));
  }
  return labels;
}

}  // namespace fairrank::bias
