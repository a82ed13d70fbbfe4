#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairrank/corpus.hpp"
#include "fairrank/lexicon.hpp"
#include "fairrank/parallel.hpp"

namespace fairrank::bias {

enum class Group : int { female = 0, male = 1, neutral = 2 };

const char* group_name(Group g);

struct SideMagnitudes {
  double male = 0.0;
  double female = 0.0;
};

/// Number of token occurrences in `tokens` matching any lexicon entry of the
/// given side. Multi-occurrences count multiply.
std::size_t word_count(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& side);

/// Per side, sum over that side's lexicon words of log(1 + count(word)).
SideMagnitudes side_magnitudes(const std::vector<std::string>& tokens,
                               const Lexicon& lex);

/// magnitude = male_side - female_side; label = sign(magnitude).
double magnitude(const std::vector<std::string>& tokens, const Lexicon& lex);
Group label_of(double magnitude);

struct PassageLabel {
  std::string pid;
  double magnitude = 0.0;
  Group group = Group::neutral;
};

/// Labels every passage, in collection order. Parallel over passages; the
/// output slot per passage makes serial and parallel runs bitwise equal.
std::vector<PassageLabel> label_collection(const corpus::Collection& coll,
                                           const Lexicon& lex,
                                           Exec exec = Exec::parallel);

// labels file: pid<TAB>magnitude<TAB>label, magnitude via %.17g.
void write_labels(const std::vector<PassageLabel>& labels, const std::string& path);
std::vector<PassageLabel> load_labels(const std::string& path);

}  // namespace fairrank::bias
