#pragma once

#include <string>
#include <unordered_set>
#include <vector>

namespace fairrank::bias {

/// Gender-definitional word lists. The two sides must be disjoint and
/// non-empty. Word order is preserved from the source file so that
/// magnitude sums are accumulated in a reproducible order.
struct Lexicon {
  std::vector<std::string> male;
  std::vector<std::string> female;

  /// Throws FormatError if a side is empty or the sides intersect.
  void validate() const;
};

/// JSON file with keys "male" and "female", each a list of tokens.
Lexicon load_lexicon(const std::string& path);
void write_lexicon(const Lexicon& lex, const std::string& path);

/// The word lists shipped with the library (~30 words per side).
Lexicon default_lexicon();

/// Same lexicon with the two sides exchanged.
Lexicon swapped(const Lexicon& lex);

}  // namespace fairrank::bias
