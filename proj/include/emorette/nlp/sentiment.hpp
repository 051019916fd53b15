#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "emorette/core.hpp"

namespace emorette {

class LexiconError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rule-lexicon sentiment in the VADER family. Only the core rules are
// implemented: lexicon sum, a negation window, single-token boosters and
// the alpha=15 normalization. Emoji, punctuation emphasis and ALL-CAPS
// rules are not.
//
// File format:
//   token<TAB>valence          valence in [-4, +4]
//   !negator token
//   !booster token value       value added toward the valence's sign
class SentimentLexicon {
 public:
  static constexpr double kNegationFactor = -0.74;
  static constexpr size_t kNegationWindow = 3;
  static constexpr double kDefaultBooster = 0.293;
  static constexpr double kAlpha = 15.0;

  static SentimentLexicon parse(std::string_view text);
  static SentimentLexicon load_file(const std::string& path);

  void set_valence(const std::string& token, double valence);
  void add_negator(const std::string& token);
  void add_booster(const std::string& token, double increment = kDefaultBooster);

  const std::map<std::string, double>& valences() const { return valences_; }
  const std::set<std::string>& negators() const { return negators_; }
  const std::map<std::string, double>& boosters() const { return boosters_; }

 private:
  std::map<std::string, double> valences_;
  std::set<std::string> negators_;
  std::map<std::string, double> boosters_;
};

// Compound score in [-1, +1]; 0 for an empty utterance.
double score_sentiment(const SentimentLexicon& lex, const TokenizedUtterance& u);

}  // namespace emorette
