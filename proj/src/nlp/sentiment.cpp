#include "emorette/nlp/sentiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace emorette {

namespace {

double parse_number(const std::string& s, size_t line) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw LexiconError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

void SentimentLexicon::set_valence(const std::string& token, double valence) {
  if (!(valence >= -4.0 && valence <= 4.0)) {
    throw LexiconError("valence for '" + token + "' outside [-4, 4]");
  }
  valences_[token] = valence;
}

void SentimentLexicon::add_negator(const std::string& token) {
  if (boosters_.count(token)) throw LexiconError("'" + token + "' is already a booster");
  negators_.insert(token);
}

void SentimentLexicon::add_booster(const std::string& token, double increment) {
  if (negators_.count(token)) throw LexiconError("'" + token + "' is already a negator");
  boosters_[token] = increment;
}

SentimentLexicon SentimentLexicon::parse(std::string_view text) {
  SentimentLexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      if (line[0] == '!') {
        std::istringstream f(line.substr(1));
        std::string directive, token, value;
        f >> directive >> token;
        token = normalize_phrase(token);
        if (token.empty()) throw LexiconError("missing token");
        if (directive == "negator") {
          lex.add_negator(token);
        } else if (directive == "booster") {
          double inc = (f >> value) ? parse_number(value, line_no) : kDefaultBooster;
          lex.add_booster(token, inc);
        } else {
          throw LexiconError("unknown directive '!" + directive + "'");
        }
        continue;
      }
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw LexiconError("expected token<TAB>valence");
      std::string token = normalize_phrase(line.substr(0, tab));
      if (token.empty()) throw LexiconError("empty token");
      lex.set_valence(token, parse_number(line.substr(tab + 1), line_no));
    } catch (const LexiconError& e) {
      std::string msg = e.what();
      if (msg.rfind("line ", 0) != 0) msg = "line " + std::to_string(line_no) + ": " + msg;
      throw LexiconError(msg);
    }
  }
  return lex;
}

SentimentLexicon SentimentLexicon::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LexiconError("cannot open lexicon '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const LexiconError& e) {
    throw LexiconError(path + ": " + e.what());
  }
}

double score_sentiment(const SentimentLexicon& lex, const TokenizedUtterance& u) {
  const auto& toks = u.tokens;
  double sum = 0.0;
  for (size_t i = 0; i < toks.size(); ++i) {
    auto it = lex.valences().find(toks[i]);
    if (it == lex.valences().end() || it->second == 0.0) continue;
    double v = it->second;
    if (i > 0) {
      if (auto b = lex.boosters().find(toks[i - 1]); b != lex.boosters().end()) {
        v += v > 0 ? b->second : -b->second;
      }
    }
    const size_t from = i >= SentimentLexicon::kNegationWindow ? i - SentimentLexicon::kNegationWindow : 0;
    for (size_t j = from; j < i; ++j) {
      if (lex.negators().count(toks[j])) {
        v *= SentimentLexicon::kNegationFactor;
        break;
      }
    }
    sum += v;
  }
  if (sum == 0.0) return 0.0;
  const double compound = sum / std::sqrt(sum * sum + SentimentLexicon::kAlpha);
  return std::clamp(compound, -1.0, 1.0);
}

}  // namespace emorette
