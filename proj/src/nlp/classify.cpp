#include "emorette/nlp/classify.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace emorette {

LabelDistribution moe_combine(const LabelDistribution& base,
                              const std::vector<ExpertOutput>& experts, double mix) {
  if (experts.empty()) return base;
  mix = std::clamp(mix, 0.0, 1.0);
  std::map<std::string, double> weights;
  for (const auto& [label, p] : base.probs()) weights[label] += (1.0 - mix) * p;
  const double per_expert = mix / static_cast<double>(experts.size());
  for (const auto& ex : experts) {
    const double conf = std::clamp(ex.confidence, 0.0, 1.0);
    for (const auto& [label, p] : ex.labels.probs()) weights[label] += per_expert * conf * p;
  }
  return LabelDistribution::normalized(std::move(weights));
}

bool contains_phrase(const TokenizedUtterance& u, const std::string& phrase) {
  std::vector<std::string> want;
  std::istringstream in(phrase);
  for (std::string t; in >> t;) want.push_back(t);
  if (want.empty() || want.size() > u.size()) return false;
  return std::search(u.tokens.begin(), u.tokens.end(), want.begin(), want.end()) !=
         u.tokens.end();
}

// ---------------------------------------------------------------------------

KeywordClassifier::KeywordClassifier(KeywordTable table, double background)
    : table_(std::move(table)), background_(background) {
  for (auto& [label, phrases] : table_) {
    for (auto& p : phrases) p = normalize_phrase(p);
  }
}

LabelDistribution KeywordClassifier::classify(const ClassifierContext& ctx) const {
  std::map<std::string, double> hits;
  for (const auto& [label, phrases] : table_) {
    for (const auto& p : phrases) {
      if (contains_phrase(ctx.utterance, p)) hits[label] += 1.0;
    }
  }
  if (!hits.empty() && background_ > 0.0) hits["Other"] += background_;
  return LabelDistribution::normalized(std::move(hits));
}

KeywordExpert::KeywordExpert(std::string id, LabelHead head, KeywordTable table,
                             double confidence)
    : id_(std::move(id)), head_(head), inner_(std::move(table)), confidence_(confidence) {}

std::optional<ExpertOutput> KeywordExpert::classify(const ClassifierContext& ctx) const {
  auto dist = inner_.classify(ctx);
  if (dist.empty()) return std::nullopt;
  return ExpertOutput{id_, std::move(dist), confidence_};
}

EntityTopicExpert::EntityTopicExpert(std::map<std::string, std::string> type_to_topic,
                                     double confidence)
    : type_to_topic_(std::move(type_to_topic)), confidence_(confidence) {}

std::optional<ExpertOutput> EntityTopicExpert::classify(const ClassifierContext& ctx) const {
  if (!ctx.round1.entities) return std::nullopt;
  std::map<std::string, double> votes;
  for (const auto& m : *ctx.round1.entities) {
    if (auto it = type_to_topic_.find(m.entity_type); it != type_to_topic_.end()) {
      votes[it->second] += 1.0;
    }
  }
  auto dist = LabelDistribution::normalized(std::move(votes));
  if (dist.empty()) return std::nullopt;
  return ExpertOutput{id(), std::move(dist), confidence_};
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kNegativeAnswers = {
    "no", "nope", "nah", "not really", "not at all", "not much", "i don't", "i do not",
    "not", "never", "i haven't", "i have not", "no way"};
const std::vector<std::string> kAffirmativeAnswers = {
    "yes", "yeah", "yep", "yup", "sure", "of course", "i do", "definitely", "absolutely",
    "oh yeah", "i have", "totally"};
const std::set<std::string> kAuxiliaries = {
    "are", "is", "am", "was", "were", "do", "does", "did", "have", "has", "had",
    "can", "could", "will", "would", "should", "shall", "may", "might", "aren't",
    "isn't", "don't", "doesn't", "didn't", "haven't", "hasn't", "won't", "wouldn't"};

bool any_phrase(const TokenizedUtterance& u, const std::vector<std::string>& phrases) {
  return std::any_of(phrases.begin(), phrases.end(),
                     [&](const std::string& p) { return contains_phrase(u, p); });
}

}  // namespace

bool is_yes_no_question(const std::string& system_text) {
  const auto end = system_text.find_last_not_of(" \t\r\n");
  if (end == std::string::npos || system_text[end] != '?') return false;
  // Start of the final sentence.
  size_t start = system_text.find_last_of(".!?", end == 0 ? 0 : end - 1);
  start = start == std::string::npos ? 0 : start + 1;
  auto toks = normalize_utterance(system_text.substr(start, end - start)).tokens;
  // Skip a leading discourse marker such as "Oh," or "So,".
  static const std::set<std::string> kMarkers = {"oh", "so", "and", "well", "but", "okay", "ok"};
  size_t i = 0;
  while (i < toks.size() && kMarkers.count(toks[i])) ++i;
  return i < toks.size() && kAuxiliaries.count(toks[i]) > 0;
}

ContextualAnswerExpert::ContextualAnswerExpert(double confidence) : confidence_(confidence) {}

std::optional<ExpertOutput> ContextualAnswerExpert::classify(const ClassifierContext& ctx) const {
  if (!is_yes_no_question(ctx.last_system_utterance)) return std::nullopt;
  const bool negative = any_phrase(ctx.utterance, kNegativeAnswers);
  const bool affirmative = any_phrase(ctx.utterance, kAffirmativeAnswers);
  if (!negative && !affirmative) return std::nullopt;
  return ExpertOutput{id(), LabelDistribution{{negative ? "Reject" : "Yes-Answers", 1.0}},
                      confidence_};
}

// ---------------------------------------------------------------------------
// Shipped rule tables. Labels follow the public topic/intent inventory
// (Movies, Music, Food-Drinks, Travel-Geo, Yes-Answers, Reject,
// Topic-Switching, ...); they are not exhaustive.
// ---------------------------------------------------------------------------

std::unique_ptr<BaseClassifier> make_default_topic_classifier() {
  return std::make_unique<KeywordClassifier>(KeywordTable{
      {"Movies", {"movie", "movies", "film", "films", "cinema", "actor", "actress"}},
      {"Music", {"music", "song", "songs", "band", "album", "singer", "concert"}},
      {"Sports", {"sports", "basketball", "football", "soccer", "baseball", "game"}},
      {"Pets", {"pet", "pets", "dog", "dogs", "cat", "cats", "puppy", "kitten"}},
      {"News", {"news", "politics", "election"}},
      {"Life", {"school", "class", "classes", "work", "job", "family", "mom", "dad"}},
  });
}

std::unique_ptr<BaseClassifier> make_default_intent_classifier() {
  // Like the platform classifier it stands in for, this one reads plain
  // disagreement as a request to switch topics.
  return std::make_unique<KeywordClassifier>(KeywordTable{
      {"Topic-Switching",
       {"let's talk about", "talk about", "something else", "change the subject",
        "not really", "no", "nah", "nope"}},
      {"Accept-Agree", {"yes", "yeah", "sure", "okay", "ok", "right"}},
      {"Information-Request", {"what is", "who is", "tell me about", "how do", "why"}},
      {"Opinion", {"i think", "i feel", "i believe", "in my opinion"}},
      {"Closing", {"goodbye", "bye", "stop", "i have to go"}},
  }, 0.4);
}

std::vector<std::shared_ptr<const Expert>> make_default_experts() {
  std::vector<std::shared_ptr<const Expert>> out;
  out.push_back(std::make_shared<KeywordExpert>(
      "topic-keywords", LabelHead::kTopic,
      KeywordTable{
          {"Food-Drinks", {"food", "eat", "eating", "dinner", "lunch", "cook", "cooking",
                           "restaurant", "groceries", "grocery", "coffee", "drink"}},
          {"Travel-Geo", {"travel", "traveling", "trip", "vacation", "city", "country",
                          "flight", "visit"}},
      },
      0.9));
  out.push_back(std::make_shared<EntityTopicExpert>(
      std::map<std::string, std::string>{{"movie", "Movies"},
                                         {"musician", "Music"},
                                         {"album", "Music"},
                                         {"sports_team", "Sports"},
                                         {"athlete", "Sports"},
                                         {"city", "Travel-Geo"},
                                         {"country", "Travel-Geo"},
                                         {"location", "Travel-Geo"},
                                         {"food", "Food-Drinks"}},
      0.9));
  out.push_back(std::make_shared<ContextualAnswerExpert>(0.9));
  return out;
}

}  // namespace emorette
