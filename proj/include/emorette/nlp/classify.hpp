#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emorette/core.hpp"

namespace emorette {

struct ExpertOutput {
  std::string expert_id;
  LabelDistribution labels;
  double confidence = 1.0;  // in [0, 1]
};

inline constexpr double kDefaultMix = 0.5;

// final(l) = normalize((1 - mix) * base(l) + mix * mean_k(conf_k * expert_k(l)))
// over the union of labels. With no experts the base is returned unchanged.
LabelDistribution moe_combine(const LabelDistribution& base,
                              const std::vector<ExpertOutput>& experts,
                              double mix = kDefaultMix);

enum class LabelHead { kTopic, kIntent };

// Everything a classifier may look at: the utterance, round-one features,
// and the previous turn.
struct ClassifierContext {
  const TokenizedUtterance& utterance;
  const FeatureBundle& round1;
  const std::string& last_system_utterance;
  const LabelDistribution& previous_intent;
  const LabelDistribution& previous_topic;
};

class BaseClassifier {
 public:
  virtual ~BaseClassifier() = default;
  virtual LabelDistribution classify(const ClassifierContext& ctx) const = 0;
};

class Expert {
 public:
  virtual ~Expert() = default;
  virtual std::string id() const = 0;
  virtual LabelHead head() const = 0;
  // nullopt when the expert has nothing to say about this utterance.
  virtual std::optional<ExpertOutput> classify(const ClassifierContext& ctx) const = 0;
};

using KeywordTable = std::map<std::string, std::vector<std::string>>;

// True when some phrase (normalized, space separated) occurs as a
// contiguous token run of u.
bool contains_phrase(const TokenizedUtterance& u, const std::string& phrase);

// Label distribution proportional to keyword hits; empty when nothing hits.
// A nonzero background weight reserves mass for an "Other" label whenever
// something did hit, so a single keyword never yields certainty.
class KeywordClassifier : public BaseClassifier {
 public:
  explicit KeywordClassifier(KeywordTable table, double background = 0.0);
  LabelDistribution classify(const ClassifierContext& ctx) const override;

 private:
  KeywordTable table_;
  double background_;
};

class KeywordExpert : public Expert {
 public:
  KeywordExpert(std::string id, LabelHead head, KeywordTable table, double confidence);
  std::string id() const override { return id_; }
  LabelHead head() const override { return head_; }
  std::optional<ExpertOutput> classify(const ClassifierContext& ctx) const override;

 private:
  std::string id_;
  LabelHead head_;
  KeywordClassifier inner_;
  double confidence_;
};

// Maps linked entity types to topics ("movie" -> Movies).
class EntityTopicExpert : public Expert {
 public:
  EntityTopicExpert(std::map<std::string, std::string> type_to_topic, double confidence);
  std::string id() const override { return "entity-topic"; }
  LabelHead head() const override { return LabelHead::kTopic; }
  std::optional<ExpertOutput> classify(const ClassifierContext& ctx) const override;

 private:
  std::map<std::string, std::string> type_to_topic_;
  double confidence_;
};

// Reads short answers in the light of the previous system turn. After a
// yes/no question a negative answer is a Reject (disagreement that keeps
// the topic) and an affirmative one is a Yes-Answers. Negation wins when
// both appear ("i do not"). Outside that context
// it abstains, leaving the base classifier's reading in place.
class ContextualAnswerExpert : public Expert {
 public:
  explicit ContextualAnswerExpert(double confidence = 0.9);
  std::string id() const override { return "contextual-answer"; }
  LabelHead head() const override { return LabelHead::kIntent; }
  std::optional<ExpertOutput> classify(const ClassifierContext& ctx) const override;

 private:
  double confidence_;
};

// Heuristic: the last sentence ends in '?' and opens with an auxiliary verb.
bool is_yes_no_question(const std::string& system_text);

std::unique_ptr<BaseClassifier> make_default_topic_classifier();
std::unique_ptr<BaseClassifier> make_default_intent_classifier();
std::vector<std::shared_ptr<const Expert>> make_default_experts();

}  // namespace emorette
