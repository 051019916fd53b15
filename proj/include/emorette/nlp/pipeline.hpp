#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emorette/core.hpp"
#include "emorette/nlp/classify.hpp"
#include "emorette/nlp/entity_index.hpp"
#include "emorette/nlp/sentiment.hpp"

namespace emorette {

// Question answering is an external service; the shipped client answers
// from a fixed table.
class QaClient {
 public:
  virtual ~QaClient() = default;
  virtual std::optional<std::string> answer(const TokenizedUtterance& u) const = 0;
};

// question<TAB>answer lines; questions are matched after normalization.
class CannedQaClient : public QaClient {
 public:
  CannedQaClient() = default;
  static CannedQaClient parse(std::string_view text);
  static CannedQaClient load_file(const std::string& path);

  void add(std::string_view question, std::string answer);
  std::optional<std::string> answer(const TokenizedUtterance& u) const override;

 private:
  std::map<std::string, std::string> answers_;
};

struct PipelineInput {
  TokenizedUtterance utterance;
  std::string last_system_utterance;
  LabelDistribution previous_intent;
  LabelDistribution previous_topic;
};

// An extractor returns a bundle with only the fields it owns filled in.
// Round-two extractors see the merged round-one bundle; round-one
// extractors see an empty one.
using Extractor = std::function<FeatureBundle(const PipelineInput&, const FeatureBundle&)>;

class Pipeline {
 public:
  void add(int round, std::string name, Extractor fn);

  // Runs round one, merges, then round two. A throwing extractor leaves its
  // fields absent and records a diagnostic. Merging happens in extractor
  // name order, so registration order and scheduling never change the
  // result.
  FeatureBundle run(const PipelineInput& in) const;

  // Runs the extractors of one round on std::async workers.
  void set_parallel(bool on) { parallel_ = on; }

  std::vector<std::string> extractor_names(int round) const;

 private:
  struct Entry {
    std::string name;
    Extractor fn;
  };
  FeatureBundle run_round(const std::vector<Entry>& entries, const PipelineInput& in,
                          const FeatureBundle& prior) const;

  std::vector<Entry> round1_;
  std::vector<Entry> round2_;
  bool parallel_ = false;
};

// Shared, immutable NLP resources.
struct NlpResources {
  std::shared_ptr<const SentimentLexicon> lexicon;
  std::shared_ptr<const EntityIndex> entities;
  std::shared_ptr<const QaClient> qa;
  std::shared_ptr<const BaseClassifier> topic_base;
  std::shared_ptr<const BaseClassifier> intent_base;
  std::vector<std::shared_ptr<const Expert>> experts;
  double mix = kDefaultMix;
};

// Fills any missing classifier/expert slots with the shipped rule set and
// empty lexicon/index/QA tables.
NlpResources with_defaults(NlpResources r);

// Round one: sentiment, entities, qa. Round two: topic, intent.
Pipeline make_default_pipeline(const NlpResources& r);

}  // namespace emorette
