#include "emorette/nlp/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

namespace emorette {

CannedQaClient CannedQaClient::parse(std::string_view text) {
  CannedQaClient qa;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    qa.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return qa;
}

CannedQaClient CannedQaClient::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open QA table '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void CannedQaClient::add(std::string_view question, std::string answer) {
  answers_[normalize_phrase(question)] = std::move(answer);
}

std::optional<std::string> CannedQaClient::answer(const TokenizedUtterance& u) const {
  auto it = answers_.find(u.span_text(0, u.size()));
  if (it == answers_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

namespace {

void merge_into(FeatureBundle& dst, FeatureBundle&& src) {
  if (src.sentiment) dst.sentiment = src.sentiment;
  if (src.entities) dst.entities = std::move(src.entities);
  if (src.topic_dist) dst.topic_dist = std::move(src.topic_dist);
  if (src.intent_dist) dst.intent_dist = std::move(src.intent_dist);
  if (src.qa_answer) dst.qa_answer = std::move(src.qa_answer);
  for (auto& d : src.diagnostics) dst.diagnostics.push_back(std::move(d));
}

FeatureBundle guarded_call(const std::string& name, const Extractor& fn, const PipelineInput& in,
                           const FeatureBundle& prior) {
  try {
    return fn(in, prior);
  } catch (const std::exception& e) {
    FeatureBundle failed;
    failed.diagnostics.push_back("extractor '" + name + "' failed: " + e.what());
    return failed;
  } catch (...) {
    FeatureBundle failed;
    failed.diagnostics.push_back("extractor '" + name + "' failed");
    return failed;
  }
}

}  // namespace

void Pipeline::add(int round, std::string name, Extractor fn) {
  if (round != 1 && round != 2) throw std::invalid_argument("pipeline round must be 1 or 2");
  auto& list = round == 1 ? round1_ : round2_;
  list.push_back({std::move(name), std::move(fn)});
  std::stable_sort(list.begin(), list.end(),
                   [](const Entry& a, const Entry& b) { return a.name < b.name; });
}

std::vector<std::string> Pipeline::extractor_names(int round) const {
  std::vector<std::string> out;
  for (const auto& e : round == 1 ? round1_ : round2_) out.push_back(e.name);
  return out;
}

FeatureBundle Pipeline::run_round(const std::vector<Entry>& entries, const PipelineInput& in,
                                  const FeatureBundle& prior) const {
  std::vector<FeatureBundle> parts(entries.size());
  if (parallel_ && entries.size() > 1) {
    std::vector<std::future<FeatureBundle>> futures;
    futures.reserve(entries.size());
    for (const auto& e : entries) {
      futures.push_back(std::async(std::launch::async, [&e, &in, &prior] {
        return guarded_call(e.name, e.fn, in, prior);
      }));
    }
    for (size_t i = 0; i < futures.size(); ++i) parts[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < entries.size(); ++i) {
      parts[i] = guarded_call(entries[i].name, entries[i].fn, in, prior);
    }
  }
  FeatureBundle merged = prior;
  for (auto& p : parts) merge_into(merged, std::move(p));
  return merged;
}

FeatureBundle Pipeline::run(const PipelineInput& in) const {
  FeatureBundle round1 = run_round(round1_, in, FeatureBundle{});
  return run_round(round2_, in, round1);
}

// ---------------------------------------------------------------------------

NlpResources with_defaults(NlpResources r) {
  if (!r.lexicon) r.lexicon = std::make_shared<SentimentLexicon>();
  if (!r.entities) r.entities = std::make_shared<EntityIndex>();
  if (!r.qa) r.qa = std::make_shared<CannedQaClient>();
  if (!r.topic_base) r.topic_base = make_default_topic_classifier();
  if (!r.intent_base) r.intent_base = make_default_intent_classifier();
  if (r.experts.empty()) r.experts = make_default_experts();
  return r;
}

namespace {

LabelDistribution classify_head(const NlpResources& r, LabelHead head, const PipelineInput& in,
                                const FeatureBundle& round1) {
  ClassifierContext ctx{in.utterance, round1, in.last_system_utterance, in.previous_intent,
                        in.previous_topic};
  const auto& base = head == LabelHead::kTopic ? r.topic_base : r.intent_base;
  LabelDistribution base_dist = base ? base->classify(ctx) : LabelDistribution{};
  std::vector<ExpertOutput> outputs;
  for (const auto& ex : r.experts) {
    if (ex->head() != head) continue;
    if (auto out = ex->classify(ctx)) outputs.push_back(std::move(*out));
  }
  return moe_combine(base_dist, outputs, r.mix);
}

}  // namespace

Pipeline make_default_pipeline(const NlpResources& resources) {
  auto r = std::make_shared<const NlpResources>(with_defaults(resources));
  Pipeline p;
  p.add(1, "entities", [r](const PipelineInput& in, const FeatureBundle&) {
    FeatureBundle out;
    out.entities = link_entities(*r->entities, in.utterance);
    return out;
  });
  p.add(1, "qa", [r](const PipelineInput& in, const FeatureBundle&) {
    FeatureBundle out;
    out.qa_answer = r->qa->answer(in.utterance);
    return out;
  });
  p.add(1, "sentiment", [r](const PipelineInput& in, const FeatureBundle&) {
    FeatureBundle out;
    out.sentiment = score_sentiment(*r->lexicon, in.utterance);
    return out;
  });
  p.add(2, "intent", [r](const PipelineInput& in, const FeatureBundle& round1) {
    FeatureBundle out;
    out.intent_dist = classify_head(*r, LabelHead::kIntent, in, round1);
    return out;
  });
  p.add(2, "topic", [r](const PipelineInput& in, const FeatureBundle& round1) {
    FeatureBundle out;
    out.topic_dist = classify_head(*r, LabelHead::kTopic, in, round1);
    return out;
  });
  return p;
}

}  // namespace emorette
