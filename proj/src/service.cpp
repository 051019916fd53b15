#include "emorette/service.hpp"

#include <ctime>

#include "json_util.hpp"

namespace emorette {

using namespace detail;

namespace {

json features_json(const FeatureBundle& f) {
  json j = json::object();
  j["sentiment"] = f.sentiment ? json(*f.sentiment) : json(nullptr);
  if (f.entities) {
    json es = json::array();
    for (const auto& e : *f.entities) {
      es.push_back({{"surface", e.surface}, {"start", e.start}, {"end", e.end},
                    {"entity_id", e.entity_id}, {"entity_type", e.entity_type}});
    }
    j["entities"] = std::move(es);
  } else {
    j["entities"] = nullptr;
  }
  j["topic_dist"] = f.topic_dist ? dist_json(*f.topic_dist) : json(nullptr);
  j["intent_dist"] = f.intent_dist ? dist_json(*f.intent_dist) : json(nullptr);
  j["qa_answer"] = f.qa_answer ? json(*f.qa_answer) : json(nullptr);
  j["diagnostics"] = f.diagnostics;
  return j;
}

FeatureBundle features_from(const json& j) {
  FeatureBundle f;
  if (!j.at("sentiment").is_null()) f.sentiment = j["sentiment"].get<double>();
  if (!j.at("entities").is_null()) {
    f.entities.emplace();
    for (const auto& e : j["entities"]) {
      f.entities->push_back({e.at("surface").get<std::string>(), e.at("start").get<size_t>(),
                             e.at("end").get<size_t>(), e.at("entity_id").get<std::string>(),
                             e.at("entity_type").get<std::string>()});
    }
  }
  if (!j.at("topic_dist").is_null()) f.topic_dist = dist_from(j["topic_dist"]);
  if (!j.at("intent_dist").is_null()) f.intent_dist = dist_from(j["intent_dist"]);
  if (!j.at("qa_answer").is_null()) f.qa_answer = j["qa_answer"].get<std::string>();
  f.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  return f;
}

const char* kind_name(Step::Kind k) {
  switch (k) {
    case Step::Kind::kUser: return "user";
    case Step::Kind::kSystem: return "system";
    case Step::Kind::kFallback: return "fallback";
  }
  return "?";
}

json step_json(const Step& st) {
  json writes = json::array();
  for (const auto& w : st.writes) writes.push_back({{"var", w.var}, {"value", value_json(w.value)}});
  return {{"kind", kind_name(st.kind)},
          {"transition_id", st.transition_id},
          {"from", st.from},
          {"to", st.to},
          {"resumed", st.resumed ? json(*st.resumed) : json(nullptr)},
          {"text", st.text},
          {"writes", std::move(writes)},
          {"stack_before", stack_json(st.stack_before)},
          {"stack_after", stack_json(st.stack_after)},
          {"diagnostics", st.diagnostics}};
}

Step step_from(const json& j) {
  Step st;
  const auto kind = j.at("kind").get<std::string>();
  st.kind = kind == "user" ? Step::Kind::kUser : kind == "system" ? Step::Kind::kSystem : Step::Kind::kFallback;
  st.transition_id = j.at("transition_id").get<std::string>();
  st.from = j.at("from").get<std::string>();
  st.to = j.at("to").get<std::string>();
  if (!j.at("resumed").is_null()) st.resumed = j["resumed"].get<std::string>();
  st.text = j.at("text").get<std::string>();
  for (const auto& w : j.at("writes")) st.writes.push_back({w.at("var").get<std::string>(), value_from(w.at("value"))});
  st.stack_before = stack_from(j.at("stack_before"));
  st.stack_after = stack_from(j.at("stack_after"));
  st.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  return st;
}

json parse_body(const std::string& body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw BadRequest("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw BadRequest(std::string("malformed JSON: ") + e.what());
  }
}

std::string required_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw BadRequest(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw BadRequest(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string utc_date(std::chrono::system_clock::time_point tp) {
  return format_date(std::chrono::floor<std::chrono::days>(tp));
}

}  // namespace

ChatRequest parse_chat_request(const std::string& body) {
  const json j = parse_body(body);
  ChatRequest r;
  r.session_id = required_string(j, "session_id");
  if (blank(r.session_id)) throw BadRequest("'session_id' is empty");
  r.user_id = optional_string(j, "user_id");
  r.utterance = required_string(j, "utterance");
  if (blank(r.utterance)) throw BadRequest("'utterance' is empty");
  r.variant = optional_string(j, "variant");
  if (auto it = j.find("asr_hypotheses"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw BadRequest("'asr_hypotheses' must be a list of strings");
    std::vector<std::string> hyps;
    for (const auto& h : *it) {
      if (!h.is_string() || blank(h.get<std::string>())) {
        throw BadRequest("'asr_hypotheses' entries must be nonempty strings");
      }
      hyps.push_back(h.get<std::string>());
    }
    r.asr_hypotheses = std::move(hyps);
  }
  return r;
}

RateRequest parse_rate_request(const std::string& body) {
  const json j = parse_body(body);
  RateRequest r;
  r.session_id = required_string(j, "session_id");
  auto it = j.find("rating");
  if (it == j.end() || !it->is_number()) throw BadRequest("'rating' must be a number");
  const double v = it->get<double>();
  if (v != static_cast<int>(v) || v < 1 || v > 5) throw BadRequest("'rating' must be an integer from 1 to 5");
  r.rating = static_cast<int>(v);
  return r;
}

std::string chat_response_to_json(const ChatResponse& r) {
  json j = {{"response", r.response}, {"session_id", r.session_id}, {"turn_index", r.turn_index}};
  if (r.debug) {
    const DebugInfo& d = *r.debug;
    json steps = json::array();
    for (const auto& st : d.steps) steps.push_back(step_json(st));
    j["debug"] = {{"state", d.state},
                  {"variables", vars_json(d.variables)},
                  {"stack", stack_json(d.stack)},
                  {"features", features_json(d.features)},
                  {"chosen_transitions", d.chosen_transitions},
                  {"steps", std::move(steps)}};
  }
  return dump(j);
}

ChatResponse chat_response_from_json(const std::string& body) {
  const json j = json::parse(body);
  ChatResponse r;
  r.response = j.at("response").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.turn_index = j.at("turn_index").get<int>();
  if (auto it = j.find("debug"); it != j.end()) {
    DebugInfo d;
    d.state = it->at("state").get<std::string>();
    d.variables = vars_from(it->at("variables"));
    d.stack = stack_from(it->at("stack"));
    d.features = features_from(it->at("features"));
    d.chosen_transitions = it->at("chosen_transitions").get<std::vector<std::string>>();
    for (const auto& st : it->at("steps")) d.steps.push_back(step_from(st));
    r.debug = std::move(d);
  }
  return r;
}

// ---------------------------------------------------------------------------
// ChatService
// ---------------------------------------------------------------------------

ChatService::ChatService(DialogueEngine engine, std::shared_ptr<Store> store, ServiceConfig config)
    : engine_(std::move(engine)), store_(std::move(store)), config_(std::move(config)) {}

std::shared_ptr<std::mutex> ChatService::lock_for(const std::string& session_id) {
  std::lock_guard lock(table_mu_);
  auto& m = session_locks_[session_id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

ChatResponse ChatService::chat(const ChatRequest& req, bool debug) {
  if (blank(req.utterance)) throw BadRequest("'utterance' is empty");
  auto mu = lock_for(req.session_id);
  std::lock_guard session_lock(*mu);

  const DialogueGraph& g = engine_.graph();
  std::optional<SessionState> loaded = store_->load_latest(req.session_id);
  SessionState s;
  TurnResult r;
  if (!loaded) {
    s = engine_.new_session(req.session_id, derive_session_seed(config_.seed, req.session_id));
    s.user_id = req.user_id;
    s.variant = req.variant;
    if (s.user_id) {
      if (auto user = store_->load_user(*s.user_id)) {
        for (const auto& [k, v] : user->attributes.entries()) {
          if (g.persistent_vars.count(k)) s.variables.set(k, v);
        }
      }
    }
    r = engine_.open(s);
  } else {
    s = std::move(*loaded);
    if (!s.user_id && req.user_id) s.user_id = req.user_id;
    r = engine_.turn(s, req.utterance);
  }

  store_->save_turn(s);
  if (s.user_id && !g.persistent_vars.empty()) {
    VariableTable learned;
    for (const auto& [k, v] : s.variables.entries()) {
      if (g.persistent_vars.count(k)) learned.set(k, v);
    }
    if (!learned.empty()) store_->merge_user_attributes(*s.user_id, learned);
  }
  if (config_.after_save) config_.after_save(s);
  {
    std::lock_guard lock(table_mu_);
    last_seen_[s.session_id] = config_.clock();
  }

  ChatResponse out;
  out.response = r.response;
  out.session_id = s.session_id;
  out.turn_index = s.turn_index;
  if (debug) {
    DebugInfo d;
    d.state = s.current_state;
    d.variables = s.variables;
    d.stack = s.stack;
    d.features = r.features;
    d.chosen_transitions = r.transition_ids();
    d.steps = r.steps;
    out.debug = std::move(d);
  }
  return out;
}

ConversationRecord ChatService::record_for(const SessionState& s, std::optional<double> rating) const {
  ConversationRecord rec;
  rec.conversation_id = s.session_id;
  rec.user_id = s.user_id;
  rec.rating = rating;
  rec.turn_count = s.turn_index;
  rec.components = s.components;
  rec.variant = s.variant;
  rec.date = utc_date(config_.clock());
  return rec;
}

ConversationRecord ChatService::rate(const RateRequest& req) {
  if (req.rating < 1 || req.rating > 5) throw BadRequest("'rating' must be an integer from 1 to 5");
  auto mu = lock_for(req.session_id);
  std::lock_guard session_lock(*mu);
  auto s = store_->load_latest(req.session_id);
  if (!s) throw UnknownSession("unknown session '" + req.session_id + "'");
  ConversationRecord rec = record_for(*s, static_cast<double>(req.rating));
  store_->put_conversation(rec);
  std::lock_guard lock(table_mu_);
  closed_.insert(req.session_id);
  return rec;
}

size_t ChatService::sweep_idle() {
  const auto now = config_.clock();
  std::vector<std::string> idle;
  {
    std::lock_guard lock(table_mu_);
    for (const auto& [id, seen] : last_seen_) {
      if (!closed_.count(id) && now - seen > config_.idle_timeout) idle.push_back(id);
    }
  }
  size_t closed = 0;
  for (const auto& id : idle) {
    auto mu = lock_for(id);
    std::lock_guard session_lock(*mu);
    {
      std::lock_guard lock(table_mu_);
      if (closed_.count(id) || config_.clock() - last_seen_[id] <= config_.idle_timeout) continue;
    }
    auto s = store_->load_latest(id);
    if (!s) continue;
    store_->put_conversation(record_for(*s, std::nullopt));
    std::lock_guard lock(table_mu_);
    closed_.insert(id);
    ++closed;
  }
  return closed;
}

TurnObservation ServiceDriver::open() {
  ChatRequest req;
  req.session_id = session_id_;
  req.utterance = greeting_;
  ChatResponse r = service_.chat(req, true);
  return {r.response, std::move(r.debug->steps)};
}

TurnObservation ServiceDriver::send(const std::string& utterance) {
  ChatRequest req;
  req.session_id = session_id_;
  req.utterance = utterance;
  ChatResponse r = service_.chat(req, true);
  return {r.response, std::move(r.debug->steps)};
}

}  // namespace emorette
