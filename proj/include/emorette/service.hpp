#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "emorette/engine.hpp"
#include "emorette/script.hpp"
#include "emorette/store.hpp"

namespace emorette {

// Maps to 400.
class BadRequest : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Maps to 404.
class UnknownSession : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChatRequest {
  std::string session_id;
  std::optional<std::string> user_id;
  std::string utterance;
  std::optional<std::vector<std::string>> asr_hypotheses;  // carried, not matched
  std::optional<std::string> variant;                      // A/B arm tag
};

// Throws BadRequest on malformed JSON, missing fields or an empty utterance.
ChatRequest parse_chat_request(const std::string& body);

struct DebugInfo {
  std::string state;
  VariableTable variables;
  std::vector<StackEntry> stack;
  FeatureBundle features;
  std::vector<std::string> chosen_transitions;
  std::vector<Step> steps;
};

struct ChatResponse {
  std::string response;
  std::string session_id;
  int turn_index = 0;
  std::optional<DebugInfo> debug;
};

std::string chat_response_to_json(const ChatResponse& r);
ChatResponse chat_response_from_json(const std::string& body);

struct RateRequest {
  std::string session_id;
  int rating = 0;
};

// Throws BadRequest unless rating is an integer in 1..5.
RateRequest parse_rate_request(const std::string& body);

struct ServiceConfig {
  uint64_t seed = 0;
  std::chrono::minutes idle_timeout{30};
  std::function<std::chrono::system_clock::time_point()> clock = [] {
    return std::chrono::system_clock::now();
  };
  // Runs right after a turn is durable and before the reply is built.
  std::function<void(const SessionState&)> after_save;
};

// The request/response loop. Every turn loads the session from the store
// and saves it before replying, so a restarted service continues from the
// last durable turn. Turns of one session never interleave.
class ChatService {
 public:
  ChatService(DialogueEngine engine, std::shared_ptr<Store> store, ServiceConfig config = {});

  // A new session id runs the opening and returns it as turn 0; the
  // utterance of that first request is not interpreted.
  ChatResponse chat(const ChatRequest& req, bool debug = false);

  // Upserts the session's ConversationRecord with this rating.
  ConversationRecord rate(const RateRequest& req);

  // Closes sessions idle for longer than the timeout: each gets an unrated
  // ConversationRecord unless it already has one. Returns how many closed.
  size_t sweep_idle();

  const DialogueEngine& engine() const { return engine_; }
  Store& store() { return *store_; }

 private:
  std::shared_ptr<std::mutex> lock_for(const std::string& session_id);
  ConversationRecord record_for(const SessionState& s, std::optional<double> rating) const;

  DialogueEngine engine_;
  std::shared_ptr<Store> store_;
  ServiceConfig config_;

  std::mutex table_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> session_locks_;
  std::map<std::string, std::chrono::system_clock::time_point> last_seen_;
  std::set<std::string> closed_;
};

// Drives one session through the service in-process.
class ServiceDriver : public ScriptDriver {
 public:
  ServiceDriver(ChatService& service, std::string session_id, std::string greeting = "hello")
      : service_(service), session_id_(std::move(session_id)), greeting_(std::move(greeting)) {}
  TurnObservation open() override;
  TurnObservation send(const std::string& utterance) override;

 private:
  ChatService& service_;
  std::string session_id_;
  std::string greeting_;
};

}  // namespace emorette
