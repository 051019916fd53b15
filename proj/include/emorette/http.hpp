#pragma once

#include <memory>
#include <string>

#include "emorette/script.hpp"
#include "emorette/service.hpp"

namespace emorette {

// JSON over HTTP:
//   POST /v1/chat[?debug=1]   ChatRequest -> ChatResponse
//   POST /v1/rate             {session_id, rating} -> ConversationRecord
//   GET  /v1/health           {status, graph_name, state_count}
// Errors are {"error": message} with 400/404, or 500 plus an incident id.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Blocks until stop(). Returns false when the port cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it (or -1); then call listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Drives one session against a running server.
class HttpDriver : public ScriptDriver {
 public:
  HttpDriver(std::string host, int port, std::string session_id, std::string greeting = "hello");
  ~HttpDriver() override;
  TurnObservation open() override;
  TurnObservation send(const std::string& utterance) override;

  // The last response body, byte for byte.
  const std::string& last_body() const { return last_body_; }
  ChatResponse last_response() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string session_id_;
  std::string greeting_;
  std::string last_body_;
};

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& body)
      : std::runtime_error("HTTP " + std::to_string(status) + ": " + body), status(status) {}
  int status;
};

}  // namespace emorette
