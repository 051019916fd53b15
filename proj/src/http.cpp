#include "emorette/http.hpp"

#include <atomic>
#include <cstdio>
#include <iostream>

#include <httplib.h>

#include "json_util.hpp"

namespace emorette {

using namespace detail;

namespace {

std::string error_body(const std::string& message) { return dump(json{{"error", message}}); }

std::string incident_id() {
  static std::atomic<uint64_t> counter{0};
  const auto now = std::chrono::system_clock::now().time_since_epoch().count();
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(splitmix64(static_cast<uint64_t>(now) ^ ++counter)));
  return buf;
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const BadRequest& e) {
    res.status = 400;
    res.set_content(error_body(e.what()), "application/json");
  } catch (const UnknownSession& e) {
    res.status = 404;
    res.set_content(error_body(e.what()), "application/json");
  } catch (const std::exception& e) {
    const std::string id = incident_id();
    std::cerr << "incident " << id << ": " << e.what() << "\n";
    res.status = 500;
    res.set_content(dump(json{{"error", "internal error"}, {"incident_id", id}}), "application/json");
  }
}

}  // namespace

struct HttpServer::Impl {
  ChatService& service;
  httplib::Server server;
  explicit Impl(ChatService& s) : service(s) {}
};

HttpServer::HttpServer(ChatService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  ChatService& svc = impl_->service;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  srv.Post("/v1/chat", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const bool debug = req.has_param("debug") && req.get_param_value("debug") != "0";
      const ChatRequest cr = parse_chat_request(req.body);
      res.set_content(chat_response_to_json(svc.chat(cr, debug)), "application/json");
    });
  });
  srv.Post("/v1/rate", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const ConversationRecord rec = svc.rate(parse_rate_request(req.body));
      res.set_content(record_to_json(rec), "application/json");
    });
  });
  srv.Get("/v1/health", [&svc](const httplib::Request&, httplib::Response& res) {
    const DialogueGraph& g = svc.engine().graph();
    res.set_content(dump(json{{"status", "ok"}, {"graph_name", g.name}, {"state_count", g.states.size()}}),
                    "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}
bool HttpServer::running() const { return impl_->server.is_running(); }

struct HttpDriver::Impl {
  httplib::Client client;
  Impl(const std::string& host, int port) : client(host, port) {}
};

HttpDriver::HttpDriver(std::string host, int port, std::string session_id, std::string greeting)
    : impl_(std::make_unique<Impl>(host, port)),
      session_id_(std::move(session_id)),
      greeting_(std::move(greeting)) {
  impl_->client.set_read_timeout(30, 0);
}

HttpDriver::~HttpDriver() = default;

ChatResponse HttpDriver::last_response() const { return chat_response_from_json(last_body_); }

TurnObservation HttpDriver::send(const std::string& utterance) {
  const std::string body = dump(json{{"session_id", session_id_}, {"utterance", utterance}});
  auto res = impl_->client.Post("/v1/chat?debug=1", body, "application/json");
  if (!res) throw HttpError(0, "request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw HttpError(res->status, res->body);
  last_body_ = res->body;
  ChatResponse r = chat_response_from_json(last_body_);
  return {r.response, r.debug ? std::move(r.debug->steps) : std::vector<Step>{}};
}

TurnObservation HttpDriver::open() { return send(greeting_); }

}  // namespace emorette
