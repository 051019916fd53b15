#include <gtest/gtest.h>

#include <fstream>
#include <httplib.h>
#include <json.hpp>

#include "harness.hpp"

using namespace emorette;
using harness::demo_bot;
using nlohmann::json;

namespace {

const std::vector<std::string> kLearned{"student", "remote", "need_grocery", "activity", "close_to_mom",
                                        "likes_school"};

std::string failures_text(const ScriptRun& run) {
  std::string out;
  for (const auto& f : run.failures) out += f.str() + "\n";
  return out;
}

httplib::Result post(httplib::Client& c, const std::string& path, const json& body) {
  return c.Post(path, body.dump(), "application/json");
}

}  // namespace

// --- in-process service ----------------------------------------------------

TEST(Service, TableReplay) {
  auto store = std::make_shared<MemoryStore>();
  ChatService svc(demo_bot().engine(), store, {});
  ServiceDriver driver(svc, "t1");
  const auto run = run_script(harness::covid_script(), driver);
  EXPECT_TRUE(run.ok()) << failures_text(run);
  const auto s = store->load_latest("t1");
  ASSERT_TRUE(s);
  for (const auto& k : kLearned) EXPECT_TRUE(s->variables.get(k)) << k;
  EXPECT_EQ(s->turn_index, static_cast<int>(harness::covid_script().user_count()));
}

TEST(Service, DebugCarriesState) {
  ChatService svc(demo_bot().engine(), std::make_shared<MemoryStore>(), {});
  svc.chat({"d", std::nullopt, "hi", std::nullopt, std::nullopt});
  const auto r = svc.chat({"d", std::nullopt, "yeah my school has online courses now", std::nullopt, std::nullopt}, true);
  ASSERT_TRUE(r.debug);
  EXPECT_EQ(*r.debug->variables.get("student"), Value(true));
  ASSERT_EQ(r.debug->stack.size(), 1u);
  EXPECT_EQ(r.debug->stack[0].state_id, "covid_sympathy");
  EXPECT_EQ(r.debug->chosen_transitions.front(), "u_remote_learning");
  EXPECT_EQ(r.turn_index, 1);
}

TEST(Service, PersistentAttributesFollowTheUser) {
  auto store = std::make_shared<MemoryStore>();
  ChatService svc(demo_bot().engine(), store, {});
  svc.chat({"s1", "alice", "hi", std::nullopt, std::nullopt});
  svc.chat({"s1", "alice", "yeah my school has online courses now", std::nullopt, std::nullopt});
  const auto user = store->load_user("alice");
  ASSERT_TRUE(user);
  EXPECT_EQ(*user->attributes.get("student"), Value(true));
  svc.chat({"s2", "alice", "hi", std::nullopt, std::nullopt});
  EXPECT_EQ(*store->load_latest("s2")->variables.get("student"), Value(true));
  svc.chat({"s3", "bob", "hi", std::nullopt, std::nullopt});
  EXPECT_FALSE(store->load_latest("s3")->variables.get("student"));
}

TEST(Service, RequestValidation) {
  EXPECT_THROW(parse_chat_request("{"), BadRequest);
  EXPECT_THROW(parse_chat_request(R"({"session_id": "a"})"), BadRequest);
  EXPECT_THROW(parse_chat_request(R"({"session_id": "a", "utterance": "  "})"), BadRequest);
  EXPECT_THROW(parse_chat_request(R"({"session_id": "", "utterance": "hi"})"), BadRequest);
  const auto ok = parse_chat_request(R"({"session_id": "a", "utterance": "hi", "asr_hypotheses": ["hi", "high"]})");
  EXPECT_EQ(ok.asr_hypotheses->size(), 2u);
  EXPECT_THROW(parse_rate_request(R"({"session_id": "a", "rating": 0})"), BadRequest);
  EXPECT_THROW(parse_rate_request(R"({"session_id": "a", "rating": 4.5})"), BadRequest);
  EXPECT_EQ(parse_rate_request(R"({"session_id": "a", "rating": 5})").rating, 5);
}

TEST(Service, ConcurrentTurnsOnOneSessionSerialize) {
  auto store = std::make_shared<MemoryStore>();
  ChatService svc(demo_bot().engine(), store, {});
  svc.chat({"c", std::nullopt, "hi", std::nullopt, std::nullopt});
  std::vector<std::thread> ts;
  std::mutex mu;
  std::set<int> seen;
  std::atomic<int> errors{0};
  for (int w = 0; w < 8; ++w) {
    ts.emplace_back([&] {
      for (int k = 0; k < 10; ++k) {
        try {
          const auto r = svc.chat({"c", std::nullopt, "not really", std::nullopt, std::nullopt});
          std::lock_guard<std::mutex> lk(mu);
          if (!seen.insert(r.turn_index).second) ++errors;
        } catch (...) {
          ++errors;
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(errors.load(), 0);
  EXPECT_EQ(seen.size(), 80u);
  EXPECT_EQ(*seen.begin(), 1);
  EXPECT_EQ(*seen.rbegin(), 80);
  EXPECT_EQ(store->load_latest("c")->turn_index, 80);
}

TEST(Service, IdleSweepClosesUnratedConversations) {
  auto store = std::make_shared<MemoryStore>();
  auto now = std::chrono::system_clock::time_point{} + std::chrono::hours(24 * 365 * 56);
  ServiceConfig cfg;
  cfg.clock = [&] { return now; };
  ChatService svc(demo_bot().engine(), store, cfg);
  svc.chat({"idle", std::nullopt, "hi", std::nullopt, "Fact"});
  svc.chat({"rated", std::nullopt, "hi", std::nullopt, std::nullopt});
  svc.rate({"rated", 4});
  now += std::chrono::minutes(10);
  EXPECT_EQ(svc.sweep_idle(), 0u);
  now += std::chrono::minutes(31);
  EXPECT_EQ(svc.sweep_idle(), 1u);
  EXPECT_EQ(svc.sweep_idle(), 0u);
  auto recs = store->conversations();
  std::sort(recs.begin(), recs.end(), [](auto& a, auto& b) { return a.conversation_id < b.conversation_id; });
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].conversation_id, "idle");
  EXPECT_FALSE(recs[0].rating);
  EXPECT_EQ(recs[0].variant, "Fact");
  EXPECT_EQ(recs[1].rating, 4.0);
  EXPECT_EQ(recs[0].date.size(), 10u);
}

// --- HTTP ------------------------------------------------------------------

TEST(Http, TableReplay) {
  harness::ThreadServer server(std::make_shared<MemoryStore>(), 0);
  HttpDriver driver("127.0.0.1", server.port(), "h1");
  const auto run = run_script(harness::covid_script(), driver);
  EXPECT_TRUE(run.ok()) << failures_text(run);
  const auto last = driver.last_response();
  ASSERT_TRUE(last.debug);
  for (const auto& k : kLearned) EXPECT_TRUE(last.debug->variables.get(k)) << k;
}

TEST(Http, Health) {
  harness::ThreadServer server(std::make_shared<MemoryStore>(), 0);
  httplib::Client c("127.0.0.1", server.port());
  const auto r = c.Get("/v1/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["state_count"].get<size_t>(), demo_bot().graph->states.size());
}

TEST(Http, ErrorsAndRatings) {
  auto store = std::make_shared<MemoryStore>();
  harness::ThreadServer server(store, 0);
  httplib::Client c("127.0.0.1", server.port());

  auto r = c.Post("/v1/chat", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_TRUE(json::parse(r->body).contains("error"));

  r = post(c, "/v1/chat", {{"session_id", "r1"}, {"utterance", ""}});
  EXPECT_EQ(r->status, 400);

  r = post(c, "/v1/rate", {{"session_id", "nobody"}, {"rating", 5}});
  EXPECT_EQ(r->status, 404);

  r = post(c, "/v1/chat", {{"session_id", "r1"}, {"utterance", "hi"}});
  EXPECT_EQ(r->status, 200);
  r = post(c, "/v1/chat", {{"session_id", "r1"}, {"utterance", "not really"}});
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["turn_index"], 1);
  EXPECT_FALSE(json::parse(r->body).contains("debug"));

  r = post(c, "/v1/rate", {{"session_id", "r1"}, {"rating", 5}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["rating"], 5.0);
  r = post(c, "/v1/rate", {{"session_id", "r1"}, {"rating", 6}});
  EXPECT_EQ(r->status, 400);
  post(c, "/v1/rate", {{"session_id", "r1"}, {"rating", 3}});
  post(c, "/v1/rate", {{"session_id", "r1"}, {"rating", 4}});
  const auto recs = store->conversations();
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].rating, 4.0);
  EXPECT_EQ(recs[0].turn_count, 1);
  EXPECT_TRUE(recs[0].components.count("covid"));

  r = c.Get("/v1/nothing");
  EXPECT_EQ(r->status, 404);
}

TEST(Http, CorsPreflight) {
  harness::ThreadServer server(std::make_shared<MemoryStore>(), 0);
  httplib::Client c("127.0.0.1", server.port());
  const auto r = c.Options("/v1/chat");
  ASSERT_TRUE(r);
  EXPECT_LT(r->status, 300);
  EXPECT_TRUE(r->has_header("Access-Control-Allow-Origin"));
}

TEST(Http, BodiesIdenticalAcrossFreshStores) {
  std::vector<std::string> bodies[2];
  for (auto& out : bodies) {
    harness::ThreadServer server(std::make_shared<MemoryStore>(), 1234);
    HttpDriver driver("127.0.0.1", server.port(), "same");
    driver.open();
    out.push_back(driver.last_body());
    for (const auto& u : harness::covid_script().utterances()) {
      driver.send(u);
      out.push_back(driver.last_body());
    }
  }
  EXPECT_EQ(bodies[0], bodies[1]);
}

// --- CLI -------------------------------------------------------------------

namespace {

std::string cli(const std::string& args) { return std::string(EMORETTE_CLI) + " " + args; }

std::string simulate_cmd(const std::string& script, uint64_t seed) {
  return cli("simulate --flows " + std::string(EMORETTE_DEMO_DIR) + " --script " + script + " --seed " +
             std::to_string(seed));
}

}  // namespace

TEST(Cli, SimulateTableOne) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = harness::run_command(simulate_cmd("table1.script", 0) + " 2>&1");
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("U: Yeah my school has online courses now"), std::string::npos) << r.out;
  EXPECT_LT(elapsed, std::chrono::seconds(1));
}

TEST(Cli, TranscriptsMatchAcrossRunsAndHttp) {
  for (uint64_t seed : {0ull, 7ull, 99ull}) {
    const auto a = harness::run_command(simulate_cmd("table1.script", seed));
    const auto b = harness::run_command(simulate_cmd("table1.script", seed));
    ASSERT_EQ(a.status, 0);
    EXPECT_EQ(a.out, b.out);
    harness::ThreadServer server(std::make_shared<MemoryStore>(), seed);
    HttpDriver driver("127.0.0.1", server.port(), "simulate");
    const auto run = run_script(harness::covid_script(), driver);
    EXPECT_EQ(harness::cli_transcript(a.out), run.transcript_text()) << "seed " << seed;
  }
}

TEST(Cli, WrongStackAssertionFails) {
  const auto dir = harness::fresh_dir("script");
  std::filesystem::create_directories(dir);
  std::ifstream in(std::string(EMORETTE_DEMO_DIR) + "/table1.script");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  const auto pos = text.find("stack [CoS]");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 11, "stack [CoE]");
  std::ofstream(dir / "bad.script") << text;
  const auto r = harness::run_command(simulate_cmd((dir / "bad.script").string(), 0) + " 2>&1");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("covid_end"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("covid_sympathy"), std::string::npos) << r.out;
  std::filesystem::remove_all(dir);
}

TEST(Cli, Lint) {
  auto r = harness::run_command(cli("lint --flows " + std::string(EMORETTE_DEMO_DIR)));
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("0 error(s), 0 warning(s)"), std::string::npos) << r.out;
  const auto dir = harness::fresh_dir("lint");
  std::filesystem::create_directories(dir);
  std::filesystem::copy_file(std::string(EMORETTE_FIXTURE_DIR) + "/lint/empty_stack_pop.flow", dir / "x.flow");
  r = harness::run_command(cli("lint --flows " + dir.string()));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("empty-stack-pop"), std::string::npos) << r.out;
  std::filesystem::remove_all(dir);
}

TEST(Cli, AnalyzeFromServedLog) {
  const auto dir = harness::fresh_dir("analyze");
  {
    auto store = std::make_shared<DiskStore>(dir);
    ChatService svc(demo_bot().engine(), store, {});
    ServiceDriver d(svc, "a1");
    run_script(harness::covid_script(), d);
    svc.rate({"a1", 5});
  }
  const auto r = harness::run_command(cli("analyze --logs " + (dir / "conversations.jsonl").string() +
                                          " --report components --format json"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = json::parse(r.out);
  ASSERT_FALSE(j["components"].empty());
  EXPECT_EQ(j["components"][0]["mean"], 5.0);
  std::filesystem::remove_all(dir);
}

// --- failures and remaining CLI surface -------------------------------------

namespace {

class FlakyStore : public MemoryStore {
 public:
  void save_turn(const SessionState& s) override {
    if (fail_next.exchange(false)) throw StoreError("disk full");
    MemoryStore::save_turn(s);
  }
  std::atomic<bool> fail_next{false};
};

}  // namespace

TEST(Http, InternalErrorKeepsLastDurableTurn) {
  auto store = std::make_shared<FlakyStore>();
  harness::ThreadServer server(store, 3);
  harness::ThreadServer reference(std::make_shared<MemoryStore>(), 3);
  httplib::Client c("127.0.0.1", server.port());
  httplib::Client ref("127.0.0.1", reference.port());
  const std::vector<std::string> utterances{"hi", "yeah my school has online courses now", "not really"};
  for (size_t i = 0; i < 2; ++i) {
    post(c, "/v1/chat", {{"session_id", "f"}, {"utterance", utterances[i]}});
    post(ref, "/v1/chat", {{"session_id", "f"}, {"utterance", utterances[i]}});
  }
  store->fail_next = true;
  auto r = post(c, "/v1/chat", {{"session_id", "f"}, {"utterance", utterances[2]}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 500);
  const auto err = json::parse(r->body);
  EXPECT_EQ(err["incident_id"].get<std::string>().size(), 16u);
  EXPECT_EQ(store->latest_turn("f"), 1);

  r = post(c, "/v1/chat", {{"session_id", "f"}, {"utterance", utterances[2]}});
  const auto want = post(ref, "/v1/chat", {{"session_id", "f"}, {"utterance", utterances[2]}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, want->body);
  EXPECT_EQ(json::parse(r->body)["turn_index"], 2);
}

TEST(Cli, SeedsDoNotChangeTieFreeTranscripts) {
  const auto a = harness::run_command(simulate_cmd("table1.script", 1));
  const auto b = harness::run_command(simulate_cmd("table1.script", 2));
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(harness::cli_transcript(a.out), harness::cli_transcript(b.out));
}

TEST(Cli, ChatRepl) {
  const auto r = harness::run_command("printf 'yeah my school has online courses now\\n/quit\\n' | EMORETTE_SEED=3 " +
                                      cli("chat --debug --flows " + std::string(EMORETTE_DEMO_DIR)));
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("E: Oh, are you liking your online classes?"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("remote=True student=True"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("covid_sympathy"), std::string::npos) << r.out;
}

TEST(Cli, BadFlowsExitTwo) {
  const auto r = harness::run_command(cli("simulate --flows /nonexistent --script x --seed 0") + " 2>&1");
  EXPECT_EQ(r.status, 2) << r.out;
}

TEST(Cli, AnalyzeCsv) {
  const auto dir = harness::fresh_dir("csv");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "log.jsonl")
      << R"({"conversation_id":"a","rating":4,"turn_count":5,"components":["covid"],"date":"2026-10-01"})" "\n"
      << R"({"conversation_id":"b","rating":2,"turn_count":5,"components":["covid"],"date":"2026-10-03"})" "\n"
      << R"({"conversation_id":"c","rating":1,"turn_count":3,"components":["covid"],"date":"2026-10-03"})" "\n";
  const auto r = harness::run_command(cli("analyze --logs " + (dir / "log.jsonl").string() +
                                          " --report rolling --format csv"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "date,daily_mean,rolling_mean\n2026-10-01,4.0000,4.0000\n2026-10-03,2.0000,3.0000\n");
  std::filesystem::remove_all(dir);
}
