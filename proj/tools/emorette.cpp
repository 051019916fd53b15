#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "emorette/bot.hpp"
#include "emorette/http.hpp"
#include "emorette/script.hpp"
#include "emorette/service.hpp"
#include "emorette/store.hpp"

using namespace emorette;
namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

uint64_t env_seed() { return std::stoull(env_or("EMORETTE_SEED", "0")); }

void print_diagnostics(const std::vector<Diagnostic>& diags, std::ostream& out) {
  for (const auto& d : diags) out << d.str() << "\n";
}

std::string stack_text(const std::vector<StackEntry>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    out += (i ? ", " : "") + s[i].state_id + "(" + std::to_string(s[i].life) + ")";
  }
  return out + "]";
}

std::string vars_text(const VariableTable& t) {
  std::string out;
  for (const auto& [k, v] : t.entries()) out += (out.empty() ? "" : " ") + k + "=" + value_to_string(v);
  return out.empty() ? "(none)" : out;
}

void print_debug(const SessionState& s, const TurnResult& r, std::ostream& out) {
  std::string ids;
  for (const auto& id : r.transition_ids()) ids += (ids.empty() ? "" : " ") + id;
  out << "  [state " << s.current_state << "] [transitions " << ids << "]\n"
      << "  [variables " << vars_text(s.variables) << "]\n"
      << "  [stack " << stack_text(s.stack) << "]\n";
  for (const auto& d : r.diagnostics) out << "  [diagnostic " << d << "]\n";
}

BotBundle load_or_report(const std::string& dir) {
  try {
    return load_bot(dir);
  } catch (const FlowError& e) {
    print_diagnostics(e.diagnostics(), std::cerr);
    throw;
  }
}

int cmd_chat(const std::string& flows, uint64_t seed, bool debug) {
  BotBundle bot = load_or_report(flows);
  DialogueEngine engine = bot.engine();
  SessionState s = engine.new_session("chat", derive_session_seed(seed, "chat"));
  TurnResult r = engine.open(s);
  std::cout << "E: " << r.response << "\n";
  if (debug) print_debug(s, r, std::cout);
  std::string line;
  while (std::cout << "U: " << std::flush, std::getline(std::cin, line)) {
    if (line == "/quit" || line == "/exit") break;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    r = engine.turn(s, line);
    std::cout << "E: " << r.response << "\n";
    if (debug) print_debug(s, r, std::cout);
  }
  return 0;
}

int cmd_lint(const std::string& flows) {
  BotBundle res = load_bot_resources(flows);
  const auto diags = lint_sources(read_flow_sources(flows), res.ontology);
  print_diagnostics(diags, std::cout);
  const size_t errors = error_count(diags);
  std::cout << errors << " error(s), " << diags.size() - errors << " warning(s)\n";
  return errors ? 1 : 0;
}

int cmd_simulate(const std::string& flows, std::string script_path, uint64_t seed) {
  if (!fs::exists(script_path) && fs::exists(fs::path(flows) / script_path)) {
    script_path = (fs::path(flows) / script_path).string();
  }
  const Script script = load_script(script_path);
  BotBundle bot = load_or_report(flows);
  DialogueEngine engine = bot.engine();
  SessionState s = engine.new_session("simulate", derive_session_seed(seed, "simulate"));
  EngineDriver driver(engine, s);
  const ScriptRun run = run_script(script, driver);
  std::cout << run.transcript_text();
  std::cout << "--- final state ---\n"
            << "state: " << s.current_state << "\n"
            << "variables: " << vars_text(s.variables) << "\n"
            << "stack: " << stack_text(s.stack) << "\n"
            << "turns: " << s.turn_index << "\n";
  for (const auto& f : run.failures) std::cerr << "FAIL " << f.str() << "\n";
  if (!run.ok()) std::cerr << run.failures.size() << " assertion(s) failed\n";
  return run.ok() ? 0 : 1;
}

int cmd_analyze(const std::string& logs, const std::string& report, int min_turns, int window,
                const std::string& format, const std::string& arm_a, const std::string& arm_b) {
  std::ifstream in(logs);
  if (!in) throw std::runtime_error("cannot read " + logs);
  const auto records = filter_min_turns(read_records(in), min_turns);
  Report rep;
  if (report == "components") {
    rep = components_report(records);
  } else if (report == "ab") {
    rep = ab_report(records, arm_a.empty() ? std::nullopt : std::optional(arm_a),
                    arm_b.empty() ? std::nullopt : std::optional(arm_b));
  } else {
    rep = rolling_report(records, window);
  }
  if (format == "json") {
    std::cout << rep.json << "\n";
  } else if (format == "csv") {
    if (report != "rolling") throw std::invalid_argument("csv output is only available for the rolling report");
    std::cout << rolling_csv(rolling_average(daily_ratings(records), window));
  } else {
    std::cout << rep.text;
  }
  return 0;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::string& flows, const std::string& host, int port, const std::string& store_dir,
              uint64_t seed) {
  BotBundle bot = load_or_report(flows);
  std::shared_ptr<Store> store;
  if (store_dir == ":memory:") {
    store = std::make_shared<MemoryStore>();
  } else {
    store = std::make_shared<DiskStore>(store_dir);
  }
  ServiceConfig cfg;
  cfg.seed = seed;
  ChatService service(bot.engine(), store, cfg);
  HttpServer server(service);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::atomic<bool> done{false};
  std::thread sweeper([&] {
    int ticks = 0;
    while (!done) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      if (++ticks % 300 == 0) service.sweep_idle();
    }
  });
  std::cerr << "serving " << bot.graph->name << " on " << host << ":" << port << " (store " << store_dir
            << ")\n";
  const bool ok = server.listen(host, port);
  done = true;
  sweeper.join();
  g_server = nullptr;
  if (!ok) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emorette: state-machine chatbot toolkit"};
  app.require_subcommand(1);

  std::string flows = "demo";
  uint64_t seed = env_seed();
  bool debug = false;
  auto* chat = app.add_subcommand("chat", "Interactive chat in the terminal");
  chat->add_option("--flows", flows, "Bot directory (flows and resources)")->required();
  chat->add_option("--seed", seed, "Session seed");
  chat->add_flag("--debug", debug, "Show state, variables and stack after each turn");

  auto* lint = app.add_subcommand("lint", "Check flow files");
  lint->add_option("--flows", flows, "Bot directory")->required();

  std::string script;
  auto* sim = app.add_subcommand("simulate", "Replay a script and check its assertions");
  sim->add_option("--flows", flows, "Bot directory")->required();
  sim->add_option("--script", script, "Script file")->required();
  sim->add_option("--seed", seed, "Session seed");

  std::string logs, report, format = "text", arm_a, arm_b;
  int min_turns = 3, window = 7;
  auto* an = app.add_subcommand("analyze", "Rating reports over a conversation log");
  an->add_option("--logs", logs, "Newline-delimited conversation records")->required();
  an->add_option("--report", report, "Report kind")
      ->required()
      ->check(CLI::IsMember({"components", "ab", "rolling"}));
  an->add_option("--min-turns", min_turns, "Drop conversations with this many turns or fewer");
  an->add_option("--window", window, "Rolling window in days");
  an->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json", "csv"}));
  an->add_option("--arm-a", arm_a, "First A/B arm (variant)");
  an->add_option("--arm-b", arm_b, "Second A/B arm (variant)");

  std::string host = "127.0.0.1";
  int port = std::stoi(env_or("EMORETTE_PORT", "8080"));
  std::string store_dir = env_or("EMORETTE_STORE_DIR", "emorette-store");
  auto* serve = app.add_subcommand("serve", "Run the HTTP chat service");
  serve->add_option("--flows", flows, "Bot directory");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port");
  serve->add_option("--store", store_dir, "Store directory, or :memory:");
  serve->add_option("--seed", seed, "Service seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*chat) return cmd_chat(flows, seed, debug);
    if (*lint) return cmd_lint(flows);
    if (*sim) return cmd_simulate(flows, script, seed);
    if (*an) return cmd_analyze(logs, report, min_turns, window, format, arm_a, arm_b);
    if (*serve) return cmd_serve(flows, host, port, store_dir, seed);
  } catch (const FlowError&) {
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
