#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "emorette/bot.hpp"
#include "emorette/flow.hpp"

using namespace emorette;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::shared_ptr<const Ontology> demo_ontology() {
  static auto ont = std::make_shared<const Ontology>(Ontology::load_file(std::string(EMORETTE_DEMO_DIR) + "/ontology.txt"));
  return ont;
}

bool has_code(const std::vector<Diagnostic>& d, const std::string& code) {
  return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) { return x.code == code && x.is_error(); });
}

std::string dump(const std::vector<Diagnostic>& d) {
  std::string out;
  for (const auto& x : d) out += x.str() + "\n";
  return out;
}

const char* kTiny = R"J({
  "name": "tiny", "initial": "start",
  "states": {"start": {"kind": "system"}, "u": {"kind": "user"}},
  "transitions": [
    {"id": "hi", "from": "start", "to": "u", "template": "Hello."},
    {"id": "back", "from": "u", "to": "start", "nlu": "_"}
  ]
})J";

}  // namespace

TEST(LoadFlows, DemoHasTableStates) {
  const auto g = load_flows(read_flow_sources(EMORETTE_DEMO_DIR), demo_ontology());
  EXPECT_TRUE(g->has_state("covid_sympathy"));
  EXPECT_TRUE(g->has_state("covid_end"));
  EXPECT_TRUE(g->has_state("act_a"));
  EXPECT_TRUE(g->has_state("pets_start"));
  EXPECT_EQ(g->state("covid_sympathy").component, "covid");
}

TEST(LoadFlows, DuplicateStateAcrossFiles) {
  try {
    load_flows({{"a.flow", kTiny}, {"b.flow", kTiny}}, std::make_shared<Ontology>());
    FAIL() << "expected FlowError";
  } catch (const FlowError& e) {
    EXPECT_TRUE(has_code(e.diagnostics(), "duplicate-id")) << dump(e.diagnostics());
  }
}

TEST(LoadFlows, UnknownOntologyNodeNamesFileAndTransition) {
  const auto text = slurp(std::string(EMORETTE_FIXTURE_DIR) + "/lint/unknown_ontology_node.flow");
  try {
    load_flows({{"onto.flow", text}}, demo_ontology());
    FAIL() << "expected FlowError";
  } catch (const FlowError& e) {
    ASSERT_TRUE(has_code(e.diagnostics(), "unknown-ontology-node")) << dump(e.diagnostics());
    const std::string msg = e.what();
    EXPECT_NE(msg.find("onto.flow"), std::string::npos) << msg;
    EXPECT_NE(msg.find("likes"), std::string::npos) << msg;
  }
}

TEST(LoadFlows, ParseErrorReportsLine) {
  const std::string broken = "{\n  \"name\": \"x\",\n  \"states\": {,\n}";
  try {
    parse_flow_document(broken, "broken.flow");
    FAIL() << "expected FlowError";
  } catch (const FlowError& e) {
    ASSERT_FALSE(e.diagnostics().empty());
    const auto& d = e.diagnostics().front();
    EXPECT_EQ(d.code, "parse-error");
    EXPECT_EQ(d.file, "broken.flow");
    EXPECT_EQ(d.location, "line 3");
  }
}

TEST(LoadFlows, SchemaErrorsCollected) {
  const std::string bad = R"J({"name": "x", "bogus": 1, "states": {"s": {"kind": "robot"}}, "transitions": []})J";
  try {
    parse_flow_document(bad, "bad.flow");
    FAIL() << "expected FlowError";
  } catch (const FlowError& e) {
    EXPECT_GE(e.diagnostics().size(), 2u) << dump(e.diagnostics());
  }
}

TEST(Lint, DemoIsClean) {
  const auto d = lint_sources(read_flow_sources(EMORETTE_DEMO_DIR), demo_ontology());
  EXPECT_TRUE(d.empty()) << dump(d);
}

class LintFixture : public ::testing::TestWithParam<std::pair<std::string, std::string>> {};

TEST_P(LintFixture, ReportsExpectedDiagnostic) {
  const auto& [file, code] = GetParam();
  const auto path = std::string(EMORETTE_FIXTURE_DIR) + "/lint/" + file;
  const auto d = lint_sources({{file, slurp(path)}}, demo_ontology());
  EXPECT_TRUE(has_code(d, code)) << dump(d);
  for (const auto& x : d) {
    if (x.code == code) {
      EXPECT_EQ(x.file, file);
      EXPECT_FALSE(x.location.empty() && x.code != "duplicate-id");
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Defects, LintFixture,
    ::testing::Values(std::pair<std::string, std::string>{"unknown_state.flow", "unknown-state"},
                      std::pair<std::string, std::string>{"unguarded_slot.flow", "unguarded-slot"},
                      std::pair<std::string, std::string>{"empty_stack_pop.flow", "empty-stack-pop"},
                      std::pair<std::string, std::string>{"alternation_break.flow", "alternation"},
                      std::pair<std::string, std::string>{"unknown_ontology_node.flow", "unknown-ontology-node"},
                      std::pair<std::string, std::string>{"duplicate_id.flow", "duplicate-id"}),
    [](const auto& info) {
      auto n = info.param.first.substr(0, info.param.first.find('.'));
      return n;
    });

TEST(Lint, GuardedSlotIsFine) {
  const std::string text = R"J({
    "name": "g", "initial": "s",
    "states": {"s": {"kind": "system"}, "u": {"kind": "user"}},
    "transitions": [
      {"id": "fun", "from": "s", "to": "u", "template": "$X is fun", "guards": ["X"]},
      {"id": "ok", "from": "s", "to": "u", "template": "Okay."},
      {"id": "reply", "from": "u", "to": "s", "nlu": "_"}
    ]})J";
  const auto d = lint_sources({{"g.flow", text}}, demo_ontology());
  EXPECT_FALSE(has_code(d, "unguarded-slot")) << dump(d);
}

TEST(Lint, UnreachableAndDeadEnd) {
  const std::string text = R"J({
    "name": "g", "initial": "s",
    "states": {"s": {"kind": "system"}, "u": {"kind": "user"}, "island": {"kind": "user"}},
    "transitions": [
      {"id": "ask", "from": "s", "to": "u", "template": "Hi."}
    ]})J";
  const auto d = lint_sources({{"g.flow", text}}, demo_ontology());
  EXPECT_TRUE(has_code(d, "no-outgoing")) << dump(d);
  EXPECT_TRUE(std::any_of(d.begin(), d.end(), [](const Diagnostic& x) { return x.code == "unreachable-state"; }));
}

TEST(RoundTrip, DemoDocumentsAreFixedPoints) {
  for (const auto& src : read_flow_sources(EMORETTE_DEMO_DIR)) {
    const auto doc = parse_flow_document(src.text, src.file);
    const auto text = serialize_flow_document(doc);
    const auto again = parse_flow_document(text, src.file);
    EXPECT_EQ(doc, again) << src.file;
    EXPECT_EQ(serialize_flow_document(again), text) << src.file;
  }
}

TEST(RoundTrip, ReloadedGraphBehavesTheSame) {
  const auto sources = read_flow_sources(EMORETTE_DEMO_DIR);
  std::vector<FlowSource> re;
  for (const auto& s : sources) re.push_back({s.file, serialize_flow_document(parse_flow_document(s.text, s.file))});
  const auto a = load_flows(sources, demo_ontology());
  const auto b = load_flows(re, demo_ontology());
  EXPECT_EQ(a->states.size(), b->states.size());
  ASSERT_EQ(a->transitions.size(), b->transitions.size());
  for (size_t i = 0; i < a->transitions.size(); ++i) {
    EXPECT_EQ(a->transitions[i].id, b->transitions[i].id);
    EXPECT_EQ(a->transitions[i].priority, b->transitions[i].priority);
  }
}

TEST(RoundTrip, DefaultsNormalized) {
  const auto doc = parse_flow_document(kTiny, "tiny.flow");
  ASSERT_EQ(doc.transitions.size(), 2u);
  EXPECT_EQ(doc.transitions[0].priority, 0);
  EXPECT_EQ(doc.transitions[0].weight, 1.0);
  EXPECT_EQ(doc.transitions[0].stack, StackOp::Kind::kNone);
  EXPECT_EQ(doc.version, "1");
}
