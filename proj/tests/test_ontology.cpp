#include <gtest/gtest.h>

#include <random>

#include "emorette/ontology.hpp"
#include "oracles.hpp"

using namespace emorette;

namespace {
Ontology demo() { return Ontology::load_file(std::string(EMORETTE_DEMO_DIR) + "/ontology.txt"); }
}  // namespace

TEST(Ontology, CountsFromFixture) {
  const auto o = Ontology::parse(
      "node related_person\nnode family\nnode mom\nnode dad\n"
      "edge related_person family\nedge family mom\nedge family dad\n");
  EXPECT_EQ(o.node_count(), 4u);
  EXPECT_EQ(o.edge_count(), 3u);
  const auto small = Ontology::parse("node related_person\nnode family\nnode mom\nedge related_person family\nedge family mom\n");
  EXPECT_EQ(small.node_count(), 3u);
  EXPECT_EQ(small.edge_count(), 2u);
}

TEST(Ontology, SelfLoopIsCycle) { EXPECT_THROW(Ontology::parse("node a\nedge a a\n"), OntologyError); }

TEST(Ontology, LongerCycleRejected) {
  EXPECT_THROW(Ontology::parse("node a\nnode b\nnode c\nedge a b\nedge b c\nedge c a\n"), OntologyError);
}

TEST(Ontology, LoadErrors) {
  EXPECT_THROW(Ontology::parse("node a\nnode a\n"), OntologyError);
  EXPECT_THROW(Ontology::parse("node a\nedge a b\n"), OntologyError);
  EXPECT_THROW(Ontology::parse("node a\nterm a ...\n"), OntologyError);
  EXPECT_THROW(Ontology::parse("bogus a\n"), OntologyError);
}

TEST(Ontology, EmptyFile) {
  const auto o = Ontology::parse("");
  EXPECT_EQ(o.node_count(), 0u);
}

TEST(Ontology, DescendantsReflexive) {
  const auto o = demo();
  EXPECT_EQ(o.descendants("best_friend"), (std::set<std::string>{"best_friend"}));
  EXPECT_THROW(o.descendants("nope"), OntologyError);
}

TEST(Ontology, DemoClosureContainsFamily) {
  const auto o = demo();
  const auto& d = o.descendants("related_person");
  EXPECT_TRUE(d.count("family"));
  for (const auto& n : o.nodes()) EXPECT_EQ(d.count(n) > 0, oracle::reaches(o, "related_person", n)) << n;
}

TEST(Ontology, Diamond) {
  const auto o = Ontology::parse("node a\nnode b\nnode c\nnode d\nedge a b\nedge a c\nedge b d\nedge c d\n");
  EXPECT_EQ(o.descendants("a"), (std::set<std::string>{"a", "b", "c", "d"}));
}

TEST(Ontology, PhraseLookup) {
  const auto o = demo();
  const auto friend_nodes = o.nodes_for_phrase(std::vector<std::string>{"friend"});
  ASSERT_EQ(friend_nodes.size(), 1u);
  EXPECT_TRUE(o.descendants("related_person").count(*friend_nodes.begin()));
  EXPECT_TRUE(o.nodes_for_phrase(std::vector<std::string>{"xylophone"}).empty());
  EXPECT_EQ(o.nodes_for_phrase(std::vector<std::string>{"best", "friend"}), (std::set<std::string>{"best_friend"}));
}

TEST(Ontology, StudentHasTwoParents) {
  const auto o = demo();
  const auto nodes = o.nodes_for_phrase(std::vector<std::string>{"student"});
  ASSERT_FALSE(nodes.empty());
  bool under_stage = false, under_status = false;
  for (const auto& n : nodes) {
    under_stage = under_stage || o.descendants("life_stage").count(n);
    under_status = under_status || o.descendants("status").count(n);
  }
  EXPECT_TRUE(under_stage);
  EXPECT_TRUE(under_status);
}

TEST(OntologyProperty, ClosureMatchesDfsOnRandomDags) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::string text;
    for (int i = 0; i < n; ++i) text += "node n" + std::to_string(i) + "\n";
    // Edges only go from lower to higher index, so the graph is acyclic.
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (rng() % 100 < 8) text += "edge n" + std::to_string(i) + " n" + std::to_string(j) + "\n";
      }
    }
    const auto o = Ontology::parse(text);
    for (const auto& a : o.nodes()) {
      const auto& d = o.descendants(a);
      for (const auto& b : o.nodes()) ASSERT_EQ(d.count(b) > 0, oracle::reaches(o, a, b)) << a << "->" << b;
    }
  }
}

TEST(OntologyProperty, LookupIgnoresCase) {
  const auto o = demo();
  for (const auto& [node, phrases] : o.terminals()) {
    for (const auto& p : phrases) {
      std::string upper = p;
      for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      EXPECT_EQ(o.nodes_for_phrase(normalize_phrase(upper)), o.nodes_for_phrase(normalize_phrase(p))) << p;
    }
  }
}

TEST(Ontology, LoadIsIdempotent) {
  const auto a = demo();
  const auto b = demo();
  EXPECT_EQ(a.nodes(), b.nodes());
  EXPECT_EQ(a.terminals(), b.terminals());
}
