#include <gtest/gtest.h>

#include <random>

#include "emorette/core.hpp"

using namespace emorette;

TEST(Normalize, LowercasesOnly) {
  EXPECT_EQ(normalize_utterance("Not really").tokens, (std::vector<std::string>{"not", "really"}));
}

TEST(Normalize, EmptyInput) { EXPECT_TRUE(normalize_utterance("").tokens.empty()); }

TEST(Normalize, KeepsInnerApostrophe) {
  EXPECT_EQ(normalize_utterance("I don't love it!").tokens,
            (std::vector<std::string>{"i", "don't", "love", "it"}));
}

TEST(Normalize, PunctuationSeparatesAndEdgeApostrophesDrop) {
  EXPECT_EQ(normalize_utterance("'hello,world' -- ok?").tokens,
            (std::vector<std::string>{"hello", "world", "ok"}));
  EXPECT_EQ(normalize_utterance("don\xE2\x80\x99t").tokens, (std::vector<std::string>{"don't"}));
  EXPECT_EQ(normalize_utterance("caf\xC3\xA9 time").tokens, (std::vector<std::string>{"caf\xC3\xA9", "time"}));
}

TEST(Normalize, Idempotent) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "abcXYZ '!,.?-\t";
  for (int i = 0; i < 500; ++i) {
    std::string raw;
    for (int k = 0; k < 20; ++k) raw += alphabet[rng() % alphabet.size()];
    const std::string once = normalize_phrase(raw);
    EXPECT_EQ(normalize_phrase(once), once) << raw;
  }
}

TEST(Variables, IdentifierRule) {
  VariableTable t;
  EXPECT_NO_THROW(t.set("RELATED_PERSON", std::string("friend")));
  EXPECT_NO_THROW(t.set("_x1", true));
  EXPECT_THROW(t.set("", 1.0), std::invalid_argument);
  EXPECT_THROW(t.set("1abc", 1.0), std::invalid_argument);
  EXPECT_THROW(t.set("a-b", 1.0), std::invalid_argument);
}

TEST(Variables, UnsetIsDistinguishableAndWritesOverwrite) {
  VariableTable t;
  EXPECT_EQ(t.get("student"), nullptr);
  t.set("student", true);
  ASSERT_NE(t.get("STUDENT"), nullptr);
  EXPECT_EQ(*t.get("Student"), Value(true));
  t.set("student", false);
  EXPECT_EQ(*t.get("student"), Value(false));
  EXPECT_EQ(t.size(), 1u);
}

TEST(Variables, ValueRendering) {
  EXPECT_EQ(value_to_string(true), "True");
  EXPECT_EQ(value_to_string(false), "False");
  EXPECT_EQ(value_to_string(3.0), "3");
  EXPECT_EQ(value_to_string(2.5), "2.5");
  EXPECT_EQ(value_to_string(std::string("talk_to_mom")), "talk_to_mom");
  EXPECT_EQ(parse_value_literal("True"), Value(true));
  EXPECT_EQ(parse_value_literal("42"), Value(42.0));
  EXPECT_EQ(parse_value_literal("talk_to_mom"), Value(std::string("talk_to_mom")));
}

TEST(LabelDistribution, NormalizedSumsToOne) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    std::map<std::string, double> w;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) w["L" + std::to_string(k)] = u(rng);
    const auto d = LabelDistribution::normalized(w);
    EXPECT_TRUE(d.valid(1e-9));
  }
  EXPECT_TRUE(LabelDistribution::normalized({{"a", 0.0}}).empty());
}

TEST(LabelDistribution, ArgmaxTiesPickSmallestLabel) {
  LabelDistribution d{{"b", 0.5}, {"a", 0.5}};
  EXPECT_EQ(d.argmax(), "a");
  EXPECT_FALSE(LabelDistribution().argmax());
}

TEST(SessionRng, CounterBasedAndResumable) {
  SessionState a;
  a.rng_seed = 1234;
  SessionRng ra(a);
  std::vector<uint64_t> first;
  for (int i = 0; i < 10; ++i) first.push_back(ra.next_u64());

  SessionState b;
  b.rng_seed = 1234;
  b.rng_draws = 5;
  SessionRng rb(b);
  for (int i = 5; i < 10; ++i) EXPECT_EQ(rb.next_u64(), first[i]);
  EXPECT_EQ(b.rng_draws, 10u);
}

TEST(SessionRng, UnitAndIndexRanges) {
  SessionState s;
  s.rng_seed = 99;
  SessionRng r(s);
  for (int i = 0; i < 10000; ++i) {
    const double x = r.next_unit();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    EXPECT_LT(r.next_index(7), 7u);
  }
}

TEST(SessionRng, SeedsDifferPerSession) {
  EXPECT_NE(derive_session_seed(1, "a"), derive_session_seed(1, "b"));
  EXPECT_EQ(derive_session_seed(1, "a"), derive_session_seed(1, "a"));
}
