#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace emorette {

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

struct TokenizedUtterance {
  std::string original;
  std::vector<std::string> tokens;

  bool empty() const { return tokens.empty(); }
  size_t size() const { return tokens.size(); }

  // Tokens [start, end) joined with single spaces.
  std::string span_text(size_t start, size_t end) const;
};

// Lowercases ASCII, treats punctuation as a token separator, and keeps
// apostrophes only when they sit between two word characters ("don't").
// Bytes >= 0x80 are kept as word characters so UTF-8 text survives intact;
// the typographic apostrophe U+2019 is folded to '\''.
TokenizedUtterance normalize_utterance(std::string_view raw);

// normalize_utterance(raw).tokens joined with single spaces.
std::string normalize_phrase(std::string_view raw);

std::string join_tokens(const std::vector<std::string>& tokens, size_t start,
                        size_t end);

// ---------------------------------------------------------------------------
// Variables
// ---------------------------------------------------------------------------

using Value = std::variant<std::string, bool, double>;

// Renders bools as True/False and integral numbers without a fraction.
std::string value_to_string(const Value& v);

// Inverse of value_to_string for authored literals: True/False -> bool,
// numeric text -> number, anything else -> string.
Value parse_value_literal(std::string_view text);

bool is_identifier(std::string_view name);

// Variable names compare case-insensitively; keys are stored lowercased so
// `$RELATED_PERSON` in a template and `related_person` in a guard agree.
class VariableTable {
 public:
  static std::string canonical_name(std::string_view name);

  // Throws std::invalid_argument when name is not an identifier.
  void set(std::string_view name, Value value);
  const Value* get(std::string_view name) const;
  bool contains(std::string_view name) const { return get(name) != nullptr; }

  const std::map<std::string, Value>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool operator==(const VariableTable&) const = default;

 private:
  std::map<std::string, Value> entries_;
};

// ---------------------------------------------------------------------------
// Dialogue stack
// ---------------------------------------------------------------------------

inline constexpr int kDefaultStackLife = 10;

struct StackEntry {
  std::string state_id;
  int life = kDefaultStackLife;

  bool expired() const { return life <= 0; }
  bool operator==(const StackEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Label distributions and NLP features
// ---------------------------------------------------------------------------

class LabelDistribution {
 public:
  LabelDistribution() = default;
  LabelDistribution(std::initializer_list<std::pair<const std::string, double>> init)
      : probs_(init) {}
  explicit LabelDistribution(std::map<std::string, double> probs)
      : probs_(std::move(probs)) {}

  const std::map<std::string, double>& probs() const { return probs_; }
  bool empty() const { return probs_.empty(); }
  double prob(const std::string& label) const;

  // Highest-probability label; ties resolve to the lexicographically smallest.
  std::optional<std::string> argmax() const;

  // Rescales to sum 1 and drops non-positive entries. An all-zero input
  // becomes empty.
  static LabelDistribution normalized(std::map<std::string, double> weights);

  // Probabilities in [0,1] and sum within tol of 1 (or empty).
  bool valid(double tol = 1e-9) const;

  bool operator==(const LabelDistribution&) const = default;

 private:
  std::map<std::string, double> probs_;
};

struct EntityMention {
  std::string surface;
  size_t start = 0;  // token index, inclusive
  size_t end = 0;    // token index, exclusive
  std::string entity_id;
  std::string entity_type;

  bool operator==(const EntityMention&) const = default;
};

// Per-utterance NLP output. Any field may be absent when its extractor
// failed; `diagnostics` explains why.
struct FeatureBundle {
  std::optional<double> sentiment;
  std::optional<std::vector<EntityMention>> entities;
  std::optional<LabelDistribution> topic_dist;
  std::optional<LabelDistribution> intent_dist;
  std::optional<std::string> qa_answer;
  std::vector<std::string> diagnostics;

  bool operator==(const FeatureBundle&) const = default;
};

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

enum class Speaker { kUser, kSystem };

struct HistoryEntry {
  Speaker speaker = Speaker::kUser;
  std::string text;
  bool operator==(const HistoryEntry&) const = default;
};

struct SessionState {
  std::string session_id;
  std::optional<std::string> user_id;
  std::optional<std::string> variant;
  std::string current_state;
  VariableTable variables;
  std::vector<StackEntry> stack;  // back() is the top
  int turn_index = 0;
  uint64_t rng_seed = 0;
  uint64_t rng_draws = 0;
  std::vector<HistoryEntry> history;

  // Turn bookkeeping for fallback handling and contextual classification.
  int unmatched_streak = 0;
  std::string last_response;
  std::string last_prompt;  // final system segment, repeated on a miss
  LabelDistribution last_intent;
  LabelDistribution last_topic;
  std::set<std::string> components;

  bool operator==(const SessionState&) const = default;
};

// Counter-based generator: draw k of a session is a pure function of
// (rng_seed, k), so persisting rng_draws is enough to resume a stream.
class SessionRng {
 public:
  explicit SessionRng(SessionState& s) : s_(s) {}
  uint64_t next_u64();
  // Uniform in [0, 1).
  double next_unit();
  // Uniform index in [0, n). n must be > 0.
  size_t next_index(size_t n);

 private:
  SessionState& s_;
};

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);

// Seed for one session derived from a service-wide seed.
uint64_t derive_session_seed(uint64_t service_seed, std::string_view session_id);

}  // namespace emorette
