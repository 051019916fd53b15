#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emorette/core.hpp"
#include "emorette/nlp/pipeline.hpp"
#include "emorette/ontology.hpp"
#include "emorette/pattern.hpp"

namespace emorette {

// A malformed graph: bad classifier reference, bad template, dangling
// state. Never raised for an utterance that merely fails to match.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StateKind { kUser, kSystem };

struct State {
  std::string id;
  StateKind kind = StateKind::kUser;
  // Entering a complete state resumes the topmost live stack entry.
  bool complete = false;
  std::string component;
  std::string file;
};

// ---------------------------------------------------------------------------
// Transition parts
// ---------------------------------------------------------------------------

// "VAR" (set), "!VAR" (unset), "VAR=value", "VAR!=value". Values use the
// True/False/number/string literal rules of parse_value_literal.
struct Guard {
  enum class Op { kSet, kUnset, kEq, kNe };
  std::string var;
  Op op = Op::kSet;
  Value value;
  std::string source;
};

Guard parse_guard(std::string_view text);
bool guard_holds(const Guard& g, const VariableTable& vars);

// Classifier references in user-transition NLU:
//   @intent(Label[, min_prob])   argmax == Label, or prob >= min_prob
//   @topic(Label[, min_prob])
//   @sentiment(positive|negative|neutral[, threshold])   default 0.05
//   @entity[(type)]              any linked entity (of that type); binds ENTITY
//   @default                     only taken after a repeated miss
struct ClassifierRef {
  enum class Kind { kIntent, kTopic, kSentiment, kEntity, kDefault };
  Kind kind = Kind::kIntent;
  std::string label;
  std::optional<double> threshold;
  std::string source;
};

inline constexpr double kSentimentThreshold = 0.05;

ClassifierRef parse_classifier_ref(std::string_view text);

struct Nlu {
  enum class Kind { kNone, kPattern, kClassifier };
  Kind kind = Kind::kNone;
  std::string source;
  PatternExpr pattern;
  ClassifierRef classifier;

  // "@..." becomes a classifier reference, anything else a pattern.
  static Nlu parse(std::string_view text);
  bool is_default() const {
    return kind == Kind::kClassifier && classifier.kind == ClassifierRef::Kind::kDefault;
  }
};

// Response text with $VAR slots. A '$' that does not start a slot is a
// configuration error, so rendered text never contains '$'.
struct Template {
  struct Piece {
    bool slot = false;
    std::string text;  // literal text or slot variable name
  };
  std::string source;
  std::vector<Piece> pieces;
  std::set<std::string> slots;  // canonical (lowercase) names

  static Template parse(std::string_view text);
  bool resolvable(const VariableTable& vars) const;
  // Requires resolvable(vars).
  std::string render(const VariableTable& vars) const;
};

// `sets` entry: a literal, "$CAPTURE" (surface text) or "$CAPTURE.node"
// (ontology node id of the capture).
struct SetAction {
  enum class Kind { kLiteral, kCapture, kCaptureNode };
  std::string var;
  Kind kind = Kind::kLiteral;
  Value literal;
  std::string capture;

  static SetAction parse(std::string var, const Value& raw);
};

struct StackOp {
  enum class Kind { kNone, kPush, kPop };
  Kind kind = Kind::kNone;
  std::string state;
  int life = kDefaultStackLife;
};

struct Transition {
  std::string id;
  std::string from;  // empty for a transition used only as a global
  std::string to;
  StateKind kind = StateKind::kUser;
  Nlu nlu;
  Template tmpl;
  std::vector<Guard> guards;
  std::vector<SetAction> sets;
  StackOp stack;
  int priority = 0;
  double weight = 1.0;
  // Marks an intended system -> system hop whose segments are flattened
  // into one message.
  bool chain = false;
  std::string file;
  size_t order = 0;  // declaration order, breaks priority ties
};

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

class DialogueGraph {
 public:
  std::string name;
  std::map<std::string, State> states;
  std::vector<Transition> transitions;
  std::vector<std::string> globals;  // transition ids
  std::string initial_state;
  std::map<std::string, std::vector<std::string>> fallback_pools;
  std::set<std::string> persistent_vars;
  std::shared_ptr<const Ontology> ontology;

  // Builds lookup tables and checks referential integrity. Must be called
  // after the public fields are filled in; throws ConfigurationError.
  void finalize();

  const State& state(const std::string& id) const;
  bool has_state(const std::string& id) const { return states.count(id) > 0; }
  const Transition& transition(const std::string& id) const;
  bool has_transition(const std::string& id) const { return by_id_.count(id) > 0; }

  // Indices into `transitions` leaving `state`, by descending priority then
  // declaration order.
  const std::vector<size_t>& outgoing(const std::string& state) const;
  const std::vector<size_t>& global_transitions() const { return global_idx_; }

  // Fallback pool for a component, or "generic" when it has none.
  const std::vector<std::string>& pool_for(const std::string& component) const;

 private:
  std::map<std::string, size_t> by_id_;
  std::map<std::string, std::vector<size_t>> outgoing_;
  std::vector<size_t> global_idx_;
};

inline constexpr std::string_view kGenericPool = "generic";

// ---------------------------------------------------------------------------
// Turn execution
// ---------------------------------------------------------------------------

struct VarWrite {
  std::string var;
  Value value;
  bool operator==(const VarWrite&) const = default;
};

// One state-machine step, recorded for replay checks and the debug view.
struct Step {
  enum class Kind { kUser, kSystem, kFallback };
  Kind kind = Kind::kUser;
  std::string transition_id;  // empty for fallback
  std::string from;
  std::string to;
  std::optional<std::string> resumed;  // state returned to from the stack
  std::string text;                    // system segment text
  std::vector<VarWrite> writes;
  std::vector<StackEntry> stack_before;
  std::vector<StackEntry> stack_after;
  std::vector<std::string> diagnostics;
};

// Every capture binding is written to the variable of the same name (its
// surface text) before the transition's own sets run.
//
// Evaluates local transitions of the current user state, then globals;
// the first whose guards hold and whose NLU accepts wins. Applies its
// sets and stack operation and moves the session. nullopt means
// "unmatched" and leaves the session untouched.
std::optional<Step> take_user_turn(const DialogueGraph& g, SessionState& s,
                                   const TokenizedUtterance& u, const FeatureBundle& f);

// Takes a specific user transition (used for @default fallbacks).
Step apply_user_transition(const DialogueGraph& g, SessionState& s, const Transition& t,
                           const Bindings& bindings);

// Picks among valid system transitions (guards hold, every slot set): the
// highest priority wins; ties are a weighted draw from the session RNG.
// nullopt when no transition is valid.
std::optional<Step> take_system_turn(const DialogueGraph& g, SessionState& s);

// Pops until a live entry (life > 0) is found and returns its state;
// expired entries are discarded.
std::optional<std::string> stack_return(SessionState& s);

// Once per completed user turn.
void tick_lives(SessionState& s);

// Multiword blocklist matched on normalized tokens.
class Blocklist {
 public:
  static Blocklist parse(std::string_view text);
  static Blocklist load_file(const std::string& path);
  void add(std::string_view phrase);
  bool blocks(std::string_view text) const;
  size_t size() const { return phrases_.size(); }

 private:
  std::vector<std::vector<std::string>> phrases_;
};

// Passes clean text through; blocked text is replaced by a seeded draw
// from the component's fallback pool (or the generic pool).
std::string emit_response(const DialogueGraph& g, const Blocklist& blocklist,
                          const std::string& candidate, const std::string& component,
                          SessionState& s);

// Used when even the generic pool is missing.
inline constexpr std::string_view kLastResortResponse = "Hmm, I see.";

std::string draw_fallback(const DialogueGraph& g, const std::string& component, SessionState& s);

struct TurnResult {
  std::string response;
  std::vector<Step> steps;
  FeatureBundle features;
  bool unmatched = false;
  bool filtered = false;
  std::vector<std::string> diagnostics;

  // System segments in order (the E#(a)/(b) lines).
  std::vector<std::string> segments() const;
  std::vector<std::string> transition_ids() const;
};

// Orchestrates one turn: NLP rounds, user transition, the system chain,
// the blocklist check and the life tick. Holds only shared immutable
// resources; all per-conversation data lives in SessionState.
class DialogueEngine {
 public:
  static constexpr int kMaxChain = 16;

  DialogueEngine(std::shared_ptr<const DialogueGraph> graph, Pipeline pipeline,
                 Blocklist blocklist = {});

  const DialogueGraph& graph() const { return *graph_; }

  // Fresh session positioned at `start` (default: the graph's initial
  // state). Does not emit anything.
  SessionState new_session(std::string session_id, uint64_t rng_seed,
                           std::optional<std::string> start = std::nullopt) const;

  // Runs the system chain from the current (system) state; used for the
  // opening message. turn_index is unchanged.
  TurnResult open(SessionState& s) const;

  // One user turn. turn_index advances by one.
  TurnResult turn(SessionState& s, std::string_view utterance) const;

  // Same, with features supplied by the caller.
  TurnResult turn_with_features(SessionState& s, const TokenizedUtterance& u,
                                FeatureBundle features) const;

  FeatureBundle extract(const SessionState& s, const TokenizedUtterance& u) const;

 private:
  void run_system_chain(SessionState& s, TurnResult& r, const std::string& fallback_state) const;
  std::string component_of(const std::string& state) const;
  void finish(SessionState& s, TurnResult& r, const std::string& component) const;

  std::shared_ptr<const DialogueGraph> graph_;
  Pipeline pipeline_;
  Blocklist blocklist_;
};

}  // namespace emorette
