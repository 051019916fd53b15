#include "emorette/engine.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace emorette {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) return std::nullopt;
  return v;
}

const Ontology& empty_ontology() {
  static const Ontology kEmpty;
  return kEmpty;
}

const Binding* find_binding(const Bindings& b, const std::string& name) {
  const std::string want = VariableTable::canonical_name(name);
  for (const auto& [k, v] : b) {
    if (VariableTable::canonical_name(k) == want) return &v;
  }
  return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------
// Guards, classifier references, NLU, templates, sets
// ---------------------------------------------------------------------------

Guard parse_guard(std::string_view text) {
  Guard g;
  g.source = std::string(trim(text));
  std::string_view t = g.source;
  std::string_view var;
  if (!t.empty() && t.front() == '!') {
    g.op = Guard::Op::kUnset;
    var = trim(t.substr(1));
  } else if (auto ne = t.find("!="); ne != std::string_view::npos) {
    g.op = Guard::Op::kNe;
    var = trim(t.substr(0, ne));
    g.value = parse_value_literal(trim(t.substr(ne + 2)));
  } else if (auto eq = t.find('='); eq != std::string_view::npos) {
    g.op = Guard::Op::kEq;
    var = trim(t.substr(0, eq));
    g.value = parse_value_literal(trim(t.substr(eq + 1)));
  } else {
    var = t;
  }
  if (!var.empty() && var.front() == '$') var.remove_prefix(1);
  if (!is_identifier(var)) throw ConfigurationError("bad guard '" + g.source + "'");
  g.var = VariableTable::canonical_name(var);
  return g;
}

bool guard_holds(const Guard& g, const VariableTable& vars) {
  const Value* v = vars.get(g.var);
  switch (g.op) {
    case Guard::Op::kSet: return v != nullptr;
    case Guard::Op::kUnset: return v == nullptr;
    case Guard::Op::kEq: return v != nullptr && value_to_string(*v) == value_to_string(g.value);
    case Guard::Op::kNe: return v == nullptr || value_to_string(*v) != value_to_string(g.value);
  }
  return false;
}

ClassifierRef parse_classifier_ref(std::string_view text) {
  ClassifierRef c;
  c.source = std::string(trim(text));
  std::string_view t = c.source;
  auto fail = [&](const std::string& why) {
    return ConfigurationError("bad classifier reference '" + c.source + "': " + why);
  };
  if (t.empty() || t.front() != '@') throw fail("must start with '@'");
  t.remove_prefix(1);
  std::string_view name = t;
  std::vector<std::string> args;
  if (auto open = t.find('('); open != std::string_view::npos) {
    if (t.back() != ')') throw fail("missing ')'");
    name = trim(t.substr(0, open));
    std::string_view inner = t.substr(open + 1, t.size() - open - 2);
    size_t pos = 0;
    while (true) {
      auto comma = inner.find(',', pos);
      args.emplace_back(trim(inner.substr(pos, comma - pos)));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (args.size() == 1 && args[0].empty()) args.clear();
  }
  auto threshold_arg = [&](size_t i) {
    if (args.size() <= i) return;
    auto v = parse_number(args[i]);
    if (!v || *v < 0.0 || *v > 1.0) throw fail("threshold must be a number in [0,1]");
    c.threshold = *v;
  };
  if (name == "intent" || name == "topic") {
    c.kind = name == "intent" ? ClassifierRef::Kind::kIntent : ClassifierRef::Kind::kTopic;
    if (args.empty() || args[0].empty() || args.size() > 2) throw fail("expected (Label[, p])");
    c.label = args[0];
    threshold_arg(1);
  } else if (name == "sentiment") {
    c.kind = ClassifierRef::Kind::kSentiment;
    if (args.empty() || args.size() > 2) throw fail("expected (polarity[, t])");
    c.label = args[0];
    if (c.label != "positive" && c.label != "negative" && c.label != "neutral") {
      throw fail("polarity must be positive, negative or neutral");
    }
    threshold_arg(1);
  } else if (name == "entity") {
    c.kind = ClassifierRef::Kind::kEntity;
    if (args.size() > 1) throw fail("expected at most one entity type");
    if (!args.empty()) c.label = args[0];
  } else if (name == "default") {
    c.kind = ClassifierRef::Kind::kDefault;
    if (!args.empty()) throw fail("@default takes no arguments");
  } else {
    throw fail("unknown classifier '" + std::string(name) + "'");
  }
  return c;
}

Nlu Nlu::parse(std::string_view text) {
  Nlu n;
  n.source = std::string(trim(text));
  if (n.source.empty()) return n;
  if (n.source.front() == '@') {
    n.kind = Kind::kClassifier;
    n.classifier = parse_classifier_ref(n.source);
    return n;
  }
  n.kind = Kind::kPattern;
  try {
    n.pattern = parse_pattern(n.source);
  } catch (const PatternSyntaxError& e) {
    throw ConfigurationError(std::string("pattern '") + n.source + "': " + e.what());
  }
  return n;
}

Template Template::parse(std::string_view text) {
  Template t;
  t.source = std::string(text);
  std::string literal;
  for (size_t i = 0; i < text.size();) {
    if (text[i] != '$') {
      literal += text[i++];
      continue;
    }
    size_t j = i + 1;
    if (j >= text.size() || !ident_start(text[j])) {
      throw ConfigurationError("template '" + t.source + "': '$' at offset " +
                               std::to_string(i) + " does not start a variable");
    }
    while (j < text.size() && ident_char(text[j])) ++j;
    if (!literal.empty()) t.pieces.push_back({false, std::move(literal)});
    literal.clear();
    std::string var = VariableTable::canonical_name(text.substr(i + 1, j - i - 1));
    t.slots.insert(var);
    t.pieces.push_back({true, std::move(var)});
    i = j;
  }
  if (!literal.empty()) t.pieces.push_back({false, std::move(literal)});
  return t;
}

bool Template::resolvable(const VariableTable& vars) const {
  return std::all_of(slots.begin(), slots.end(),
                     [&](const std::string& v) { return vars.contains(v); });
}

std::string Template::render(const VariableTable& vars) const {
  std::string out;
  for (const auto& p : pieces) {
    if (!p.slot) {
      out += p.text;
    } else if (const Value* v = vars.get(p.text)) {
      out += value_to_string(*v);
    } else {
      throw ConfigurationError("template '" + source + "': $" + p.text + " is unset");
    }
  }
  return out;
}

SetAction SetAction::parse(std::string var, const Value& raw) {
  if (!is_identifier(var)) throw ConfigurationError("bad variable name '" + var + "' in sets");
  SetAction a;
  a.var = VariableTable::canonical_name(var);
  const auto* s = std::get_if<std::string>(&raw);
  if (!s || s->empty() || s->front() != '$') {
    a.literal = raw;
    return a;
  }
  std::string_view ref = std::string_view(*s).substr(1);
  constexpr std::string_view kNodeSuffix = ".node";
  if (ref.size() > kNodeSuffix.size() && ref.substr(ref.size() - kNodeSuffix.size()) == kNodeSuffix) {
    a.kind = Kind::kCaptureNode;
    ref.remove_suffix(kNodeSuffix.size());
  } else {
    a.kind = Kind::kCapture;
  }
  if (!is_identifier(ref)) throw ConfigurationError("bad capture reference '" + *s + "' in sets");
  a.capture = std::string(ref);
  return a;
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

void DialogueGraph::finalize() {
  by_id_.clear();
  outgoing_.clear();
  global_idx_.clear();
  if (!states.empty() && !has_state(initial_state)) {
    throw ConfigurationError("initial state '" + initial_state + "' does not exist");
  }
  for (const auto& [id, st] : states) {
    if (id != st.id) throw ConfigurationError("state key '" + id + "' does not match id '" + st.id + "'");
  }
  const Ontology& ont = ontology ? *ontology : empty_ontology();
  for (size_t i = 0; i < transitions.size(); ++i) {
    const Transition& t = transitions[i];
    const std::string where = "transition '" + t.id + "'";
    if (!by_id_.emplace(t.id, i).second) throw ConfigurationError("duplicate transition id '" + t.id + "'");
    if (!has_state(t.to)) throw ConfigurationError(where + ": unknown target state '" + t.to + "'");
    if (!t.from.empty()) {
      if (!has_state(t.from)) throw ConfigurationError(where + ": unknown source state '" + t.from + "'");
      if (state(t.from).kind != t.kind) {
        throw ConfigurationError(where + ": kind does not match source state '" + t.from + "'");
      }
      outgoing_[t.from].push_back(i);
    }
    if (t.stack.kind == StackOp::Kind::kPush && !has_state(t.stack.state)) {
      throw ConfigurationError(where + ": push of unknown state '" + t.stack.state + "'");
    }
    if (t.stack.life < 0) throw ConfigurationError(where + ": negative stack life");
    if (!(t.weight > 0.0)) throw ConfigurationError(where + ": weight must be positive");
    if (t.kind == StateKind::kSystem && t.nlu.kind != Nlu::Kind::kNone) {
      throw ConfigurationError(where + ": system transitions take no NLU");
    }
    if (t.nlu.kind == Nlu::Kind::kPattern) {
      try {
        check_ontology_refs(t.nlu.pattern, ont);
      } catch (const PatternConfigError& e) {
        throw ConfigurationError(where + ": " + e.what());
      }
    }
  }
  for (const auto& gid : globals) {
    auto it = by_id_.find(gid);
    if (it == by_id_.end()) throw ConfigurationError("unknown global transition '" + gid + "'");
    if (transitions[it->second].kind != StateKind::kUser) {
      throw ConfigurationError("global transition '" + gid + "' is not a user transition");
    }
    global_idx_.push_back(it->second);
  }
  for (const auto& t : transitions) {
    if (t.from.empty() && std::find(globals.begin(), globals.end(), t.id) == globals.end()) {
      throw ConfigurationError("transition '" + t.id + "' has no source and is not global");
    }
  }
  for (auto& [id, list] : outgoing_) {
    std::stable_sort(list.begin(), list.end(), [&](size_t a, size_t b) {
      const auto& ta = transitions[a];
      const auto& tb = transitions[b];
      if (ta.priority != tb.priority) return ta.priority > tb.priority;
      return ta.order < tb.order;
    });
  }
}

const State& DialogueGraph::state(const std::string& id) const {
  auto it = states.find(id);
  if (it == states.end()) throw ConfigurationError("unknown state '" + id + "'");
  return it->second;
}

const Transition& DialogueGraph::transition(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ConfigurationError("unknown transition '" + id + "'");
  return transitions[it->second];
}

const std::vector<size_t>& DialogueGraph::outgoing(const std::string& state) const {
  static const std::vector<size_t> kNone;
  auto it = outgoing_.find(state);
  return it == outgoing_.end() ? kNone : it->second;
}

const std::vector<std::string>& DialogueGraph::pool_for(const std::string& component) const {
  static const std::vector<std::string> kNone;
  if (auto it = fallback_pools.find(component); it != fallback_pools.end() && !it->second.empty()) {
    return it->second;
  }
  if (auto it = fallback_pools.find(std::string(kGenericPool)); it != fallback_pools.end()) {
    return it->second;
  }
  return kNone;
}

// ---------------------------------------------------------------------------
// Turn execution
// ---------------------------------------------------------------------------

namespace {

std::optional<Bindings> classifier_accepts(const ClassifierRef& c, const TokenizedUtterance& u,
                                           const FeatureBundle& f) {
  switch (c.kind) {
    case ClassifierRef::Kind::kIntent:
    case ClassifierRef::Kind::kTopic: {
      const auto& dist = c.kind == ClassifierRef::Kind::kIntent ? f.intent_dist : f.topic_dist;
      if (!dist || dist->empty()) return std::nullopt;
      const bool ok = c.threshold ? dist->prob(c.label) >= *c.threshold && dist->prob(c.label) > 0.0
                                  : dist->argmax() == c.label;
      if (!ok) return std::nullopt;
      return Bindings{};
    }
    case ClassifierRef::Kind::kSentiment: {
      if (!f.sentiment) return std::nullopt;
      const double t = c.threshold.value_or(kSentimentThreshold);
      const double v = *f.sentiment;
      const bool ok = c.label == "positive"   ? v >= t
                      : c.label == "negative" ? v <= -t
                                              : std::abs(v) < t;
      if (!ok) return std::nullopt;
      return Bindings{};
    }
    case ClassifierRef::Kind::kEntity: {
      if (!f.entities) return std::nullopt;
      for (const auto& m : *f.entities) {
        if (!c.label.empty() && m.entity_type != c.label) continue;
        Bindings b;
        b["ENTITY"] = Binding{m.surface, m.start, m.end, m.entity_id};
        return b;
      }
      return std::nullopt;
    }
    case ClassifierRef::Kind::kDefault:
      return std::nullopt;
  }
  (void)u;
  return std::nullopt;
}

std::optional<Bindings> nlu_accepts(const DialogueGraph& g, const Transition& t,
                                    const TokenizedUtterance& u, const FeatureBundle& f) {
  switch (t.nlu.kind) {
    case Nlu::Kind::kNone:
      return Bindings{};
    case Nlu::Kind::kPattern: {
      try {
        auto m = match_pattern(t.nlu.pattern, u, g.ontology ? *g.ontology : empty_ontology());
        if (!m) return std::nullopt;
        return std::move(m->bindings);
      } catch (const PatternConfigError& e) {
        throw ConfigurationError("transition '" + t.id + "': " + e.what());
      }
    }
    case Nlu::Kind::kClassifier:
      return classifier_accepts(t.nlu.classifier, u, f);
  }
  return std::nullopt;
}

bool guards_hold(const Transition& t, const VariableTable& vars) {
  return std::all_of(t.guards.begin(), t.guards.end(),
                     [&](const Guard& g) { return guard_holds(g, vars); });
}

void record_component(const DialogueGraph& g, SessionState& s, const std::string& state) {
  const auto& c = g.state(state).component;
  if (!c.empty()) s.components.insert(c);
}

// Sets, stack operation, arrival (with stack return on complete states).
void apply_effects(const DialogueGraph& g, SessionState& s, const Transition& t,
                   const Bindings& bindings, Step& step) {
  step.stack_before = s.stack;
  for (const auto& [name, b] : bindings) {
    s.variables.set(name, b.surface);
    step.writes.push_back({VariableTable::canonical_name(name), b.surface});
  }
  for (const auto& a : t.sets) {
    Value v;
    if (a.kind == SetAction::Kind::kLiteral) {
      v = a.literal;
    } else {
      const Binding* b = find_binding(bindings, a.capture);
      if (!b) {
        step.diagnostics.push_back("capture $" + a.capture + " not bound; " + a.var + " left as is");
        continue;
      }
      if (a.kind == SetAction::Kind::kCapture) {
        v = b->surface;
      } else if (b->node) {
        v = *b->node;
      } else {
        step.diagnostics.push_back("capture $" + a.capture + " has no node; " + a.var + " left as is");
        continue;
      }
    }
    s.variables.set(a.var, v);
    step.writes.push_back({a.var, v});
  }
  std::string target = t.to;
  if (t.stack.kind == StackOp::Kind::kPush) {
    s.stack.push_back({t.stack.state, t.stack.life});
  } else if (t.stack.kind == StackOp::Kind::kPop) {
    if (auto r = stack_return(s)) {
      target = *r;
      step.resumed = *r;
    } else {
      step.diagnostics.push_back("pop on empty stack; continuing to '" + t.to + "'");
    }
  }
  s.current_state = target;
  record_component(g, s, target);
  if (g.state(target).complete) {
    if (auto r = stack_return(s)) {
      step.resumed = *r;
      s.current_state = *r;
      record_component(g, s, *r);
    }
  }
  step.to = s.current_state;
  step.stack_after = s.stack;
}

}  // namespace

Step apply_user_transition(const DialogueGraph& g, SessionState& s, const Transition& t,
                           const Bindings& bindings) {
  Step step;
  step.kind = Step::Kind::kUser;
  step.transition_id = t.id;
  step.from = s.current_state;
  apply_effects(g, s, t, bindings, step);
  return step;
}

std::optional<Step> take_user_turn(const DialogueGraph& g, SessionState& s,
                                   const TokenizedUtterance& u, const FeatureBundle& f) {
  if (g.state(s.current_state).kind != StateKind::kUser) {
    throw std::logic_error("take_user_turn called in system state '" + s.current_state + "'");
  }
  auto try_list = [&](const std::vector<size_t>& list) -> std::optional<Step> {
    for (size_t i : list) {
      const Transition& t = g.transitions[i];
      if (t.nlu.is_default() || !guards_hold(t, s.variables)) continue;
      if (auto b = nlu_accepts(g, t, u, f)) return apply_user_transition(g, s, t, *b);
    }
    return std::nullopt;
  };
  if (auto step = try_list(g.outgoing(s.current_state))) return step;
  return try_list(g.global_transitions());
}

std::optional<Step> take_system_turn(const DialogueGraph& g, SessionState& s) {
  if (g.state(s.current_state).kind != StateKind::kSystem) {
    throw std::logic_error("take_system_turn called in user state '" + s.current_state + "'");
  }
  std::vector<const Transition*> valid;
  for (size_t i : g.outgoing(s.current_state)) {
    const Transition& t = g.transitions[i];
    if (guards_hold(t, s.variables) && t.tmpl.resolvable(s.variables)) valid.push_back(&t);
  }
  if (valid.empty()) return std::nullopt;
  // outgoing() is priority-sorted, so the top tier is a prefix.
  const int best = valid.front()->priority;
  size_t tier = 0;
  while (tier < valid.size() && valid[tier]->priority == best) ++tier;
  const Transition* chosen = valid.front();
  if (tier > 1) {
    double total = 0.0;
    for (size_t i = 0; i < tier; ++i) total += valid[i]->weight;
    double r = SessionRng(s).next_unit() * total;
    chosen = valid[tier - 1];
    for (size_t i = 0; i < tier; ++i) {
      if (r < valid[i]->weight) {
        chosen = valid[i];
        break;
      }
      r -= valid[i]->weight;
    }
  }
  Step step;
  step.kind = Step::Kind::kSystem;
  step.transition_id = chosen->id;
  step.from = s.current_state;
  step.text = chosen->tmpl.render(s.variables);
  apply_effects(g, s, *chosen, {}, step);
  return step;
}

std::optional<std::string> stack_return(SessionState& s) {
  while (!s.stack.empty()) {
    StackEntry top = s.stack.back();
    s.stack.pop_back();
    if (!top.expired()) return top.state_id;
  }
  return std::nullopt;
}

void tick_lives(SessionState& s) {
  for (auto& e : s.stack) e.life = std::max(0, e.life - 1);
}

// ---------------------------------------------------------------------------
// Blocklist and fallbacks
// ---------------------------------------------------------------------------

Blocklist Blocklist::parse(std::string_view text) {
  Blocklist b;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    b.add(t);
  }
  return b;
}

Blocklist Blocklist::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open blocklist '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Blocklist::add(std::string_view phrase) {
  auto toks = normalize_utterance(phrase).tokens;
  if (!toks.empty()) phrases_.push_back(std::move(toks));
}

bool Blocklist::blocks(std::string_view text) const {
  const auto toks = normalize_utterance(text).tokens;
  return std::any_of(phrases_.begin(), phrases_.end(), [&](const auto& p) {
    return std::search(toks.begin(), toks.end(), p.begin(), p.end()) != toks.end();
  });
}

std::string draw_fallback(const DialogueGraph& g, const std::string& component, SessionState& s) {
  const auto& pool = g.pool_for(component);
  if (pool.empty()) return std::string(kLastResortResponse);
  if (pool.size() == 1) return pool.front();
  return pool[SessionRng(s).next_index(pool.size())];
}

std::string emit_response(const DialogueGraph& g, const Blocklist& blocklist,
                          const std::string& candidate, const std::string& component,
                          SessionState& s) {
  if (!blocklist.blocks(candidate)) return candidate;
  return draw_fallback(g, component, s);
}

std::vector<std::string> TurnResult::segments() const {
  std::vector<std::string> out;
  for (const auto& st : steps) {
    if (st.kind != Step::Kind::kUser) out.push_back(st.text);
  }
  return out;
}

std::vector<std::string> TurnResult::transition_ids() const {
  std::vector<std::string> out;
  for (const auto& st : steps) {
    if (!st.transition_id.empty()) out.push_back(st.transition_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

DialogueEngine::DialogueEngine(std::shared_ptr<const DialogueGraph> graph, Pipeline pipeline,
                               Blocklist blocklist)
    : graph_(std::move(graph)), pipeline_(std::move(pipeline)), blocklist_(std::move(blocklist)) {
  if (!graph_) throw std::invalid_argument("DialogueEngine needs a graph");
  if (!graph_->has_state(graph_->initial_state)) {
    throw ConfigurationError("graph '" + graph_->name + "' has no valid initial state");
  }
}

SessionState DialogueEngine::new_session(std::string session_id, uint64_t rng_seed,
                                         std::optional<std::string> start) const {
  SessionState s;
  s.session_id = std::move(session_id);
  s.rng_seed = rng_seed;
  s.current_state = start.value_or(graph_->initial_state);
  graph_->state(s.current_state);
  record_component(*graph_, s, s.current_state);
  return s;
}

std::string DialogueEngine::component_of(const std::string& state) const {
  return graph_->state(state).component;
}

FeatureBundle DialogueEngine::extract(const SessionState& s, const TokenizedUtterance& u) const {
  PipelineInput in{u, s.last_response, s.last_intent, s.last_topic};
  return pipeline_.run(in);
}

void DialogueEngine::run_system_chain(SessionState& s, TurnResult& r,
                                      const std::string& fallback_state) const {
  const auto& g = *graph_;
  int steps = 0;
  while (g.state(s.current_state).kind == StateKind::kSystem) {
    if (steps++ >= kMaxChain) {
      r.diagnostics.push_back("system chain longer than " + std::to_string(kMaxChain) + " steps");
    } else if (auto step = take_system_turn(g, s)) {
      for (const auto& d : step->diagnostics) r.diagnostics.push_back(d);
      r.steps.push_back(std::move(*step));
      continue;
    } else {
      r.diagnostics.push_back("no valid system transition in '" + s.current_state + "'");
    }
    Step fb;
    fb.kind = Step::Kind::kFallback;
    fb.from = s.current_state;
    fb.text = draw_fallback(g, component_of(s.current_state), s);
    fb.stack_before = s.stack;
    s.current_state = fallback_state;
    fb.to = fallback_state;
    fb.stack_after = s.stack;
    r.steps.push_back(std::move(fb));
    break;
  }
}

void DialogueEngine::finish(SessionState& s, TurnResult& r, const std::string& component) const {
  std::string candidate;
  std::string prompt;
  for (const auto& st : r.steps) {
    if (st.kind == Step::Kind::kUser) continue;
    if (!candidate.empty()) candidate += ' ';
    candidate += st.text;
    if (st.kind == Step::Kind::kSystem) prompt = st.text;
  }
  if (candidate.empty()) candidate = draw_fallback(*graph_, component, s);
  r.response = emit_response(*graph_, blocklist_, candidate, component, s);
  r.filtered = r.response != candidate;
  if (!prompt.empty()) s.last_prompt = prompt;
  s.last_response = r.response;
  s.history.push_back({Speaker::kSystem, r.response});
}

namespace {

// Component of the state that produced the last system segment.
std::string speaking_component(const DialogueGraph& g, const TurnResult& r,
                               const std::string& current) {
  for (auto it = r.steps.rbegin(); it != r.steps.rend(); ++it) {
    if (it->kind != Step::Kind::kUser) return g.state(it->from).component;
  }
  return g.state(current).component;
}

}  // namespace

TurnResult DialogueEngine::open(SessionState& s) const {
  TurnResult r;
  const auto& g = *graph_;
  if (g.state(s.current_state).kind == StateKind::kSystem) {
    const std::string start = s.current_state;
    run_system_chain(s, r, start);
    if (g.state(s.current_state).kind == StateKind::kSystem) {
      throw ConfigurationError("opening from '" + start + "' does not reach a user state");
    }
  }
  finish(s, r, speaking_component(g, r, s.current_state));
  return r;
}

TurnResult DialogueEngine::turn(SessionState& s, std::string_view utterance) const {
  TokenizedUtterance u = normalize_utterance(utterance);
  FeatureBundle f = extract(s, u);
  return turn_with_features(s, u, std::move(f));
}

TurnResult DialogueEngine::turn_with_features(SessionState& s, const TokenizedUtterance& u,
                                              FeatureBundle features) const {
  const auto& g = *graph_;
  TurnResult r;
  r.features = std::move(features);
  for (const auto& d : r.features.diagnostics) r.diagnostics.push_back(d);
  const std::string start = s.current_state;
  if (g.state(start).kind != StateKind::kUser) {
    throw ConfigurationError("session '" + s.session_id + "' is parked in system state '" + start + "'");
  }
  s.history.push_back({Speaker::kUser, u.original});

  std::optional<Step> step = take_user_turn(g, s, u, r.features);
  if (!step) {
    ++s.unmatched_streak;
    const Transition* fallback = nullptr;
    if (s.unmatched_streak >= 2) {
      for (size_t i : g.outgoing(start)) {
        const Transition& t = g.transitions[i];
        if (t.nlu.is_default() && guards_hold(t, s.variables)) fallback = &t;  // lowest priority last
      }
    }
    if (fallback) {
      step = apply_user_transition(g, s, *fallback, {});
    } else {
      r.unmatched = true;
      Step fb;
      fb.kind = Step::Kind::kFallback;
      fb.from = start;
      fb.to = start;
      fb.stack_before = s.stack;
      fb.stack_after = s.stack;
      fb.text = draw_fallback(g, component_of(start), s);
      if (!s.last_prompt.empty()) fb.text += " " + s.last_prompt;
      r.steps.push_back(std::move(fb));
    }
  }
  if (step) {
    s.unmatched_streak = 0;
    for (const auto& d : step->diagnostics) r.diagnostics.push_back(d);
    r.steps.push_back(std::move(*step));
    run_system_chain(s, r, start);
  }
  if (g.state(s.current_state).kind != StateKind::kUser) s.current_state = start;

  finish(s, r, speaking_component(g, r, s.current_state));
  tick_lives(s);
  ++s.turn_index;
  s.last_intent = r.features.intent_dist.value_or(LabelDistribution{});
  s.last_topic = r.features.topic_dist.value_or(LabelDistribution{});
  return r;
}

}  // namespace emorette
