#include "emorette/flow.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include <json.hpp>

namespace emorette {

using ojson = nlohmann::ordered_json;

std::string Diagnostic::str() const {
  std::string out = is_error() ? "error" : "warning";
  out += "[" + code + "] ";
  if (!file.empty()) out += file + ": ";
  if (!location.empty()) out += location + ": ";
  return out + message;
}

namespace {

std::string join_messages(const std::vector<Diagnostic>& d) {
  std::string out;
  for (const auto& x : d) {
    if (!x.is_error()) continue;
    if (!out.empty()) out += "\n";
    out += x.str();
  }
  return out.empty() ? "flow error" : out;
}

}  // namespace

FlowError::FlowError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(join_messages(diagnostics)), diagnostics_(std::move(diagnostics)) {}

size_t error_count(const std::vector<Diagnostic>& diags) {
  return static_cast<size_t>(std::count_if(diags.begin(), diags.end(),
                                           [](const Diagnostic& d) { return d.is_error(); }));
}

// ---------------------------------------------------------------------------
// Document parsing
// ---------------------------------------------------------------------------

namespace {

class DocParser {
 public:
  explicit DocParser(std::string file) : file_(std::move(file)) {}

  void error(std::string location, std::string message, std::string code = "schema-error") {
    diags_.push_back({Diagnostic::Severity::kError, std::move(code), file_, std::move(location),
                      std::move(message)});
  }

  std::string str(const ojson& j, const char* key, const std::string& where, bool required = false) {
    auto it = j.find(key);
    if (it == j.end()) {
      if (required) error(where, std::string("missing \"") + key + "\"");
      return {};
    }
    if (!it->is_string()) {
      error(where, std::string("\"") + key + "\" must be a string");
      return {};
    }
    return it->get<std::string>();
  }

  bool boolean(const ojson& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return false;
    if (!it->is_boolean()) {
      error(where, std::string("\"") + key + "\" must be a boolean");
      return false;
    }
    return it->get<bool>();
  }

  std::vector<std::string> strings(const ojson& j, const char* key, const std::string& where) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    if (!it->is_array()) {
      error(where, std::string("\"") + key + "\" must be an array of strings");
      return out;
    }
    for (const auto& e : *it) {
      if (e.is_string()) {
        out.push_back(e.get<std::string>());
      } else {
        error(where, std::string("\"") + key + "\" must be an array of strings");
      }
    }
    return out;
  }

  FlowDocument parse(std::string_view text) {
    FlowDocument doc;
    doc.file = file_;
    ojson root;
    try {
      root = ojson::parse(text.begin(), text.end());
    } catch (const ojson::parse_error& e) {
      const size_t byte = std::min<size_t>(e.byte, text.size());
      const size_t line = 1 + static_cast<size_t>(
          std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte ? byte - 1 : 0), '\n'));
      error("line " + std::to_string(line), e.what(), "parse-error");
      throw FlowError(diags_);
    }
    if (!root.is_object()) {
      error("", "top level must be an object");
      throw FlowError(diags_);
    }
    static const std::set<std::string> kTopKeys = {"name", "component", "version", "initial", "main",
                                                   "persistent", "states", "transitions", "globals",
                                                   "fallbacks"};
    for (const auto& [k, v] : root.items()) {
      if (!kTopKeys.count(k)) error("", "unknown key \"" + k + "\"");
    }
    doc.name = str(root, "name", "", true);
    doc.component = str(root, "component", "");
    if (doc.component.empty()) doc.component = doc.name;
    if (auto it = root.find("version"); it != root.end()) {
      if (it->is_string()) {
        doc.version = it->get<std::string>();
      } else if (it->is_number()) {
        doc.version = it->dump();
      } else {
        error("", "\"version\" must be a string or number");
      }
    }
    doc.initial = str(root, "initial", "");
    doc.main = boolean(root, "main", "");
    doc.persistent = strings(root, "persistent", "");
    doc.globals = strings(root, "globals", "");

    if (auto it = root.find("states"); it != root.end()) {
      if (!it->is_object()) {
        error("", "\"states\" must be an object");
      } else {
        for (const auto& [id, v] : it->items()) parse_state(doc, id, v);
      }
    }
    if (auto it = root.find("transitions"); it != root.end()) {
      if (!it->is_array()) {
        error("", "\"transitions\" must be an array");
      } else {
        for (size_t i = 0; i < it->size(); ++i) parse_transition(doc, i, (*it)[i]);
      }
    }
    if (auto it = root.find("fallbacks"); it != root.end()) {
      if (!it->is_object()) {
        error("", "\"fallbacks\" must be an object");
      } else {
        for (const auto& [pool, v] : it->items()) {
          doc.fallbacks.emplace_back(pool, strings(*it, pool.c_str(), "fallback pool '" + pool + "'"));
        }
      }
    }
    if (!diags_.empty()) throw FlowError(diags_);
    return doc;
  }

 private:
  void parse_state(FlowDocument& doc, const std::string& id, const ojson& v) {
    const std::string where = "state '" + id + "'";
    FlowStateDecl st;
    st.id = id;
    if (!v.is_object()) {
      error(where, "must be an object");
      return;
    }
    const std::string kind = str(v, "kind", where, true);
    if (kind == "user") {
      st.kind = StateKind::kUser;
    } else if (kind == "system") {
      st.kind = StateKind::kSystem;
    } else if (!kind.empty()) {
      error(where, "kind must be \"user\" or \"system\"");
    }
    st.complete = boolean(v, "complete", where);
    doc.states.push_back(std::move(st));
  }

  void parse_transition(FlowDocument& doc, size_t index, const ojson& v) {
    FlowTransitionDecl t;
    std::string where = "transitions[" + std::to_string(index) + "]";
    if (!v.is_object()) {
      error(where, "must be an object");
      return;
    }
    static const std::set<std::string> kKeys = {"id", "from", "to", "nlu", "template", "guards",
                                                "sets", "stack", "priority", "weight", "chain"};
    for (const auto& [k, x] : v.items()) {
      if (!kKeys.count(k)) error(where, "unknown key \"" + k + "\"");
    }
    t.id = str(v, "id", where);
    if (t.id.empty()) t.id = doc.name + "." + std::to_string(index);
    where = "transition '" + t.id + "'";
    t.from = str(v, "from", where);
    t.to = str(v, "to", where, true);
    t.nlu = str(v, "nlu", where);
    t.tmpl = str(v, "template", where);
    t.guards = strings(v, "guards", where);
    if (auto it = v.find("sets"); it != v.end()) {
      if (!it->is_object()) {
        error(where, "\"sets\" must be an object");
      } else {
        for (const auto& [var, x] : it->items()) {
          if (x.is_string()) {
            t.sets.emplace_back(var, x.get<std::string>());
          } else if (x.is_boolean()) {
            t.sets.emplace_back(var, x.get<bool>());
          } else if (x.is_number()) {
            t.sets.emplace_back(var, x.get<double>());
          } else {
            error(where, "sets." + var + " must be a string, boolean or number");
          }
        }
      }
    }
    if (auto it = v.find("stack"); it != v.end()) {
      if (it->is_string() && it->get<std::string>() == "pop") {
        t.stack = StackOp::Kind::kPop;
      } else if (it->is_object() && it->contains("push") && (*it)["push"].is_string()) {
        t.stack = StackOp::Kind::kPush;
        t.push_state = (*it)["push"].get<std::string>();
        if (auto l = it->find("life"); l != it->end()) {
          if (!l->is_number_integer() || l->get<int>() < 0) {
            error(where, "stack life must be a non-negative integer");
          } else {
            t.life = l->get<int>();
          }
        }
      } else {
        error(where, "\"stack\" must be \"pop\" or {\"push\": state[, \"life\": n]}");
      }
    }
    if (auto it = v.find("priority"); it != v.end()) {
      if (!it->is_number_integer()) {
        error(where, "\"priority\" must be an integer");
      } else {
        t.priority = it->get<int>();
      }
    }
    if (auto it = v.find("weight"); it != v.end()) {
      if (!it->is_number() || !(it->get<double>() > 0.0)) {
        error(where, "\"weight\" must be a positive number");
      } else {
        t.weight = it->get<double>();
      }
    }
    t.chain = boolean(v, "chain", where);
    doc.transitions.push_back(std::move(t));
  }

  std::string file_;
  std::vector<Diagnostic> diags_;
};

ojson value_json(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  const double d = std::get<double>(v);
  if (d == static_cast<double>(static_cast<long long>(d)) && std::abs(d) < 1e15) {
    return static_cast<long long>(d);
  }
  return d;
}

}  // namespace

FlowDocument parse_flow_document(std::string_view json_text, const std::string& file) {
  return DocParser(file).parse(json_text);
}

std::string serialize_flow_document(const FlowDocument& doc) {
  ojson root = ojson::object();
  root["name"] = doc.name;
  root["component"] = doc.component;
  root["version"] = doc.version;
  if (!doc.initial.empty()) root["initial"] = doc.initial;
  if (doc.main) root["main"] = true;
  if (!doc.persistent.empty()) root["persistent"] = doc.persistent;
  ojson states = ojson::object();
  for (const auto& st : doc.states) {
    ojson s = ojson::object();
    s["kind"] = st.kind == StateKind::kUser ? "user" : "system";
    if (st.complete) s["complete"] = true;
    states[st.id] = std::move(s);
  }
  root["states"] = std::move(states);
  ojson transitions = ojson::array();
  for (const auto& t : doc.transitions) {
    ojson j = ojson::object();
    j["id"] = t.id;
    if (!t.from.empty()) j["from"] = t.from;
    j["to"] = t.to;
    if (!t.nlu.empty()) j["nlu"] = t.nlu;
    if (!t.tmpl.empty()) j["template"] = t.tmpl;
    if (!t.guards.empty()) j["guards"] = t.guards;
    if (!t.sets.empty()) {
      ojson sets = ojson::object();
      for (const auto& [k, v] : t.sets) sets[k] = value_json(v);
      j["sets"] = std::move(sets);
    }
    if (t.stack == StackOp::Kind::kPop) {
      j["stack"] = "pop";
    } else if (t.stack == StackOp::Kind::kPush) {
      j["stack"] = ojson{{"push", t.push_state}, {"life", t.life}};
    }
    if (t.priority != 0) j["priority"] = t.priority;
    if (t.weight != 1.0) j["weight"] = t.weight;
    if (t.chain) j["chain"] = true;
    transitions.push_back(std::move(j));
  }
  root["transitions"] = std::move(transitions);
  if (!doc.globals.empty()) root["globals"] = doc.globals;
  if (!doc.fallbacks.empty()) {
    ojson pools = ojson::object();
    for (const auto& [k, v] : doc.fallbacks) pools[k] = v;
    root["fallbacks"] = std::move(pools);
  }
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

std::shared_ptr<DialogueGraph> load_flow_documents(const std::vector<FlowDocument>& docs,
                                                   std::shared_ptr<const Ontology> ontology) {
  std::vector<Diagnostic> diags;
  auto err = [&](const std::string& code, const std::string& file, const std::string& loc,
                 const std::string& msg) {
    diags.push_back({Diagnostic::Severity::kError, code, file, loc, msg});
  };
  static const Ontology kEmpty;
  const Ontology& ont = ontology ? *ontology : kEmpty;

  auto g = std::make_shared<DialogueGraph>();
  g->ontology = ontology;
  std::map<std::string, std::string> state_file;
  std::map<std::string, std::string> transition_file;

  for (const auto& doc : docs) {
    for (const auto& st : doc.states) {
      if (auto it = state_file.find(st.id); it != state_file.end()) {
        err("duplicate-id", doc.file, "state '" + st.id + "'",
            "state already defined in " + it->second);
        continue;
      }
      state_file[st.id] = doc.file;
      g->states[st.id] = State{st.id, st.kind, st.complete, doc.component, doc.file};
    }
    for (const auto& v : doc.persistent) {
      if (!is_identifier(v)) {
        err("schema-error", doc.file, "persistent", "'" + v + "' is not an identifier");
      } else {
        g->persistent_vars.insert(VariableTable::canonical_name(v));
      }
    }
    for (const auto& [pool, lines] : doc.fallbacks) {
      auto& dst = g->fallback_pools[pool];
      dst.insert(dst.end(), lines.begin(), lines.end());
    }
  }
  const FlowDocument* main_doc = nullptr;
  for (const auto& doc : docs) {
    if (doc.main) {
      if (main_doc) {
        err("duplicate-id", doc.file, "main", "more than one file is marked main (also " + main_doc->file + ")");
      } else {
        main_doc = &doc;
      }
    }
  }
  if (!main_doc) {
    for (const auto& doc : docs) {
      if (!doc.initial.empty()) {
        main_doc = &doc;
        break;
      }
    }
  }
  if (main_doc) {
    g->name = main_doc->name;
    g->initial_state = main_doc->initial;
    if (g->initial_state.empty()) {
      err("schema-error", main_doc->file, "initial", "main flow declares no initial state");
    } else if (!g->has_state(g->initial_state)) {
      err("unknown-state", main_doc->file, "initial", "unknown initial state '" + g->initial_state + "'");
    }
  } else if (!docs.empty()) {
    err("schema-error", docs.front().file, "initial", "no file declares an initial state");
  }

  size_t order = 0;
  for (const auto& doc : docs) {
    const std::set<std::string> doc_globals(doc.globals.begin(), doc.globals.end());
    for (const auto& d : doc.transitions) {
      const std::string loc = "transition '" + d.id + "'";
      if (auto it = transition_file.find(d.id); it != transition_file.end()) {
        err("duplicate-id", doc.file, loc, "transition id already used in " + it->second);
        continue;
      }
      transition_file[d.id] = doc.file;
      Transition t;
      t.id = d.id;
      t.from = d.from;
      t.to = d.to;
      t.file = doc.file;
      t.order = order++;
      t.priority = d.priority;
      t.weight = d.weight;
      t.chain = d.chain;
      bool ok = true;
      if (!t.from.empty() && !g->has_state(t.from)) {
        err("unknown-state", doc.file, loc, "unknown source state '" + t.from + "'");
        ok = false;
      }
      if (t.from.empty() && !doc_globals.count(t.id)) {
        err("schema-error", doc.file, loc, "\"from\" may only be omitted for a global transition");
        ok = false;
      }
      if (!g->has_state(t.to)) {
        err("unknown-state", doc.file, loc, "unknown target state '" + t.to + "'");
        ok = false;
      }
      t.kind = ok && !t.from.empty() ? g->state(t.from).kind : StateKind::kUser;
      if (d.stack == StackOp::Kind::kPush) {
        t.stack = {StackOp::Kind::kPush, d.push_state, d.life};
        if (!g->has_state(d.push_state)) {
          err("unknown-state", doc.file, loc, "push of unknown state '" + d.push_state + "'");
          ok = false;
        }
      } else {
        t.stack.kind = d.stack;
      }
      try {
        t.nlu = Nlu::parse(d.nlu);
      } catch (const ConfigurationError& e) {
        err(d.nlu.rfind('@', 0) == 0 ? "bad-classifier" : "bad-pattern", doc.file, loc, e.what());
        ok = false;
      }
      if (t.nlu.kind == Nlu::Kind::kPattern) {
        for (const auto& ref : ontology_refs(t.nlu.pattern)) {
          if (!ont.has_node(ref)) {
            err("unknown-ontology-node", doc.file, loc, "#ONT(" + ref + ") names an unknown ontology node");
            ok = false;
          }
        }
      }
      if (t.kind == StateKind::kSystem && t.nlu.kind != Nlu::Kind::kNone) {
        err("schema-error", doc.file, loc, "system transitions take no \"nlu\"");
        ok = false;
      }
      if (t.kind == StateKind::kUser && !d.tmpl.empty()) {
        err("schema-error", doc.file, loc, "user transitions take no \"template\"");
        ok = false;
      }
      try {
        t.tmpl = Template::parse(d.tmpl);
      } catch (const ConfigurationError& e) {
        err("bad-template", doc.file, loc, e.what());
        ok = false;
      }
      for (const auto& gs : d.guards) {
        try {
          t.guards.push_back(parse_guard(gs));
        } catch (const ConfigurationError& e) {
          err("bad-guard", doc.file, loc, e.what());
          ok = false;
        }
      }
      for (const auto& [var, raw] : d.sets) {
        try {
          t.sets.push_back(SetAction::parse(var, raw));
        } catch (const ConfigurationError& e) {
          err("bad-set", doc.file, loc, e.what());
          ok = false;
        }
      }
      if (ok) g->transitions.push_back(std::move(t));
    }
    for (const auto& gid : doc.globals) {
      if (!transition_file.count(gid) || transition_file[gid] != doc.file) {
        err("unknown-transition", doc.file, "globals", "unknown global transition '" + gid + "'");
        continue;
      }
      if (std::any_of(g->transitions.begin(), g->transitions.end(),
                      [&](const Transition& t) { return t.id == gid; })) {
        g->globals.push_back(gid);
      }
    }
  }
  if (!diags.empty()) throw FlowError(std::move(diags));
  try {
    g->finalize();
  } catch (const ConfigurationError& e) {
    throw FlowError({{Diagnostic::Severity::kError, "invalid-graph", "", "", e.what()}});
  }
  return g;
}

std::shared_ptr<DialogueGraph> load_flows(const std::vector<FlowSource>& sources,
                                          std::shared_ptr<const Ontology> ontology) {
  std::vector<FlowDocument> docs;
  std::vector<Diagnostic> diags;
  for (const auto& src : sources) {
    try {
      docs.push_back(parse_flow_document(src.text, src.file));
    } catch (const FlowError& e) {
      diags.insert(diags.end(), e.diagnostics().begin(), e.diagnostics().end());
    }
  }
  if (!diags.empty()) throw FlowError(std::move(diags));
  return load_flow_documents(docs, std::move(ontology));
}

// ---------------------------------------------------------------------------
// Lint
// ---------------------------------------------------------------------------

namespace {

bool guards_assure(const Transition& t, const std::string& var) {
  return std::any_of(t.guards.begin(), t.guards.end(), [&](const Guard& g) {
    return g.var == var && (g.op == Guard::Op::kSet || g.op == Guard::Op::kEq);
  });
}

}  // namespace

std::vector<Diagnostic> lint_flow(const DialogueGraph& g) {
  std::vector<Diagnostic> out;
  auto add = [&](Diagnostic::Severity sev, std::string code, std::string file, std::string loc,
                 std::string msg) {
    out.push_back({sev, std::move(code), std::move(file), std::move(loc), std::move(msg)});
  };
  const auto kErr = Diagnostic::Severity::kError;
  const auto kWarn = Diagnostic::Severity::kWarning;
  auto tloc = [](const Transition& t) { return "transition '" + t.id + "'"; };

  // Reachability: initial state, global targets, and pushed states (which a
  // stack return may resume).
  std::set<std::string> reachable;
  std::deque<std::string> queue;
  auto visit = [&](const std::string& s) {
    if (g.has_state(s) && reachable.insert(s).second) queue.push_back(s);
  };
  visit(g.initial_state);
  for (size_t i : g.global_transitions()) {
    const auto& t = g.transitions[i];
    visit(t.to);
    if (t.stack.kind == StackOp::Kind::kPush) visit(t.stack.state);
  }
  while (!queue.empty()) {
    const std::string s = queue.front();
    queue.pop_front();
    for (size_t i : g.outgoing(s)) {
      const auto& t = g.transitions[i];
      visit(t.to);
      if (t.stack.kind == StackOp::Kind::kPush) visit(t.stack.state);
    }
  }
  for (const auto& [id, st] : g.states) {
    if (!reachable.count(id)) {
      add(kWarn, "unreachable-state", st.file, "state '" + id + "'", "not reachable from the initial state");
    }
  }

  // Dead ends.
  for (const auto& [id, st] : g.states) {
    if (g.outgoing(id).empty()) {
      add(kErr, "no-outgoing", st.file, "state '" + id + "'",
          std::string(st.kind == StateKind::kUser ? "user" : "system") + " state has no outgoing transitions");
    }
  }

  // Slots that can never be filled.
  std::set<std::string> assigned(g.persistent_vars.begin(), g.persistent_vars.end());
  for (const auto& t : g.transitions) {
    for (const auto& a : t.sets) assigned.insert(a.var);
    if (t.nlu.kind == Nlu::Kind::kPattern) {
      for (const auto& c : capture_names(t.nlu.pattern)) assigned.insert(VariableTable::canonical_name(c));
    }
    if (t.nlu.kind == Nlu::Kind::kClassifier && t.nlu.classifier.kind == ClassifierRef::Kind::kEntity) {
      assigned.insert("entity");
    }
  }
  for (const auto& t : g.transitions) {
    for (const auto& slot : t.tmpl.slots) {
      if (!assigned.count(slot) && !guards_assure(t, slot)) {
        add(kErr, "unguarded-slot", t.file, tloc(t),
            "$" + slot + " is never assigned and not guarded");
      }
    }
  }

  // Speaker alternation.
  for (const auto& t : g.transitions) {
    const auto& to = g.state(t.to);
    if (t.kind == StateKind::kSystem && to.kind == StateKind::kSystem && !t.chain) {
      add(kErr, "alternation", t.file, tloc(t),
          "system transition into system state '" + t.to + "' without \"chain\"");
    }
    if (t.kind == StateKind::kUser && to.kind == StateKind::kUser) {
      add(kErr, "alternation", t.file, tloc(t), "user transition into user state '" + t.to + "'");
    }
    if (t.kind == StateKind::kUser && t.nlu.is_default() && t.from.empty()) {
      add(kWarn, "global-default", t.file, tloc(t), "@default on a global transition never fires");
    }
  }

  // States reachable with an empty stack. Any pushed state may be resumed
  // as the last entry, leaving the stack empty.
  std::set<std::string> empty_reach;
  std::set<std::string> reported;
  auto mark = [&](const std::string& s) {
    if (g.has_state(s) && empty_reach.insert(s).second) queue.push_back(s);
  };
  mark(g.initial_state);
  for (const auto& t : g.transitions) {
    if (t.stack.kind == StackOp::Kind::kPush) mark(t.stack.state);
  }
  auto follow = [&](const Transition& t) {
    if (t.stack.kind == StackOp::Kind::kPop) {
      if (reported.insert(t.id).second) {
        add(kErr, "empty-stack-pop", t.file, tloc(t), "pop can run with an empty stack");
      }
      mark(t.to);
    } else if (t.stack.kind == StackOp::Kind::kNone) {
      mark(t.to);
    }
  };
  for (size_t i : g.global_transitions()) follow(g.transitions[i]);
  while (!queue.empty()) {
    const std::string s = queue.front();
    queue.pop_front();
    for (size_t i : g.outgoing(s)) follow(g.transitions[i]);
  }

  // System states with no unconditional response.
  for (const auto& [id, st] : g.states) {
    if (st.kind != StateKind::kSystem) continue;
    const auto& outs = g.outgoing(id);
    if (outs.empty()) continue;
    const bool has_default = std::any_of(outs.begin(), outs.end(), [&](size_t i) {
      const auto& t = g.transitions[i];
      return t.guards.empty() && t.tmpl.slots.empty();
    });
    if (!has_default) {
      add(kWarn, "no-default-response", st.file, "state '" + id + "'",
          "every response is conditional; the fallback pool may be used");
    }
  }
  return out;
}

std::vector<Diagnostic> lint_sources(const std::vector<FlowSource>& sources,
                                     std::shared_ptr<const Ontology> ontology) {
  try {
    auto g = load_flows(sources, std::move(ontology));
    return lint_flow(*g);
  } catch (const FlowError& e) {
    return e.diagnostics();
  }
}

}  // namespace emorette
