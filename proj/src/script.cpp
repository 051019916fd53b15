#include "emorette/script.hpp"

#include <fstream>
#include <sstream>

namespace emorette {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Cursor {
  std::string_view rest;
  std::string where;

  void skip_ws() { rest = trim(rest); }
  bool done() {
    skip_ws();
    return rest.empty();
  }
  std::string word() {
    skip_ws();
    size_t n = 0;
    while (n < rest.size() && rest[n] != ' ' && rest[n] != '\t') ++n;
    std::string out(rest.substr(0, n));
    rest.remove_prefix(n);
    return out;
  }
  std::string quoted() {
    skip_ws();
    if (rest.empty() || rest.front() != '"') throw ScriptError(where + ": expected a quoted string");
    std::string out;
    size_t i = 1;
    for (; i < rest.size() && rest[i] != '"'; ++i) {
      if (rest[i] == '\\' && i + 1 < rest.size()) ++i;
      out += rest[i];
    }
    if (i >= rest.size()) throw ScriptError(where + ": unterminated string");
    rest.remove_prefix(i + 1);
    return out;
  }
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string render_map(const std::map<std::string, std::string>& m) {
  if (m.empty()) return "none";
  std::string out;
  for (const auto& [k, v] : m) out += (out.empty() ? "" : " ") + k + "=" + v;
  return out;
}

std::string render_stack(const std::vector<std::string>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + s[i];
  return out + "]";
}

std::map<std::string, std::string> writes_of(const Step& st) {
  std::map<std::string, std::string> out;
  for (const auto& w : st.writes) out[VariableTable::canonical_name(w.var)] = value_to_string(w.value);
  return out;
}

std::vector<std::string> ids_of(const std::vector<StackEntry>& s) {
  std::vector<std::string> out;
  for (const auto& e : s) out.push_back(e.state_id);
  return out;
}

void check(const Script& script, const ScriptEntry& e, const Step& st, bool after,
           std::vector<ScriptFailure>& failures) {
  auto fail = [&](std::string what, std::string expected, std::string actual) {
    failures.push_back({e.label, e.line, std::move(what), std::move(expected), std::move(actual)});
  };
  if (e.expect.says && *e.expect.says != st.text) fail("says", quote(*e.expect.says), quote(st.text));
  if (e.expect.learned) {
    const auto actual = writes_of(st);
    if (actual != *e.expect.learned) fail("learned", render_map(*e.expect.learned), render_map(actual));
  }
  if (e.expect.stack) {
    std::vector<std::string> expected;
    for (const auto& id : *e.expect.stack) {
      auto it = script.aliases.find(id);
      expected.push_back(it == script.aliases.end() ? id : it->second);
    }
    const auto actual = ids_of(after ? st.stack_after : st.stack_before);
    if (actual != expected) fail("stack", render_stack(expected), render_stack(actual));
  }
}

// Checks the system entries [first, last) against the turn's segments.
void check_segments(const Script& script, size_t first, size_t last, const TurnObservation& obs,
                    const std::string& turn_label, std::vector<ScriptFailure>& failures) {
  std::vector<const Step*> segs;
  for (const auto& st : obs.steps) {
    if (st.kind != Step::Kind::kUser) segs.push_back(&st);
  }
  const size_t expected = last - first;
  if (segs.size() != expected) {
    const ScriptEntry& anchor = script.entries[first < last ? first : (first ? first - 1 : 0)];
    std::string actual;
    for (const auto* s : segs) actual += (actual.empty() ? "" : " | ") + s->text;
    failures.push_back({turn_label.empty() ? anchor.label : turn_label, anchor.line, "segment count",
                        std::to_string(expected), std::to_string(segs.size()) + ": " + actual});
  }
  for (size_t i = 0; i < expected && i < segs.size(); ++i) {
    check(script, script.entries[first + i], *segs[i], false, failures);
  }
}

}  // namespace

size_t Script::user_count() const {
  size_t n = 0;
  for (const auto& e : entries) n += e.kind == ScriptEntry::Kind::kUser;
  return n;
}

std::vector<std::string> Script::utterances() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.kind == ScriptEntry::Kind::kUser) out.push_back(e.text);
  }
  return out;
}

Script parse_script(std::string_view text, std::string file) {
  Script script;
  script.file = file;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    Cursor cur{line, file + ":" + std::to_string(line_no)};
    const bool indented = raw.front() == ' ' || raw.front() == '\t';
    const std::string head = cur.word();
    if (!indented) {
      if (head == "alias") {
        const std::string from = cur.word();
        const std::string to = cur.word();
        if (from.empty() || to.empty() || !cur.done()) throw ScriptError(cur.where + ": alias needs two names");
        script.aliases[from] = to;
        continue;
      }
      ScriptEntry e;
      e.line = line_no;
      if (head == "system") {
        e.kind = ScriptEntry::Kind::kSystem;
      } else if (head == "user") {
        e.kind = ScriptEntry::Kind::kUser;
      } else {
        throw ScriptError(cur.where + ": unknown entry '" + head + "'");
      }
      e.label = cur.word();
      if (e.label.empty()) throw ScriptError(cur.where + ": missing label");
      if (e.kind == ScriptEntry::Kind::kUser) e.text = cur.quoted();
      if (!cur.done()) throw ScriptError(cur.where + ": trailing text");
      script.entries.push_back(std::move(e));
      continue;
    }
    if (script.entries.empty()) throw ScriptError(cur.where + ": assertion before any entry");
    ScriptExpect& x = script.entries.back().expect;
    if (head == "says") {
      x.says = cur.quoted();
    } else if (head == "learned") {
      std::map<std::string, std::string> m;
      if (trim(cur.rest) == "none") {
        cur.word();
      } else {
        while (!cur.done()) {
          const std::string kv = cur.word();
          const auto eq = kv.find('=');
          if (eq == std::string::npos || eq == 0) throw ScriptError(cur.where + ": expected var=value, got '" + kv + "'");
          m[VariableTable::canonical_name(kv.substr(0, eq))] =
              value_to_string(parse_value_literal(kv.substr(eq + 1)));
        }
        if (m.empty()) throw ScriptError(cur.where + ": learned needs 'none' or var=value pairs");
      }
      x.learned = std::move(m);
    } else if (head == "stack") {
      std::string body(trim(cur.rest));
      if (body.size() < 2 || body.front() != '[' || body.back() != ']') {
        throw ScriptError(cur.where + ": stack must be written [a, b]");
      }
      std::vector<std::string> ids;
      std::string item;
      std::istringstream items(body.substr(1, body.size() - 2));
      while (std::getline(items, item, ',')) {
        const auto t = trim(item);
        if (!t.empty()) ids.emplace_back(t);
      }
      x.stack = std::move(ids);
      cur.rest = {};
    } else {
      throw ScriptError(cur.where + ": unknown assertion '" + head + "'");
    }
    if (!cur.done()) throw ScriptError(cur.where + ": trailing text");
  }
  return script;
}

Script load_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScriptError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_script(buf.str(), path.filename().string());
}

TurnObservation EngineDriver::open() {
  TurnResult r = engine_.open(session_);
  return {r.response, std::move(r.steps)};
}

TurnObservation EngineDriver::send(const std::string& utterance) {
  TurnResult r = engine_.turn(session_, utterance);
  return {r.response, std::move(r.steps)};
}

std::string ScriptFailure::str() const {
  return label + " (line " + std::to_string(line) + ") " + what + ": expected " + expected + ", got " + actual;
}

std::string ScriptRun::transcript_text() const {
  std::string out;
  for (const auto& l : transcript) out += l + "\n";
  return out;
}

ScriptRun run_script(const Script& script, ScriptDriver& driver, size_t resume_after) {
  ScriptRun run;
  const auto& es = script.entries;
  size_t i = 0;
  auto system_run_end = [&](size_t from) {
    while (from < es.size() && es[from].kind == ScriptEntry::Kind::kSystem) ++from;
    return from;
  };

  const size_t opening_end = system_run_end(0);
  if (resume_after == 0) {
    TurnObservation obs = driver.open();
    run.transcript.push_back("E: " + obs.response);
    check_segments(script, 0, opening_end, obs, "opening", run.failures);
  }
  i = opening_end;

  size_t users_seen = 0;
  while (i < es.size()) {
    const ScriptEntry& u = es[i];
    const size_t seg_begin = i + 1;
    const size_t seg_end = system_run_end(seg_begin);
    ++users_seen;
    if (users_seen > resume_after) {
      TurnObservation obs = driver.send(u.text);
      run.transcript.push_back("U: " + u.text);
      run.transcript.push_back("E: " + obs.response);
      const Step* user_step = nullptr;
      for (const auto& st : obs.steps) {
        if (st.kind == Step::Kind::kUser) {
          user_step = &st;
          break;
        }
      }
      if (user_step) {
        check(script, u, *user_step, true, run.failures);
      } else if (u.expect.learned || u.expect.stack) {
        run.failures.push_back({u.label, u.line, "match", "a user transition", "no match"});
      }
      check_segments(script, seg_begin, seg_end, obs, "", run.failures);
    }
    i = seg_end;
  }
  return run;
}

}  // namespace emorette
