#include "emorette/pattern.hpp"

#include <cctype>
#include <unordered_map>

namespace emorette {

PatternExpr PatternExpr::word(std::string token) {
  return {Kind::kWord, std::move(token), {}};
}
PatternExpr PatternExpr::wildcard() { return {Kind::kWildcard, "", {}}; }
PatternExpr PatternExpr::seq(std::vector<PatternExpr> items) {
  return {Kind::kSeq, "", std::move(items)};
}
PatternExpr PatternExpr::any_of(std::vector<PatternExpr> alternatives) {
  return {Kind::kAnyOf, "", std::move(alternatives)};
}
PatternExpr PatternExpr::ont_ref(std::string node) {
  return {Kind::kOntRef, std::move(node), {}};
}
PatternExpr PatternExpr::capture(std::string var, PatternExpr sub) {
  return {Kind::kCapture, std::move(var), {std::move(sub)}};
}

PatternSyntaxError::PatternSyntaxError(const std::string& msg, size_t offset)
    : std::runtime_error("pattern syntax error at offset " + std::to_string(offset) +
                         ": " + msg),
      offset_(offset) {}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kSpecial = "{},$#=()_\\";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_special(char c) { return kSpecial.find(c) != std::string_view::npos; }

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  PatternExpr parse() {
    skip_space();
    if (at_end()) fail("empty pattern");
    PatternExpr e = expr();
    skip_space();
    if (!at_end()) {
      if (peek() == '}') fail("unexpected '}'");
      if (peek() == ',') fail("',' outside of braces");
      fail("unexpected character");
    }
    return e;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  [[noreturn]] void fail(const std::string& msg) const { throw PatternSyntaxError(msg, pos_); }

  void skip_space() {
    while (!at_end() && is_space(peek())) ++pos_;
  }

  bool at_term_end() const {
    return at_end() || is_space(peek()) || peek() == ',' || peek() == '}';
  }

  PatternExpr expr() {
    std::vector<PatternExpr> items;
    while (true) {
      skip_space();
      if (at_end() || peek() == ',' || peek() == '}') break;
      items.push_back(term());
      if (!at_term_end()) fail("expected whitespace between elements");
    }
    if (items.empty()) fail("expected a pattern element");
    if (items.size() == 1) return std::move(items.front());
    return PatternExpr::seq(std::move(items));
  }

  PatternExpr term() {
    const char c = peek();
    if (c == '{') return braces();
    if (c == '_') {
      ++pos_;
      return PatternExpr::wildcard();
    }
    if (c == '#') return ont_ref();
    if (c == '$') return capture();
    if (c == '}' || c == ',' || c == '=' || c == '(' || c == ')') {
      fail(std::string("unexpected '") + c + "'");
    }
    return word();
  }

  PatternExpr braces() {
    const size_t open = pos_;
    ++pos_;
    std::vector<PatternExpr> alts;
    while (true) {
      alts.push_back(expr());
      skip_space();
      if (at_end()) {
        throw PatternSyntaxError("unclosed '{' opened at offset " + std::to_string(open),
                                 pos_);
      }
      if (peek() == '}') {
        ++pos_;
        break;
      }
      ++pos_;  // ','
    }
    return PatternExpr::any_of(std::move(alts));
  }

  PatternExpr ont_ref() {
    static constexpr std::string_view kPrefix = "#ONT(";
    if (text_.substr(pos_, kPrefix.size()) != kPrefix) fail("expected '#ONT('");
    pos_ += kPrefix.size();
    const size_t start = pos_;
    while (!at_end() && peek() != ')' && !is_space(peek()) && peek() != '(' &&
           peek() != ',' && peek() != '}' && peek() != '{') {
      ++pos_;
    }
    if (pos_ == start) fail("expected ontology node id");
    std::string node(text_.substr(start, pos_ - start));
    if (at_end() || peek() != ')') fail("expected ')'");
    ++pos_;
    return PatternExpr::ont_ref(std::move(node));
  }

  PatternExpr capture() {
    ++pos_;  // '$'
    const size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) {
      ++pos_;
    }
    std::string var(text_.substr(start, pos_ - start));
    if (!is_identifier(var)) {
      pos_ = start;
      fail("expected variable name after '$'");
    }
    if (at_end() || peek() != '=') fail("expected '=' after $" + var);
    ++pos_;
    if (at_end() || at_term_end()) fail("expected element after '='");
    return PatternExpr::capture(std::move(var), term());
  }

  PatternExpr word() {
    std::string out;
    while (!at_end() && !is_space(peek())) {
      char c = peek();
      if (c == '\\') {
        if (pos_ + 1 >= text_.size()) fail("dangling escape");
        char next = text_[pos_ + 1];
        if (!is_special(next)) fail(std::string("unknown escape '\\") + next + "'");
        out.push_back(next);
        pos_ += 2;
        continue;
      }
      if (is_special(c)) break;
      out.push_back(static_cast<char>(
          static_cast<unsigned char>(c) < 0x80 ? std::tolower(static_cast<unsigned char>(c)) : c));
      ++pos_;
    }
    if (out.empty()) fail("expected a word");
    return PatternExpr::word(std::move(out));
  }

  std::string_view text_;
  size_t pos_ = 0;
};

void print_into(const PatternExpr& p, std::string& out) {
  using K = PatternExpr::Kind;
  switch (p.kind) {
    case K::kWord:
      for (char c : p.text) {
        if (is_special(c) || is_space(c)) out.push_back('\\');
        out.push_back(c);
      }
      break;
    case K::kWildcard:
      out.push_back('_');
      break;
    case K::kSeq:
      for (size_t i = 0; i < p.children.size(); ++i) {
        if (i) out.push_back(' ');
        print_into(p.children[i], out);
      }
      break;
    case K::kAnyOf:
      out.push_back('{');
      for (size_t i = 0; i < p.children.size(); ++i) {
        if (i) out += ", ";
        print_into(p.children[i], out);
      }
      out.push_back('}');
      break;
    case K::kOntRef:
      out += "#ONT(" + p.text + ")";
      break;
    case K::kCapture:
      out += "$" + p.text + "=";
      print_into(p.children.front(), out);
      break;
  }
}

void collect(const PatternExpr& p, PatternExpr::Kind kind, std::set<std::string>& out) {
  if (p.kind == kind) out.insert(p.text);
  for (const auto& c : p.children) collect(c, kind, out);
}

}  // namespace

PatternExpr parse_pattern(std::string_view text) { return Parser(text).parse(); }

std::string print_pattern(const PatternExpr& p) {
  std::string out;
  print_into(p, out);
  return out;
}

std::set<std::string> ontology_refs(const PatternExpr& p) {
  std::set<std::string> out;
  collect(p, PatternExpr::Kind::kOntRef, out);
  return out;
}

std::set<std::string> capture_names(const PatternExpr& p) {
  std::set<std::string> out;
  collect(p, PatternExpr::Kind::kCapture, out);
  return out;
}

void check_ontology_refs(const PatternExpr& p, const Ontology& ont) {
  for (const auto& node : ontology_refs(p)) {
    if (!ont.has_node(node)) {
      throw PatternConfigError("pattern references unknown ontology node '" + node + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Matcher
//
// exact(x, s, e) decides whether x derives exactly tokens [s, e) and caches
// the preferred choice. Each sub-expression has a prefix-free set of
// derivation signatures, so combining the preferred choice of independent
// parts yields the overall preferred derivation.
// ---------------------------------------------------------------------------

namespace {

class Matcher {
 public:
  Matcher(const PatternExpr& root, const TokenizedUtterance& u, const Ontology& ont)
      : u_(u), ont_(ont), n_(u.size()) {
    index(root);
    exact_memo_.assign(nodes_.size() * (n_ + 1) * (n_ + 1), kUnknown);
  }

  std::optional<PatternMatch> run() {
    for (size_t s = 0; s < n_; ++s) {
      for (size_t e = s + 1; e <= n_; ++e) {
        if (exact(0, s, e)) {
          PatternMatch m{s, e, {}};
          bind(0, s, e, m.bindings);
          return m;
        }
      }
    }
    return std::nullopt;
  }

 private:
  static constexpr int kUnknown = -2;
  static constexpr int kFail = -1;

  struct Node {
    const PatternExpr* expr;
    std::vector<size_t> kids;
  };

  size_t index(const PatternExpr& p) {
    const size_t id = nodes_.size();
    nodes_.push_back({&p, {}});
    for (const auto& c : p.children) {
      size_t kid = index(c);
      nodes_[id].kids.push_back(kid);
    }
    return id;
  }

  int& memo(size_t node, size_t s, size_t e) {
    return exact_memo_[(node * (n_ + 1) + s) * (n_ + 1) + e];
  }

  // Smallest node in the intersection of the span's terminal nodes and the
  // referenced node's descendants.
  std::optional<std::string> ont_node(const std::string& ref, size_t s, size_t e) const {
    if (e - s > ont_.max_terminal_tokens()) return std::nullopt;
    const auto& below = ont_.descendants(ref);
    for (const auto& n : ont_.nodes_for_phrase(u_.span_text(s, e))) {
      if (below.count(n)) return n;
    }
    return std::nullopt;
  }

  bool exact(size_t node, size_t s, size_t e) {
    int& slot = memo(node, s, e);
    if (slot != kUnknown) return slot != kFail;
    const PatternExpr& p = *nodes_[node].expr;
    const auto& kids = nodes_[node].kids;
    int result = kFail;
    using K = PatternExpr::Kind;
    switch (p.kind) {
      case K::kWord:
        if (e == s + 1 && u_.tokens[s] == p.text) result = 0;
        break;
      case K::kWildcard:
        if (e == s + 1) result = 0;
        break;
      case K::kOntRef:
        if (ont_node(p.text, s, e)) result = 0;
        break;
      case K::kCapture:
        if (exact(kids[0], s, e)) result = 0;
        break;
      case K::kAnyOf:
        for (size_t i = 0; i < kids.size(); ++i) {
          if (exact(kids[i], s, e)) {
            result = static_cast<int>(i);
            break;
          }
        }
        break;
      case K::kSeq:
        if (place(node, 0, s, e)) result = 0;
        break;
    }
    slot = result;
    return result != kFail;
  }

  // Places element i of a sequence, starting at or after lo (exactly at lo
  // for i == 0), such that the remaining elements end exactly at e. Returns
  // the chosen span of element i.
  std::optional<std::pair<size_t, size_t>> place(size_t seq, size_t i, size_t lo, size_t e) {
    const auto& kids = nodes_[seq].kids;
    const size_t key = ((seq * (kids.size() + 1) + i) * (n_ + 1) + lo) * (n_ + 1) + e;
    if (auto it = place_memo_.find(key); it != place_memo_.end()) return it->second;

    std::optional<std::pair<size_t, size_t>> found;
    const bool last = i + 1 == kids.size();
    const size_t remaining = kids.size() - i - 1;  // each needs >= 1 token
    const size_t s_hi = (i == 0) ? lo : (e > remaining ? e - remaining - 1 : 0);
    for (size_t si = lo; si <= s_hi && si < e && !found; ++si) {
      for (size_t ei = si + 1; ei + remaining <= e && !found; ++ei) {
        if (last && ei != e) continue;
        if (!exact(kids[i], si, ei)) continue;
        if (last || place(seq, i + 1, ei, e)) found = std::make_pair(si, ei);
      }
    }
    place_memo_.emplace(key, found);
    return found;
  }

  void bind(size_t node, size_t s, size_t e, Bindings& out) {
    const PatternExpr& p = *nodes_[node].expr;
    const auto& kids = nodes_[node].kids;
    using K = PatternExpr::Kind;
    switch (p.kind) {
      case K::kCapture: {
        Binding b{u_.span_text(s, e), s, e, std::nullopt};
        if (p.children[0].kind == K::kOntRef) b.node = ont_node(p.children[0].text, s, e);
        out[p.text] = std::move(b);
        bind(kids[0], s, e, out);
        break;
      }
      case K::kAnyOf:
        bind(kids[static_cast<size_t>(memo(node, s, e))], s, e, out);
        break;
      case K::kSeq: {
        size_t lo = s;
        for (size_t i = 0; i < kids.size(); ++i) {
          auto span = place(node, i, lo, e);
          bind(kids[i], span->first, span->second, out);
          lo = span->second;
        }
        break;
      }
      default:
        break;
    }
  }

  const TokenizedUtterance& u_;
  const Ontology& ont_;
  size_t n_;
  std::vector<Node> nodes_;
  std::vector<int> exact_memo_;
  std::unordered_map<size_t, std::optional<std::pair<size_t, size_t>>> place_memo_;
};

}  // namespace

std::optional<PatternMatch> match_pattern(const PatternExpr& p, const TokenizedUtterance& u,
                                          const Ontology& ont) {
  check_ontology_refs(p, ont);
  if (u.empty()) return std::nullopt;
  return Matcher(p, u, ont).run();
}

}  // namespace emorette
