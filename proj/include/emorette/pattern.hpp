#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emorette/core.hpp"
#include "emorette/ontology.hpp"

namespace emorette {

// Pattern grammar:
//   expr := term { WS term }                 in-order sequence, gaps allowed
//   term := WORD | "_" | "{" expr { "," expr } "}" | "#ONT(" NODE ")"
//         | "$" VAR "=" term
// WORD is a literal token (lowercased at parse). The characters {},$#=()_
// and backslash and whitespace must be escaped with a backslash to appear
// in a WORD.
struct PatternExpr {
  enum class Kind { kWord, kWildcard, kSeq, kAnyOf, kOntRef, kCapture };

  Kind kind = Kind::kWord;
  // Word: the token. OntRef: node id. Capture: variable name.
  std::string text;
  std::vector<PatternExpr> children;

  static PatternExpr word(std::string token);
  static PatternExpr wildcard();
  static PatternExpr seq(std::vector<PatternExpr> items);
  static PatternExpr any_of(std::vector<PatternExpr> alternatives);
  static PatternExpr ont_ref(std::string node);
  static PatternExpr capture(std::string var, PatternExpr sub);

  bool operator==(const PatternExpr&) const = default;
};

class PatternSyntaxError : public std::runtime_error {
 public:
  PatternSyntaxError(const std::string& msg, size_t offset);
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

// Raised when a pattern references an ontology node that does not exist.
// Distinct from "no match".
class PatternConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PatternExpr parse_pattern(std::string_view text);

// Canonical text. parse_pattern(print_pattern(p)) == p for any parsed p.
std::string print_pattern(const PatternExpr& p);

std::set<std::string> ontology_refs(const PatternExpr& p);
std::set<std::string> capture_names(const PatternExpr& p);

// Throws PatternConfigError naming the first unknown node.
void check_ontology_refs(const PatternExpr& p, const Ontology& ont);

struct Binding {
  std::string surface;
  size_t start = 0;
  size_t end = 0;
  // Set when the captured sub-expression is an ontology reference.
  std::optional<std::string> node;

  bool operator==(const Binding&) const = default;
};

using Bindings = std::map<std::string, Binding>;

struct PatternMatch {
  size_t start = 0;
  size_t end = 0;
  Bindings bindings;
};

// Substring semantics: the pattern may match anywhere in the utterance. The
// leftmost match wins, then the one ending earliest. Among derivations of
// that span, alternatives are preferred in authored order and sequence
// elements are placed as early and as short as possible. Captures assigned
// later in a left-to-right walk overwrite earlier ones of the same name.
std::optional<PatternMatch> match_pattern(const PatternExpr& p,
                                          const TokenizedUtterance& u,
                                          const Ontology& ont);

}  // namespace emorette
