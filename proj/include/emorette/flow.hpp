#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emorette/core.hpp"
#include "emorette/engine.hpp"
#include "emorette/ontology.hpp"

namespace emorette {

struct Diagnostic {
  enum class Severity { kError, kWarning };
  Severity severity = Severity::kError;
  std::string code;      // e.g. "unknown-state", "unguarded-slot"
  std::string file;
  std::string location;  // "state 'x'", "transition 'y'", "line 12"
  std::string message;

  bool is_error() const { return severity == Severity::kError; }
  // "error[code] file: location: message"
  std::string str() const;
};

class FlowError : public std::runtime_error {
 public:
  explicit FlowError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

// Authorable form of one flow file. Defaults are filled in at parse time,
// so a parsed document is already normalized.
struct FlowStateDecl {
  std::string id;
  StateKind kind = StateKind::kUser;
  bool complete = false;
  bool operator==(const FlowStateDecl&) const = default;
};

struct FlowTransitionDecl {
  std::string id;
  std::string from;
  std::string to;
  std::string nlu;
  std::string tmpl;
  std::vector<std::string> guards;
  std::vector<std::pair<std::string, Value>> sets;
  StackOp::Kind stack = StackOp::Kind::kNone;
  std::string push_state;
  int life = kDefaultStackLife;
  int priority = 0;
  double weight = 1.0;
  bool chain = false;
  bool operator==(const FlowTransitionDecl&) const = default;
};

struct FlowDocument {
  std::string file;  // not serialized
  std::string name;
  std::string component;
  std::string version = "1";
  std::string initial;
  bool main = false;
  std::vector<std::string> persistent;
  std::vector<FlowStateDecl> states;
  std::vector<FlowTransitionDecl> transitions;
  std::vector<std::string> globals;
  std::vector<std::pair<std::string, std::vector<std::string>>> fallbacks;

  bool operator==(const FlowDocument& o) const {
    return name == o.name && component == o.component && version == o.version &&
           initial == o.initial && main == o.main && persistent == o.persistent &&
           states == o.states && transitions == o.transitions && globals == o.globals &&
           fallbacks == o.fallbacks;
  }
};

// Throws FlowError (code parse-error or schema-error, with line numbers for
// JSON syntax errors).
FlowDocument parse_flow_document(std::string_view json_text, const std::string& file = "<flow>");
std::string serialize_flow_document(const FlowDocument& doc);

struct FlowSource {
  std::string file;
  std::string text;
};

// Merges the files into one finalized graph. Every problem across all files
// is collected before FlowError is thrown. The initial state comes from the
// file marked "main", else the first file declaring "initial".
std::shared_ptr<DialogueGraph> load_flows(const std::vector<FlowSource>& sources,
                                          std::shared_ptr<const Ontology> ontology);
std::shared_ptr<DialogueGraph> load_flow_documents(const std::vector<FlowDocument>& docs,
                                                   std::shared_ptr<const Ontology> ontology);

// Static checks on a loaded graph.
std::vector<Diagnostic> lint_flow(const DialogueGraph& g);

// Load diagnostics when loading fails, lint diagnostics otherwise.
std::vector<Diagnostic> lint_sources(const std::vector<FlowSource>& sources,
                                     std::shared_ptr<const Ontology> ontology);

size_t error_count(const std::vector<Diagnostic>& diags);

}  // namespace emorette
