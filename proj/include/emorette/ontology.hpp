#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emorette {

class OntologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Concept DAG with lexical terminals. Multiple parents are allowed; cycles
// are rejected at load. The reflexive-transitive closure of every node is
// computed once at load, so descendants() is a table lookup.
//
// Text format, one declaration per line, '#' starts a comment:
//   node <id>
//   edge <parent> <child>
//   term <node> <phrase...>
// Declarations may appear in any order.
class Ontology {
 public:
  Ontology() = default;

  static Ontology parse(std::string_view text);
  static Ontology load_file(const std::string& path);

  bool has_node(std::string_view id) const;
  size_t node_count() const { return nodes_.size(); }
  size_t edge_count() const;

  const std::set<std::string>& nodes() const { return nodes_; }
  const std::set<std::string>& children(const std::string& id) const;
  // Normalized terminal phrases per node.
  const std::map<std::string, std::set<std::string>>& terminals() const {
    return terminals_;
  }

  // Reflexive-transitive closure over child edges. Throws OntologyError for
  // an unknown node.
  const std::set<std::string>& descendants(const std::string& id) const;

  // Nodes with a terminal equal to the token sequence.
  std::set<std::string> nodes_for_phrase(const std::vector<std::string>& tokens) const;
  std::set<std::string> nodes_for_phrase(std::string_view normalized_phrase) const;

  // Token length of the longest terminal; bounds span searches.
  size_t max_terminal_tokens() const { return max_terminal_tokens_; }

 private:
  void add_node(const std::string& id, size_t line);
  void finalize();

  std::set<std::string> nodes_;
  std::map<std::string, std::set<std::string>> children_;
  std::map<std::string, std::set<std::string>> terminals_;
  std::unordered_map<std::string, std::set<std::string>> phrase_index_;
  std::map<std::string, std::set<std::string>> closure_;
  size_t max_terminal_tokens_ = 0;
};

}  // namespace emorette
