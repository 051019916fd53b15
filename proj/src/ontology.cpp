#include "emorette/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "emorette/core.hpp"

namespace emorette {

namespace {

const std::set<std::string> kEmpty;

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string at_line(size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

void Ontology::add_node(const std::string& id, size_t line) {
  if (!nodes_.insert(id).second) {
    throw OntologyError(at_line(line) + "duplicate node '" + id + "'");
  }
}

Ontology Ontology::parse(std::string_view text) {
  Ontology ont;
  struct Edge { std::string parent, child; size_t line; };
  struct Term { std::string node, phrase; size_t line; };
  std::vector<Edge> edges;
  std::vector<Term> terms;

  std::istringstream in{std::string(text)};
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream fields(raw);
    std::string keyword;
    if (!(fields >> keyword)) continue;
    if (keyword == "node") {
      std::string id, extra;
      if (!(fields >> id) || (fields >> extra)) {
        throw OntologyError(at_line(line_no) + "expected 'node <id>'");
      }
      ont.add_node(id, line_no);
    } else if (keyword == "edge") {
      Edge e{"", "", line_no};
      std::string extra;
      if (!(fields >> e.parent >> e.child) || (fields >> extra)) {
        throw OntologyError(at_line(line_no) + "expected 'edge <parent> <child>'");
      }
      edges.push_back(std::move(e));
    } else if (keyword == "term") {
      Term t{"", "", line_no};
      if (!(fields >> t.node)) {
        throw OntologyError(at_line(line_no) + "expected 'term <node> <phrase>'");
      }
      std::string rest;
      std::getline(fields, rest);
      t.phrase = normalize_phrase(trim(rest));
      if (t.phrase.empty()) {
        throw OntologyError(at_line(line_no) + "empty terminal for node '" + t.node + "'");
      }
      terms.push_back(std::move(t));
    } else {
      throw OntologyError(at_line(line_no) + "unknown declaration '" + keyword + "'");
    }
  }

  for (const auto& e : edges) {
    for (const auto* end : {&e.parent, &e.child}) {
      if (!ont.nodes_.count(*end)) {
        throw OntologyError(at_line(e.line) + "edge " + e.parent + " -> " + e.child +
                            " references unknown node '" + *end + "'");
      }
    }
    ont.children_[e.parent].insert(e.child);
  }
  for (const auto& t : terms) {
    if (!ont.nodes_.count(t.node)) {
      throw OntologyError(at_line(t.line) + "term references unknown node '" + t.node + "'");
    }
    ont.terminals_[t.node].insert(t.phrase);
  }
  ont.finalize();
  return ont;
}

Ontology Ontology::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw OntologyError("cannot open ontology file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const OntologyError& e) {
    throw OntologyError(path + ": " + e.what());
  }
}

void Ontology::finalize() {
  // Cycle check by three-color DFS; the reported cycle lists its node ids.
  enum Color { kWhite, kGray, kBlack };
  std::map<std::string, Color> color;
  std::vector<std::string> path;
  std::function<void(const std::string&)> visit = [&](const std::string& n) {
    color[n] = kGray;
    path.push_back(n);
    for (const auto& c : children(n)) {
      if (color[c] == kGray) {
        auto from = std::find(path.begin(), path.end(), c);
        std::string cycle;
        for (auto it = from; it != path.end(); ++it) cycle += *it + " -> ";
        throw OntologyError("cycle detected: " + cycle + c);
      }
      if (color[c] == kWhite) visit(c);
    }
    path.pop_back();
    color[n] = kBlack;
  };
  for (const auto& n : nodes_) {
    if (color[n] == kWhite) visit(n);
  }

  std::function<const std::set<std::string>&(const std::string&)> close =
      [&](const std::string& n) -> const std::set<std::string>& {
    if (auto it = closure_.find(n); it != closure_.end()) return it->second;
    std::set<std::string> acc{n};
    for (const auto& c : children(n)) {
      const auto& sub = close(c);
      acc.insert(sub.begin(), sub.end());
    }
    return closure_.emplace(n, std::move(acc)).first->second;
  };
  for (const auto& n : nodes_) close(n);

  phrase_index_.clear();
  max_terminal_tokens_ = 0;
  for (const auto& [node, phrases] : terminals_) {
    for (const auto& p : phrases) {
      phrase_index_[p].insert(node);
      size_t tokens = 1 + static_cast<size_t>(std::count(p.begin(), p.end(), ' '));
      max_terminal_tokens_ = std::max(max_terminal_tokens_, tokens);
    }
  }
}

bool Ontology::has_node(std::string_view id) const {
  return nodes_.count(std::string(id)) > 0;
}

size_t Ontology::edge_count() const {
  size_t n = 0;
  for (const auto& [parent, kids] : children_) n += kids.size();
  return n;
}

const std::set<std::string>& Ontology::children(const std::string& id) const {
  auto it = children_.find(id);
  return it == children_.end() ? kEmpty : it->second;
}

const std::set<std::string>& Ontology::descendants(const std::string& id) const {
  auto it = closure_.find(id);
  if (it == closure_.end()) throw OntologyError("unknown ontology node '" + id + "'");
  return it->second;
}

std::set<std::string> Ontology::nodes_for_phrase(const std::vector<std::string>& tokens) const {
  return nodes_for_phrase(join_tokens(tokens, 0, tokens.size()));
}

std::set<std::string> Ontology::nodes_for_phrase(std::string_view normalized_phrase) const {
  auto it = phrase_index_.find(std::string(normalized_phrase));
  return it == phrase_index_.end() ? std::set<std::string>{} : it->second;
}

}  // namespace emorette
