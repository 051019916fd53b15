#include "emorette/nlp/entity_index.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

namespace emorette {

namespace {

void load_lines(std::istream& in, EntityIndex& idx, const std::string& where) {
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw EntityIndexError(where + ":" + std::to_string(line_no) +
                             ": expected phrase<TAB>entity_id<TAB>entity_type");
    }
    std::string_view view(line);
    idx.add(view.substr(0, t1), std::string(view.substr(t1 + 1, t2 - t1 - 1)),
            std::string(view.substr(t2 + 1)));
  }
}

}  // namespace

EntityIndex EntityIndex::parse(std::string_view text, std::string source) {
  EntityIndex idx;
  idx.source_ = std::move(source);
  std::istringstream in{std::string(text)};
  load_lines(in, idx, idx.source_);
  return idx;
}

EntityIndex EntityIndex::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw EntityIndexError("cannot open entity index '" + path + "'");
  const auto bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  EntityIndex idx;
  idx.source_ = path;
  // Rough guess of ~32 bytes per line keeps rehashing off the load path.
  idx.map_.reserve(bytes / 32 + 16);
  load_lines(in, idx, path);
  return idx;
}

void EntityIndex::add(std::string_view phrase, std::string entity_id, std::string entity_type) {
  std::string key = normalize_phrase(phrase);
  if (key.empty()) return;
  map_.try_emplace(std::move(key), EntityRecord{std::move(entity_id), std::move(entity_type)});
}

const EntityRecord* EntityIndex::find(const std::string& normalized_phrase) const {
  auto it = map_.find(normalized_phrase);
  return it == map_.end() ? nullptr : &it->second;
}

std::vector<EntityMention> link_entities(const EntityIndex& idx, const TokenizedUtterance& u) {
  struct Candidate {
    size_t start, end;
    const EntityRecord* rec;
  };
  const size_t n = u.size();
  std::vector<Candidate> candidates;
  for (size_t s = 0; s < n; ++s) {
    std::string phrase;
    for (size_t e = s + 1; e <= n && e - s <= idx.max_ngram(); ++e) {
      if (e > s + 1) phrase.push_back(' ');
      phrase += u.tokens[e - 1];
      if (const auto* rec = idx.find(phrase)) candidates.push_back({s, e, rec});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    const size_t la = a.end - a.start, lb = b.end - b.start;
    return la != lb ? la > lb : a.start < b.start;
  });

  std::vector<bool> taken(n, false);
  std::vector<EntityMention> out;
  for (const auto& c : candidates) {
    if (std::any_of(taken.begin() + c.start, taken.begin() + c.end, [](bool t) { return t; })) {
      continue;
    }
    std::fill(taken.begin() + c.start, taken.begin() + c.end, true);
    out.push_back({u.span_text(c.start, c.end), c.start, c.end, c.rec->entity_id,
                   c.rec->entity_type});
  }
  std::sort(out.begin(), out.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.start < b.start; });
  return out;
}

}  // namespace emorette
