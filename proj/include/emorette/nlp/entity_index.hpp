#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emorette/core.hpp"

namespace emorette {

class EntityIndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EntityRecord {
  std::string entity_id;
  std::string entity_type;
};

// Exact-match gazetteer over normalized surface forms.
//
// File format: phrase<TAB>entity_id<TAB>entity_type, one per line. Phrases
// are normalized on load; when two lines normalize to the same phrase the
// first one wins.
class EntityIndex {
 public:
  static constexpr size_t kDefaultMaxNgram = 5;

  EntityIndex() = default;

  static EntityIndex parse(std::string_view text, std::string source = "inline");
  static EntityIndex load_file(const std::string& path);

  void add(std::string_view phrase, std::string entity_id, std::string entity_type);
  const EntityRecord* find(const std::string& normalized_phrase) const;

  size_t size() const { return map_.size(); }
  const std::string& source() const { return source_; }
  size_t max_ngram() const { return max_ngram_; }
  void set_max_ngram(size_t n) { max_ngram_ = n; }

 private:
  std::unordered_map<std::string, EntityRecord> map_;
  std::string source_ = "inline";
  size_t max_ngram_ = kDefaultMaxNgram;
};

// Scans every n-gram up to idx.max_ngram(). Overlaps resolve
// longest-first, then leftmost; the result is non-overlapping and sorted by
// start.
std::vector<EntityMention> link_entities(const EntityIndex& idx, const TokenizedUtterance& u);

}  // namespace emorette
