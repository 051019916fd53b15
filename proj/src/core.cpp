#include "emorette/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace emorette {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c >= 0x80;
}

// Replaces U+2019 with an ASCII apostrophe.
std::string fold_apostrophes(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    if (i + 2 < raw.size() && static_cast<unsigned char>(raw[i]) == 0xE2 &&
        static_cast<unsigned char>(raw[i + 1]) == 0x80 &&
        static_cast<unsigned char>(raw[i + 2]) == 0x99) {
      out.push_back('\'');
      i += 2;
    } else {
      out.push_back(raw[i]);
    }
  }
  return out;
}

}  // namespace

std::string TokenizedUtterance::span_text(size_t start, size_t end) const {
  return join_tokens(tokens, start, end);
}

std::string join_tokens(const std::vector<std::string>& tokens, size_t start,
                        size_t end) {
  std::string out;
  end = std::min(end, tokens.size());
  for (size_t i = start; i < end; ++i) {
    if (i > start) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

TokenizedUtterance normalize_utterance(std::string_view raw) {
  TokenizedUtterance out;
  out.original = std::string(raw);
  const std::string text = fold_apostrophes(raw);
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  for (size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
               is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      current.push_back('\'');
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::string normalize_phrase(std::string_view raw) {
  auto u = normalize_utterance(raw);
  return join_tokens(u.tokens, 0, u.tokens.size());
}

// ---------------------------------------------------------------------------

std::string value_to_string(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "True" : "False";
  const double d = std::get<double>(v);
  if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", d);
    return buf;
  }
  // Shortest representation that round-trips.
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, d);
    if (std::strtod(buf, nullptr) == d) break;
  }
  return buf;
}

Value parse_value_literal(std::string_view text) {
  if (text == "True" || text == "true") return true;
  if (text == "False" || text == "false") return false;
  if (!text.empty()) {
    double d = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, d);
    if (ec == std::errc() && ptr == last) return d;
  }
  return std::string(text);
}

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  auto head = static_cast<unsigned char>(name[0]);
  if (!(std::isalpha(head) || head == '_')) return false;
  return std::all_of(name.begin() + 1, name.end(), [](char ch) {
    auto c = static_cast<unsigned char>(ch);
    return std::isalnum(c) || c == '_';
  });
}

std::string VariableTable::canonical_name(std::string_view name) {
  std::string out(name);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void VariableTable::set(std::string_view name, Value value) {
  if (!is_identifier(name)) {
    throw std::invalid_argument("invalid variable name '" + std::string(name) + "'");
  }
  entries_[canonical_name(name)] = std::move(value);
}

const Value* VariableTable::get(std::string_view name) const {
  auto it = entries_.find(canonical_name(name));
  return it == entries_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------

double LabelDistribution::prob(const std::string& label) const {
  auto it = probs_.find(label);
  return it == probs_.end() ? 0.0 : it->second;
}

std::optional<std::string> LabelDistribution::argmax() const {
  std::optional<std::string> best;
  double best_p = -1.0;
  for (const auto& [label, p] : probs_) {
    if (p > best_p) {
      best_p = p;
      best = label;
    }
  }
  return best;
}

LabelDistribution LabelDistribution::normalized(std::map<std::string, double> weights) {
  double total = 0.0;
  for (auto it = weights.begin(); it != weights.end();) {
    if (!(it->second > 0.0)) {
      it = weights.erase(it);
    } else {
      total += it->second;
      ++it;
    }
  }
  if (total <= 0.0) return {};
  for (auto& [label, w] : weights) w /= total;
  return LabelDistribution(std::move(weights));
}

bool LabelDistribution::valid(double tol) const {
  if (probs_.empty()) return true;
  double total = 0.0;
  for (const auto& [label, p] : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    total += p;
  }
  return std::fabs(total - 1.0) <= tol;
}

// ---------------------------------------------------------------------------

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

uint64_t derive_session_seed(uint64_t service_seed, std::string_view session_id) {
  return splitmix64(service_seed ^ fnv1a64(session_id));
}

uint64_t SessionRng::next_u64() {
  const uint64_t k = s_.rng_draws++;
  return splitmix64(splitmix64(s_.rng_seed) + k * 0xD1B54A32D192ED03ULL);
}

double SessionRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

size_t SessionRng::next_index(size_t n) {
  return static_cast<size_t>(next_unit() * static_cast<double>(n)) % n;
}

}  // namespace emorette
