#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance run. Each one is the slow, obvious version of a library
// routine: enumerate everything, then apply the stated rule.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "emorette/core.hpp"
#include "emorette/ontology.hpp"
#include "emorette/pattern.hpp"

namespace oracle {

using namespace emorette;

// ---------------------------------------------------------------------------
// Ontology closure by DFS over the child lists.
// ---------------------------------------------------------------------------

inline bool reaches(const Ontology& ont, const std::string& from, const std::string& to) {
  std::set<std::string> seen;
  std::vector<std::string> todo{from};
  while (!todo.empty()) {
    std::string n = todo.back();
    todo.pop_back();
    if (n == to) return true;
    if (!seen.insert(n).second) continue;
    for (const auto& c : ont.children(n)) todo.push_back(c);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Pattern matching by exhaustive derivation enumeration.
//
// A derivation of an expression over an exact span records every choice in
// preorder: the alternative index of each AnyOf and the (start, end) of each
// sequence element. The winning match is the smallest (start, end,
// signature) over all derivations of all spans.
// ---------------------------------------------------------------------------

struct Derivation {
  std::vector<size_t> signature;
  // Captures in preorder: (name, start, end, ontology node or "").
  std::vector<std::tuple<std::string, size_t, size_t, std::string>> captures;
};

inline std::string ont_match(const Ontology& ont, const TokenizedUtterance& u, const std::string& ref,
                             size_t s, size_t e) {
  // Smallest terminal node under ref, by path search rather than the table.
  const auto nodes = ont.nodes_for_phrase(std::vector<std::string>(u.tokens.begin() + s, u.tokens.begin() + e));
  for (const auto& n : nodes) {
    if (reaches(ont, ref, n)) return n;
  }
  return {};
}

inline std::vector<Derivation> derive(const PatternExpr& p, const TokenizedUtterance& u, const Ontology& ont,
                                      size_t s, size_t e) {
  using K = PatternExpr::Kind;
  std::vector<Derivation> out;
  switch (p.kind) {
    case K::kWord:
      if (e == s + 1 && u.tokens[s] == p.text) out.push_back({});
      break;
    case K::kWildcard:
      if (e == s + 1) out.push_back({});
      break;
    case K::kOntRef:
      if (!ont_match(ont, u, p.text, s, e).empty()) out.push_back({});
      break;
    case K::kCapture:
      for (auto d : derive(p.children[0], u, ont, s, e)) {
        std::string node;
        if (p.children[0].kind == K::kOntRef) node = ont_match(ont, u, p.children[0].text, s, e);
        d.captures.insert(d.captures.begin(), {p.text, s, e, node});
        out.push_back(std::move(d));
      }
      break;
    case K::kAnyOf:
      for (size_t i = 0; i < p.children.size(); ++i) {
        for (auto d : derive(p.children[i], u, ont, s, e)) {
          d.signature.insert(d.signature.begin(), i);
          out.push_back(std::move(d));
        }
      }
      break;
    case K::kSeq: {
      // Every way to place the elements in order inside [s, e), the first
      // starting at s and the last ending at e.
      std::function<void(size_t, size_t, Derivation)> rec = [&](size_t i, size_t lo, Derivation acc) {
        if (i == p.children.size()) {
          if (lo == e) out.push_back(std::move(acc));
          return;
        }
        for (size_t si = (i == 0 ? s : lo); si < e && (i > 0 || si == s); ++si) {
          for (size_t ei = si + 1; ei <= e; ++ei) {
            for (const auto& d : derive(p.children[i], u, ont, si, ei)) {
              Derivation next = acc;
              next.signature.push_back(si);
              next.signature.push_back(ei);
              next.signature.insert(next.signature.end(), d.signature.begin(), d.signature.end());
              next.captures.insert(next.captures.end(), d.captures.begin(), d.captures.end());
              rec(i + 1, ei, std::move(next));
            }
          }
        }
      };
      rec(0, s, {});
      break;
    }
  }
  return out;
}

struct OracleMatch {
  size_t start = 0;
  size_t end = 0;
  Bindings bindings;
};

inline std::optional<OracleMatch> brute_match(const PatternExpr& p, const TokenizedUtterance& u,
                                              const Ontology& ont) {
  std::optional<std::tuple<size_t, size_t, Derivation>> best;
  for (size_t s = 0; s < u.size(); ++s) {
    for (size_t e = s + 1; e <= u.size(); ++e) {
      for (auto& d : derive(p, u, ont, s, e)) {
        if (!best || std::tie(s, e, d.signature) <
                         std::tie(std::get<0>(*best), std::get<1>(*best), std::get<2>(*best).signature)) {
          best = std::make_tuple(s, e, std::move(d));
        }
      }
    }
  }
  if (!best) return std::nullopt;
  OracleMatch m{std::get<0>(*best), std::get<1>(*best), {}};
  for (const auto& [name, s, e, node] : std::get<2>(*best).captures) {
    Binding b{u.span_text(s, e), s, e, std::nullopt};
    if (!node.empty()) b.node = node;
    m.bindings[name] = b;
  }
  return m;
}

// Random pattern over a small alphabet, depth <= max_depth.
struct PatternGen {
  std::vector<std::string> words;
  std::vector<std::string> nodes;  // ontology refs available
  std::vector<std::string> vars{"A", "B", "C"};

  PatternExpr operator()(std::mt19937_64& rng, int depth) const {
    auto pick = [&](size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng); };
    const int leaf_kinds = nodes.empty() ? 2 : 3;
    const int kinds = depth > 1 ? leaf_kinds + 3 : leaf_kinds;
    const int k = static_cast<int>(pick(static_cast<size_t>(kinds)));
    if (k == 0) return PatternExpr::word(words[pick(words.size())]);
    if (k == 1 && pick(3) == 0) return PatternExpr::wildcard();
    if (k == 1) return PatternExpr::word(words[pick(words.size())]);
    if (k == 2 && !nodes.empty()) return PatternExpr::ont_ref(nodes[pick(nodes.size())]);
    const int composite = k - leaf_kinds;
    if (composite == 0) {
      std::vector<PatternExpr> items;
      const size_t n = 2 + pick(2);
      for (size_t i = 0; i < n; ++i) items.push_back((*this)(rng, depth - 1));
      return PatternExpr::seq(std::move(items));
    }
    if (composite == 1) {
      std::vector<PatternExpr> alts;
      const size_t n = 2 + pick(2);
      for (size_t i = 0; i < n; ++i) alts.push_back((*this)(rng, depth - 1));
      return PatternExpr::any_of(std::move(alts));
    }
    return PatternExpr::capture(vars[pick(vars.size())], (*this)(rng, depth - 1));
  }
};

// ---------------------------------------------------------------------------
// Entity linking: list every indexed n-gram, then accept greedily by
// (longest, leftmost) while rejecting overlaps.
// ---------------------------------------------------------------------------

inline std::vector<EntityMention> brute_link(const std::map<std::string, std::pair<std::string, std::string>>& idx,
                                             const TokenizedUtterance& u, size_t max_n) {
  std::vector<EntityMention> cands;
  for (size_t s = 0; s < u.size(); ++s) {
    for (size_t e = s + 1; e <= u.size() && e - s <= max_n; ++e) {
      const std::string phrase = u.span_text(s, e);
      if (auto it = idx.find(phrase); it != idx.end()) {
        cands.push_back({phrase, s, e, it->second.first, it->second.second});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const EntityMention& a, const EntityMention& b) {
    if (a.end - a.start != b.end - b.start) return a.end - a.start > b.end - b.start;
    return a.start < b.start;
  });
  std::vector<EntityMention> taken;
  for (const auto& c : cands) {
    bool clash = false;
    for (const auto& t : taken) clash = clash || (c.start < t.end && t.start < c.end);
    if (!clash) taken.push_back(c);
  }
  std::sort(taken.begin(), taken.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return taken;
}

// ---------------------------------------------------------------------------
// Sentiment rules evaluated token by token, written out directly.
// ---------------------------------------------------------------------------

inline double hand_sentiment(const std::map<std::string, double>& val, const std::set<std::string>& neg,
                             const std::map<std::string, double>& boost, const std::vector<std::string>& toks) {
  double sum = 0;
  for (size_t i = 0; i < toks.size(); ++i) {
    auto it = val.find(toks[i]);
    if (it == val.end()) continue;
    double v = it->second;
    if (i > 0) {
      if (auto b = boost.find(toks[i - 1]); b != boost.end()) v += v > 0 ? b->second : -b->second;
    }
    bool negated = false;
    for (size_t k = 1; k <= 3 && k <= i; ++k) negated = negated || neg.count(toks[i - k]);
    if (negated) v *= -0.74;
    sum += v;
  }
  if (sum == 0) return 0;
  return std::clamp(sum / std::sqrt(sum * sum + 15.0), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Stack with life counters, as a plain list.
// ---------------------------------------------------------------------------

struct RefStack {
  std::vector<std::pair<std::string, int>> items;

  void push(const std::string& s, int life) { items.emplace_back(s, life); }
  void tick() {
    for (auto& it : items) it.second = std::max(0, it.second - 1);
  }
  std::optional<std::string> ret() {
    while (!items.empty()) {
      auto top = items.back();
      items.pop_back();
      if (top.second > 0) return top.first;
    }
    return std::nullopt;
  }
  bool same_as(const std::vector<StackEntry>& s) const {
    if (s.size() != items.size()) return false;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i].state_id != items[i].first || s[i].life != items[i].second) return false;
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Two-sample permutation test on the Welch statistic.
// ---------------------------------------------------------------------------

inline double welch_stat(const std::vector<double>& a, const std::vector<double>& b) {
  auto mv = [](const std::vector<double>& x) {
    double m = 0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::make_pair(m, ss / static_cast<double>(x.size() - 1));
  };
  const auto [ma, va] = mv(a);
  const auto [mb, vb] = mv(b);
  const double se = std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
  if (se == 0) return ma == mb ? 0.0 : std::copysign(INFINITY, ma - mb);
  return (ma - mb) / se;
}

inline double permutation_p(const std::vector<double>& a, const std::vector<double>& b, int resamples,
                            uint64_t seed) {
  const double observed = std::fabs(welch_stat(a, b));
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  std::mt19937_64 rng(seed);
  int extreme = 0;
  for (int r = 0; r < resamples; ++r) {
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<double> pa(pool.begin(), pool.begin() + static_cast<long>(a.size()));
    std::vector<double> pb(pool.begin() + static_cast<long>(a.size()), pool.end());
    if (std::fabs(welch_stat(pa, pb)) >= observed - 1e-12) ++extreme;
  }
  return (extreme + 1.0) / (resamples + 1.0);
}

}  // namespace oracle

namespace oracle {

// Likert arm pairs for the Welch/permutation comparison. Both arms draw
// from nearby 5-point distributions, so p-values spread over (0, 1).
struct ArmPair {
  std::vector<double> a;
  std::vector<double> b;
};

inline std::vector<ArmPair> likert_arm_pairs(int count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(30, 200);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ArmPair> out;
  for (int i = 0; i < count; ++i) {
    std::vector<double> w(5);
    for (auto& x : w) x = 0.2 + unit(rng);
    std::vector<double> wb(w);
    const double shift = 0.6 * unit(rng);
    wb[4] += shift;
    wb[0] = std::max(0.05, wb[0] - shift / 2);
    std::discrete_distribution<int> da(w.begin(), w.end());
    std::discrete_distribution<int> db(wb.begin(), wb.end());
    ArmPair p;
    for (int k = size(rng); k > 0; --k) p.a.push_back(1.0 + da(rng));
    for (int k = size(rng); k > 0; --k) p.b.push_back(1.0 + db(rng));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace oracle

namespace oracle {

// Two-tailed Student-t p-value by Simpson integration of the density.
inline double t_two_tailed(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto f = [&](double s) { return c * std::pow(1 + s * s / df, -(df + 1) / 2); };
  const double x = std::fabs(t);
  const int n = 20000;
  const double h = x / n;
  double sum = f(0) + f(x);
  for (int i = 1; i < n; ++i) sum += f(i * h) * (i % 2 ? 4 : 2);
  return std::clamp(1 - 2 * sum * h / 3, 0.0, 1.0);
}

inline double welch_df(const std::vector<double>& a, const std::vector<double>& b) {
  auto var = [](const std::vector<double>& x) {
    double m = 0, ss = 0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
  };
  const double qa = var(a) / static_cast<double>(a.size());
  const double qb = var(b) / static_cast<double>(b.size());
  return (qa + qb) * (qa + qb) /
         (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
}

}  // namespace oracle
