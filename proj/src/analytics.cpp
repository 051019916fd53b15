#include "emorette/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

namespace emorette {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

std::string record_to_json(const ConversationRecord& r) {
  json j;
  j["conversation_id"] = r.conversation_id;
  j["user_id"] = r.user_id ? json(*r.user_id) : json(nullptr);
  j["rating"] = r.rating ? json(*r.rating) : json(nullptr);
  j["turn_count"] = r.turn_count;
  j["components"] = std::vector<std::string>(r.components.begin(), r.components.end());
  j["variant"] = r.variant ? json(*r.variant) : json(nullptr);
  j["date"] = r.date;
  return j.dump();
}

ConversationRecord record_from_json(std::string_view line) {
  json j;
  try {
    j = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& e) {
    throw LogFormatError(e.what());
  }
  if (!j.is_object()) throw LogFormatError("record must be an object");
  ConversationRecord r;
  try {
    r.conversation_id = j.at("conversation_id").get<std::string>();
    if (auto it = j.find("user_id"); it != j.end() && !it->is_null()) r.user_id = it->get<std::string>();
    if (auto it = j.find("rating"); it != j.end() && !it->is_null()) r.rating = it->get<double>();
    r.turn_count = j.value("turn_count", 0);
    if (auto it = j.find("components"); it != j.end()) {
      for (const auto& c : *it) r.components.insert(c.get<std::string>());
    }
    if (auto it = j.find("variant"); it != j.end() && !it->is_null()) r.variant = it->get<std::string>();
    r.date = j.value("date", std::string());
  } catch (const json::exception& e) {
    throw LogFormatError(e.what());
  }
  if (r.rating && (*r.rating < 1.0 || *r.rating > 5.0)) {
    throw LogFormatError("rating out of range [1,5]");
  }
  if (r.turn_count < 0) throw LogFormatError("negative turn_count");
  if (!r.date.empty()) parse_date(r.date);
  return r;
}

std::vector<ConversationRecord> read_records(std::istream& in) {
  std::vector<ConversationRecord> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const std::exception& e) {
      throw LogFormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::chrono::sys_days parse_date(std::string_view ymd) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  const std::string s(ymd);
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw LogFormatError("bad date '" + s + "', expected YYYY-MM-DD");
  }
  const std::chrono::year_month_day date{std::chrono::year{y}, std::chrono::month{m},
                                         std::chrono::day{d}};
  if (!date.ok()) throw LogFormatError("invalid date '" + s + "'");
  return std::chrono::sys_days{date};
}

std::string format_date(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

std::vector<ConversationRecord> filter_min_turns(const std::vector<ConversationRecord>& records,
                                                 int min_exclusive) {
  std::vector<ConversationRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const ConversationRecord& r) { return r.turn_count > min_exclusive; });
  return out;
}

namespace {

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased sample variance; requires x.size() >= 2.
double sample_variance(const std::vector<double>& x, double mean) {
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

std::optional<RatingSummary> summarize_ratings(const std::vector<double>& ratings) {
  if (ratings.empty()) return std::nullopt;
  RatingSummary s;
  s.n = ratings.size();
  s.mean = mean_of(ratings);
  if (s.n == 1) {
    s.degenerate = true;
    s.ci80_low = s.ci80_high = s.mean;
    return s;
  }
  const double half = kZ80 * std::sqrt(sample_variance(ratings, s.mean)) / std::sqrt(static_cast<double>(s.n));
  s.ci80_low = s.mean - half;
  s.ci80_high = s.mean + half;
  return s;
}

std::optional<RatingSummary> component_rating(const std::vector<ConversationRecord>& records,
                                              const std::string& component) {
  std::vector<double> ratings;
  for (const auto& r : records) {
    if (r.rating && r.components.count(component)) ratings.push_back(*r.rating);
  }
  return summarize_ratings(ratings);
}

AbResult ab_test(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
  AbResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  if (!a.empty()) r.mean_a = mean_of(a);
  if (!b.empty()) r.mean_b = mean_of(b);
  if (a.size() < 2 || b.size() < 2) {
    r.degenerate = true;
    return r;
  }
  const double va = sample_variance(a, r.mean_a) / static_cast<double>(a.size());
  const double vb = sample_variance(b, r.mean_b) / static_cast<double>(b.size());
  if (va + vb <= 0.0) {
    r.degenerate = true;
    return r;
  }
  const double t = (r.mean_a - r.mean_b) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) /
                    (va * va / static_cast<double>(a.size() - 1) +
                     vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(df);
  const double p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  r.t = t;
  r.df = df;
  r.p_value = p;
  r.significant = p < alpha;
  return r;
}

std::vector<double> variant_ratings(const std::vector<ConversationRecord>& records,
                                    const std::string& variant) {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.rating && r.variant == variant) out.push_back(*r.rating);
  }
  return out;
}

std::vector<double> group_ratings(const std::vector<ConversationRecord>& records,
                                  const std::set<std::string>& components) {
  std::vector<double> out;
  for (const auto& r : records) {
    if (!r.rating) continue;
    const bool hit = std::any_of(components.begin(), components.end(),
                                 [&](const std::string& c) { return r.components.count(c) > 0; });
    if (hit) out.push_back(*r.rating);
  }
  return out;
}

std::vector<RollingPoint> rolling_average(const std::vector<DailyPoint>& daily, int window) {
  if (window < 1) throw std::invalid_argument("window must be at least 1 day");
  for (size_t i = 1; i < daily.size(); ++i) {
    if (daily[i].date < daily[i - 1].date) throw std::invalid_argument("daily points must be sorted by date");
  }
  // Collapse equal dates into (sum, n).
  struct Day {
    std::chrono::sys_days date;
    double sum = 0.0;
    size_t n = 0;
  };
  std::vector<Day> days;
  for (const auto& p : daily) {
    if (days.empty() || days.back().date != p.date) days.push_back({p.date, 0.0, 0});
    days.back().sum += p.mean * static_cast<double>(p.n);
    days.back().n += p.n;
  }
  std::vector<RollingPoint> out;
  size_t lo = 0;
  size_t win_n = 0;
  for (size_t i = 0; i < days.size(); ++i) {
    win_n += days[i].n;
    while (days[lo].date <= days[i].date - std::chrono::days{window}) {
      win_n -= days[lo].n;
      ++lo;
    }
    RollingPoint p;
    p.date = days[i].date;
    p.n = days[i].n;
    p.window_n = win_n;
    p.daily_mean = days[i].n ? days[i].sum / static_cast<double>(days[i].n) : 0.0;
    double s = 0.0;
    for (size_t k = lo; k <= i; ++k) s += days[k].sum;
    p.rolling_mean = win_n ? s / static_cast<double>(win_n) : 0.0;
    out.push_back(p);
  }
  return out;
}

std::vector<DailyPoint> daily_ratings(const std::vector<ConversationRecord>& records) {
  std::map<std::chrono::sys_days, std::pair<double, size_t>> by_day;
  for (const auto& r : records) {
    if (!r.rating || r.date.empty()) continue;
    auto& [sum, n] = by_day[parse_date(r.date)];
    sum += *r.rating;
    ++n;
  }
  std::vector<DailyPoint> out;
  for (const auto& [d, sn] : by_day) out.push_back({d, sn.first / static_cast<double>(sn.second), sn.second});
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// Left-aligns the first column, right-aligns the rest.
std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream o;
  for (const auto& row : rows) {
    std::string line;
    for (size_t i = 0; i < row.size(); ++i) {
      const size_t pad = width[i] - row[i].size();
      if (i == 0) {
        line += row[i] + std::string(pad, ' ');
      } else {
        line += "  " + std::string(pad, ' ') + row[i];
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    o << line << "\n";
  }
  return o.str();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Report components_report(const std::vector<ConversationRecord>& records) {
  std::set<std::string> components;
  for (const auto& r : records) components.insert(r.components.begin(), r.components.end());
  std::vector<std::vector<std::string>> rows = {{"component", "n", "mean", "ci80_low", "ci80_high"}};
  json arr = json::array();
  for (const auto& c : components) {
    auto s = component_rating(records, c);
    if (!s) continue;
    rows.push_back({c, std::to_string(s->n), fixed(s->mean, 2), fixed(s->ci80_low, 2),
                    fixed(s->ci80_high, 2) + (s->degenerate ? "*" : "")});
    arr.push_back({{"component", c},
                   {"n", s->n},
                   {"mean", s->mean},
                   {"ci80_low", s->ci80_low},
                   {"ci80_high", s->ci80_high},
                   {"degenerate", s->degenerate}});
  }
  Report rep;
  rep.text = table(rows);
  json j;
  j["report"] = "components";
  j["conversations"] = records.size();
  j["components"] = std::move(arr);
  rep.json = j.dump(2);
  return rep;
}

Report ab_report(const std::vector<ConversationRecord>& records, std::optional<std::string> arm_a,
                 std::optional<std::string> arm_b) {
  if (!arm_a || !arm_b) {
    std::set<std::string> variants;
    for (const auto& r : records) {
      if (r.variant) variants.insert(*r.variant);
    }
    if (variants.size() != 2) {
      throw std::invalid_argument("A/B report needs exactly two variants, found " +
                                  std::to_string(variants.size()));
    }
    arm_a = *variants.begin();
    arm_b = *variants.rbegin();
  }
  const auto res = ab_test(variant_ratings(records, *arm_a), variant_ratings(records, *arm_b));
  std::vector<std::vector<std::string>> rows = {{"arm", "n", "mean"},
                                                {*arm_a, std::to_string(res.n_a), fixed(res.mean_a, 2)},
                                                {*arm_b, std::to_string(res.n_b), fixed(res.mean_b, 2)}};
  Report rep;
  rep.text = table(rows);
  if (res.degenerate) {
    rep.text += "p-value: n/a (degenerate)\n";
  } else {
    rep.text += "welch t = " + fixed(*res.t, 3) + ", df = " + fixed(*res.df, 1) + ", p = " +
                fixed(*res.p_value, 4) + (res.significant ? " (significant at p < 0.10)" : "") + "\n";
  }
  json j;
  j["report"] = "ab";
  j["arms"] = json::array({{{"arm", *arm_a}, {"n", res.n_a}, {"mean", res.mean_a}},
                           {{"arm", *arm_b}, {"n", res.n_b}, {"mean", res.mean_b}}});
  j["t"] = optional_json(res.t);
  j["df"] = optional_json(res.df);
  j["p_value"] = optional_json(res.p_value);
  j["degenerate"] = res.degenerate;
  j["significant"] = res.significant;
  rep.json = j.dump(2);
  return rep;
}

Report rolling_report(const std::vector<ConversationRecord>& records, int window) {
  const auto points = rolling_average(daily_ratings(records), window);
  std::vector<std::vector<std::string>> rows = {{"date", "n", "daily_mean", "rolling_mean"}};
  json arr = json::array();
  for (const auto& p : points) {
    rows.push_back({format_date(p.date), std::to_string(p.n), fixed(p.daily_mean, 2),
                    fixed(p.rolling_mean, 2)});
    arr.push_back({{"date", format_date(p.date)},
                   {"n", p.n},
                   {"daily_mean", p.daily_mean},
                   {"rolling_mean", p.rolling_mean},
                   {"window_n", p.window_n}});
  }
  Report rep;
  rep.text = table(rows);
  json j;
  j["report"] = "rolling";
  j["window_days"] = window;
  j["points"] = std::move(arr);
  rep.json = j.dump(2);
  return rep;
}

std::string rolling_csv(const std::vector<RollingPoint>& points) {
  std::ostringstream o;
  o << "date,daily_mean,rolling_mean\n";
  for (const auto& p : points) {
    o << format_date(p.date) << "," << fixed(p.daily_mean, 4) << "," << fixed(p.rolling_mean, 4) << "\n";
  }
  return o.str();
}

}  // namespace emorette
