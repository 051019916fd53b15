#pragma once

#include <chrono>
#include <istream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emorette {

// One finished conversation, as written to the ratings log.
struct ConversationRecord {
  std::string conversation_id;
  std::optional<std::string> user_id;
  std::optional<double> rating;  // [1, 5]
  int turn_count = 0;
  std::set<std::string> components;
  std::optional<std::string> variant;
  std::string date;  // YYYY-MM-DD

  bool operator==(const ConversationRecord&) const = default;
};

class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Single-line JSON, no trailing newline.
std::string record_to_json(const ConversationRecord& r);
ConversationRecord record_from_json(std::string_view line);
// Newline-delimited records; blank lines are skipped. Errors name the line.
std::vector<ConversationRecord> read_records(std::istream& in);

std::chrono::sys_days parse_date(std::string_view ymd);
std::string format_date(std::chrono::sys_days d);

std::vector<ConversationRecord> filter_min_turns(const std::vector<ConversationRecord>& records,
                                                 int min_exclusive);

inline constexpr double kZ80 = 1.2816;

struct RatingSummary {
  double mean = 0.0;
  double ci80_low = 0.0;
  double ci80_high = 0.0;
  size_t n = 0;
  // n == 1: the sample deviation is undefined and the interval collapses
  // to the mean.
  bool degenerate = false;
};

// mean +- z80 * s / sqrt(n) over ratings; nullopt when empty.
std::optional<RatingSummary> summarize_ratings(const std::vector<double>& ratings);

// Rated records whose components contain `component`.
std::optional<RatingSummary> component_rating(const std::vector<ConversationRecord>& records,
                                              const std::string& component);

struct AbResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  size_t n_a = 0;
  size_t n_b = 0;
  // Welch statistic and degrees of freedom; absent when degenerate.
  std::optional<double> t;
  std::optional<double> df;
  std::optional<double> p_value;
  bool degenerate = false;
  bool significant = false;
};

inline constexpr double kSignificance = 0.10;

// Two-tailed Welch t-test. Degenerate (no p-value) when either arm has
// fewer than two ratings or both arms have zero variance.
AbResult ab_test(const std::vector<double>& a, const std::vector<double>& b,
                 double alpha = kSignificance);

// Ratings of records tagged with the given variant.
std::vector<double> variant_ratings(const std::vector<ConversationRecord>& records,
                                    const std::string& variant);
// Ratings of records containing any of the given components.
std::vector<double> group_ratings(const std::vector<ConversationRecord>& records,
                                  const std::set<std::string>& components);

struct DailyPoint {
  std::chrono::sys_days date;
  double mean = 0.0;
  size_t n = 0;
};

struct RollingPoint {
  std::chrono::sys_days date;
  double daily_mean = 0.0;    // n-weighted mean of that date's entries
  double rolling_mean = 0.0;  // n-weighted mean over the trailing window
  size_t n = 0;               // ratings in that date's entries
  size_t window_n = 0;
};

// One output row per distinct date. Input must be sorted by date (equal
// dates may repeat); throws std::invalid_argument otherwise.
std::vector<RollingPoint> rolling_average(const std::vector<DailyPoint>& daily, int window = 7);

// Per-date rating means of rated records, sorted by date.
std::vector<DailyPoint> daily_ratings(const std::vector<ConversationRecord>& records);

// Reports. Text tables are column-aligned; JSON is pretty-printed.
struct Report {
  std::string text;
  std::string json;
};

Report components_report(const std::vector<ConversationRecord>& records);
// Arms default to the two variants in lexicographic order; throws
// std::invalid_argument unless exactly two arms can be determined.
Report ab_report(const std::vector<ConversationRecord>& records,
                 std::optional<std::string> arm_a = std::nullopt,
                 std::optional<std::string> arm_b = std::nullopt);
Report rolling_report(const std::vector<ConversationRecord>& records, int window = 7);
// date,daily_mean,rolling_mean
std::string rolling_csv(const std::vector<RollingPoint>& points);

}  // namespace emorette
