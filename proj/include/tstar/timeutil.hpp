#pragma once

#include <cstdint>
#include <string>

namespace tstar {

// Naive local timestamp with minute precision, stored as minutes since
// 1970-01-01 00:00. No timezone conversion: one fixed offset per dataset.
using Minutes = std::int64_t;

struct CivilDate {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
};

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(int year, int month, int day);
CivilDate civil_from_days(std::int64_t days);

Minutes minutes_from_civil(int year, int month, int day, int hour, int minute);

// Parses "YYYY-MM-DD" or "YYYY-MM-DD[T ]HH:MM[:SS]"; seconds are truncated.
// Returns false on malformed input.
bool parse_timestamp(const std::string& text, Minutes& out);
bool parse_date(const std::string& text, std::int64_t& day_out);

std::string format_timestamp(Minutes m);
std::string format_date(std::int64_t days);

// Day-of-week with Monday = 0 .. Sunday = 6.
inline int day_of_week(std::int64_t days_since_epoch) {
  // 1970-01-01 was a Thursday.
  return static_cast<int>(((days_since_epoch % 7) + 7 + 3) % 7);
}

inline std::int64_t day_of(Minutes m) { return m >= 0 ? m / 1440 : (m - 1439) / 1440; }
inline int hour_of_day(Minutes m) { return static_cast<int>((m - day_of(m) * 1440) / 60); }
inline int minute_of_hour(Minutes m) { return static_cast<int>((m - day_of(m) * 1440) % 60); }

}  // namespace tstar
