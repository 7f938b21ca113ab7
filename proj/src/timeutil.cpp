#include "tstar/timeutil.hpp"

#include <cstdio>
#include <cstdlib>

namespace tstar {

// Howard Hinnant's algorithm, days since 1970-01-01.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  CivilDate out;
  out.year = static_cast<int>(y + (m <= 2));
  out.month = static_cast<int>(m);
  out.day = static_cast<int>(d);
  return out;
}

Minutes minutes_from_civil(int year, int month, int day, int hour, int minute) {
  return days_from_civil(year, month, day) * 1440 + hour * 60 + minute;
}

namespace {

bool parse_int(const char* s, int n, int& out) {
  out = 0;
  for (int i = 0; i < n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

}  // namespace

bool parse_date(const std::string& text, std::int64_t& day_out) {
  if (text.size() < 10) return false;
  int y, m, d;
  if (!parse_int(text.c_str(), 4, y) || text[4] != '-') return false;
  if (!parse_int(text.c_str() + 5, 2, m) || text[7] != '-') return false;
  if (!parse_int(text.c_str() + 8, 2, d)) return false;
  if (m < 1 || m > 12 || d < 1 || d > 31) return false;
  day_out = days_from_civil(y, m, d);
  return true;
}

bool parse_timestamp(const std::string& text, Minutes& out) {
  std::int64_t day = 0;
  if (!parse_date(text, day)) return false;
  if (text.size() == 10) {
    out = day * 1440;
    return true;
  }
  if (text.size() < 16) return false;
  if (text[10] != 'T' && text[10] != ' ') return false;
  int hh, mm;
  if (!parse_int(text.c_str() + 11, 2, hh) || text[13] != ':') return false;
  if (!parse_int(text.c_str() + 14, 2, mm)) return false;
  if (hh > 23 || mm > 59) return false;
  if (text.size() > 16) {  // optional :SS, truncated
    if (text[16] != ':' || text.size() < 19) return false;
    int ss;
    if (!parse_int(text.c_str() + 17, 2, ss) || ss > 60) return false;
  }
  out = day * 1440 + hh * 60 + mm;
  return true;
}

std::string format_timestamp(Minutes m) {
  CivilDate cd = civil_from_days(day_of(m));
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:00", cd.year, cd.month, cd.day,
                hour_of_day(m), minute_of_hour(m));
  return buf;
}

std::string format_date(std::int64_t days) {
  CivilDate cd = civil_from_days(days);
  char buf[12];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", cd.year, cd.month, cd.day);
  return buf;
}

}  // namespace tstar
