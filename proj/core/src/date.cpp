#include "ecgid/date.hpp"

#include <chrono>
#include <cstdio>

#include "ecgid/errors.hpp"

namespace ecgid {

Date parse_date(const std::string& text) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) {
    throw ParseError("bad date '" + text + "', expected YYYY-MM-DD");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{unsigned(m)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) {
    throw ParseError("nonexistent calendar date '" + text + "'");
  }
  const std::chrono::sys_days days{ymd};
  return Date{static_cast<std::int32_t>(days.time_since_epoch().count())};
}

std::string format_date(Date d) {
  const std::chrono::sys_days days{std::chrono::days{d.days}};
  const std::chrono::year_month_day ymd{days};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

}  // namespace ecgid
