#pragma once

#include <cstdint>
#include <string>

namespace ecgid {

/// Calendar date at day resolution, stored as days since 1970-01-01.
/// Comparison and arithmetic work directly on the day count.
struct Date {
  std::int32_t days = 0;

  auto operator<=>(const Date&) const = default;
};

/// Parses "YYYY-MM-DD". Throws ParseError on malformed or non-existent dates.
Date parse_date(const std::string& text);

/// Formats as "YYYY-MM-DD".
std::string format_date(Date d);

/// Signed day count b - a.
inline std::int64_t days_between(Date a, Date b) {
  return static_cast<std::int64_t>(b.days) - static_cast<std::int64_t>(a.days);
}

}  // namespace ecgid
