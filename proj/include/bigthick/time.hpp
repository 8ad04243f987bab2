#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace bigthick {

// All instants are UTC with second precision.
using Instant = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;
using Minutes = std::chrono::minutes;

inline constexpr int kMinutesPerDay = 24 * 60;

/// Minutes since midnight, in [0, 1440]. 1440 is only meaningful as an
/// exclusive interval end.
struct ClockTime {
  int minute = 0;

  constexpr auto operator<=>(const ClockTime&) const = default;
};

std::string format_instant(Instant t);
Instant parse_instant(std::string_view text);  // "YYYY-MM-DDTHH:MM[:SS]Z"

std::string format_date(Date d);
Date parse_date(std::string_view text);  // "YYYY-MM-DD"

std::string format_clock(ClockTime c);
ClockTime parse_clock(std::string_view text);  // "HH:MM", "24:00" allowed

inline Date date_of(Instant t) { return std::chrono::floor<std::chrono::days>(t); }

inline int minute_of_day(Instant t) {
  return static_cast<int>(std::chrono::floor<Minutes>(t - date_of(t)).count());
}

/// Monday = 0 ... Sunday = 6.
inline int weekday_index(Date d) {
  return static_cast<int>(std::chrono::weekday{d}.iso_encoding()) - 1;
}

inline int weekday_index(Instant t) { return weekday_index(date_of(t)); }

inline Instant at_clock(Date d, ClockTime c) {
  return Instant{d} + Minutes{c.minute};
}

}  // namespace bigthick
