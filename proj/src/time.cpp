#include "bigthick/time.hpp"

#include <charconv>
#include <cstdio>

#include "bigthick/error.hpp"

namespace bigthick {
namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) {
    throw Error(ErrorCode::InvalidArgument, "truncated time value: " + std::string(text));
  }
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc{} || ptr != text.data() + pos + len) {
    throw Error(ErrorCode::InvalidArgument, "malformed time value: " + std::string(text));
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw Error(ErrorCode::InvalidArgument, "malformed time value: " + std::string(text));
  }
}

}  // namespace

std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Date parse_date(std::string_view text) {
  if (text.size() != 10) {
    throw Error(ErrorCode::InvalidArgument, "malformed date: " + std::string(text));
  }
  int y = parse_int(text, 0, 4);
  expect_char(text, 4, '-');
  int m = parse_int(text, 5, 2);
  expect_char(text, 7, '-');
  int d = parse_int(text, 8, 2);
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::InvalidArgument, "invalid date: " + std::string(text));
  }
  return Date{ymd};
}

std::string format_clock(ClockTime c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d", c.minute / 60, c.minute % 60);
  return buf;
}

ClockTime parse_clock(std::string_view text) {
  if (text.size() != 5) {
    throw Error(ErrorCode::InvalidArgument, "malformed clock time: " + std::string(text));
  }
  int h = parse_int(text, 0, 2);
  expect_char(text, 2, ':');
  int m = parse_int(text, 3, 2);
  if (m > 59 || h > 24 || (h == 24 && m != 0)) {
    throw Error(ErrorCode::InvalidArgument, "clock time out of range: " + std::string(text));
  }
  return ClockTime{h * 60 + m};
}

std::string format_instant(Instant t) {
  auto secs = (t - Instant{date_of(t)}).count();
  char buf[48];
  std::snprintf(buf, sizeof buf, "T%02lld:%02lld:%02lldZ", static_cast<long long>(secs / 3600),
                static_cast<long long>(secs / 60 % 60), static_cast<long long>(secs % 60));
  return format_date(date_of(t)) + buf;
}

Instant parse_instant(std::string_view text) {
  if (text.size() < 17) {
    throw Error(ErrorCode::InvalidArgument, "malformed instant: " + std::string(text));
  }
  Date d = parse_date(text.substr(0, 10));
  expect_char(text, 10, 'T');
  int h = parse_int(text, 11, 2);
  expect_char(text, 13, ':');
  int m = parse_int(text, 14, 2);
  int s = 0;
  std::size_t tail = 16;
  if (text.size() > 16 && text[16] == ':') {
    s = parse_int(text, 17, 2);
    tail = 19;
  }
  if (tail != text.size() - 1 || text.back() != 'Z' || h > 23 || m > 59 || s > 59) {
    throw Error(ErrorCode::InvalidArgument, "malformed instant: " + std::string(text));
  }
  return Instant{d} + std::chrono::hours{h} + Minutes{m} + std::chrono::seconds{s};
}

}  // namespace bigthick
