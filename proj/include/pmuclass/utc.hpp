#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pmuclass {

using UtcTime = std::chrono::sys_time<std::chrono::milliseconds>;
using Day = std::chrono::sys_days;

namespace detail {

inline bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  auto first = s.data() + pos;
  auto last = first + len;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

inline void put_fixed(std::string& out, long value, int width) {
  char buf[16];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  for (int pad = width - static_cast<int>(ptr - buf); pad > 0; --pad) out.push_back('0');
  out.append(buf, ptr);
}

}  // namespace detail

/// Parses `YYYY-MM-DD`.
inline std::optional<Day> parse_iso_date(std::string_view s) {
  int y = 0, m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!detail::parse_fixed(s, 0, 4, y) || !detail::parse_fixed(s, 5, 2, m) ||
      !detail::parse_fixed(s, 8, 2, d)) {
    return std::nullopt;
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Day{ymd};
}

inline std::string format_iso_date(Day day) {
  std::chrono::year_month_day ymd{day};
  std::string out;
  detail::put_fixed(out, static_cast<int>(ymd.year()), 4);
  out.push_back('-');
  detail::put_fixed(out, static_cast<unsigned>(ymd.month()), 2);
  out.push_back('-');
  detail::put_fixed(out, static_cast<unsigned>(ymd.day()), 2);
  return out;
}

/// Parses `YYYY-MM-DDTHH:MM:SS.mmm` with an optional trailing `Z`.
inline std::optional<UtcTime> parse_iso8601(std::string_view s) {
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  if (s.size() != 23 || s[10] != 'T' || s[13] != ':' || s[16] != ':' || s[19] != '.') {
    return std::nullopt;
  }
  auto day = parse_iso_date(s.substr(0, 10));
  if (!day) return std::nullopt;
  int hh = 0, mm = 0, ss = 0, ms = 0;
  if (!detail::parse_fixed(s, 11, 2, hh) || !detail::parse_fixed(s, 14, 2, mm) ||
      !detail::parse_fixed(s, 17, 2, ss) || !detail::parse_fixed(s, 20, 3, ms)) {
    return std::nullopt;
  }
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  using namespace std::chrono;
  return UtcTime{*day} + hours{hh} + minutes{mm} + seconds{ss} + milliseconds{ms};
}

inline std::string format_iso8601(UtcTime t) {
  using namespace std::chrono;
  const Day day = floor<days>(t);
  auto rem = t - UtcTime{day};
  std::string out = format_iso_date(day);
  out.push_back('T');
  detail::put_fixed(out, duration_cast<hours>(rem).count(), 2);
  rem -= duration_cast<hours>(rem);
  out.push_back(':');
  detail::put_fixed(out, duration_cast<minutes>(rem).count(), 2);
  rem -= duration_cast<minutes>(rem);
  out.push_back(':');
  detail::put_fixed(out, duration_cast<seconds>(rem).count(), 2);
  rem -= duration_cast<seconds>(rem);
  out.push_back('.');
  detail::put_fixed(out, rem.count(), 3);
  out.push_back('Z');
  return out;
}

inline Day day_of(UtcTime t) { return std::chrono::floor<std::chrono::days>(t); }

}  // namespace pmuclass
