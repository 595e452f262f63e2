#include "ktraj/datetime.hpp"

#include <charconv>
#include <cstdio>

namespace ktraj {
namespace {

bool read_fixed(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return ec == std::errc{} && ptr == text.data() + pos + width;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<TimePoint> parse_iso(std::string_view text) {
  text = strip(text);
  int y = 0, mo = 0, d = 0;
  if (!read_fixed(text, 0, 4, y) || text.size() < 10 || text[4] != '-' ||
      !read_fixed(text, 5, 2, mo) || text[7] != '-' || !read_fixed(text, 8, 2, d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  TimePoint t{Date{ymd}};
  if (text.size() == 10) return t;

  if (text[10] != 'T' && text[10] != ' ') return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  if (!read_fixed(text, 11, 2, hh) || text.size() < 16 || text[13] != ':' || !read_fixed(text, 14, 2, mm)) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < text.size() && text[pos] == ':') {
    if (!read_fixed(text, 17, 2, ss)) return std::nullopt;
    pos = 19;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
  }
  if (pos < text.size() && text[pos] == 'Z') ++pos;
  if (pos != text.size()) return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  return t + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
}

}  // namespace

std::optional<TimePoint> parse_timestamp(std::string_view text, TimestampFormat format) {
  if (format == TimestampFormat::epoch_seconds) {
    text = strip(text);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return TimePoint{std::chrono::seconds{v}};
  }
  return parse_iso(text);
}

std::optional<Date> parse_date(std::string_view text, TimestampFormat format) {
  auto t = parse_timestamp(text, format);
  if (!t) return std::nullopt;
  return to_date(*t);
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_timestamp(TimePoint t) {
  const Date d = to_date(t);
  const std::chrono::hh_mm_ss hms{t - TimePoint{d}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02d", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return format_date(d) + buf;
}

int age_in_years(Date birth, Date on) {
  const std::chrono::year_month_day b{birth};
  const std::chrono::year_month_day o{on};
  int age = static_cast<int>(o.year()) - static_cast<int>(b.year());
  if (o.month() < b.month() || (o.month() == b.month() && o.day() < b.day())) --age;
  return age;
}

}  // namespace ktraj
