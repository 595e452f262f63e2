#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace ktraj {

/// Wall-clock instants are treated as naive local time stored on the
/// system_clock epoch; all inputs are assumed to share one time zone.
using TimePoint = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;
using Hours = std::chrono::hours;
using Days = std::chrono::days;

enum class TimestampFormat { iso8601, epoch_seconds };

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM", "YYYY-MM-DD HH:MM:SS", an
/// optional fractional second (truncated) and an optional trailing "Z".
std::optional<TimePoint> parse_timestamp(std::string_view text,
                                         TimestampFormat format = TimestampFormat::iso8601);

/// Date part of a timestamp; any time-of-day component is dropped.
std::optional<Date> parse_date(std::string_view text,
                               TimestampFormat format = TimestampFormat::iso8601);

std::string format_timestamp(TimePoint t);
std::string format_date(Date d);

inline Date to_date(TimePoint t) { return std::chrono::floor<Days>(t); }
inline TimePoint to_time(Date d) { return TimePoint{d}; }

/// Completed years between birth and the given date.
int age_in_years(Date birth, Date on);

/// Signed elapsed time in fractional days.
inline double days_between(TimePoint from, TimePoint to) {
  return static_cast<double>((to - from).count()) / 86400.0;
}

inline long days_between(Date from, Date to) { return (to - from).count(); }

}  // namespace ktraj
