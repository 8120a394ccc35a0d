#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace fxrl {

// Seconds since 1970-01-01T00:00:00Z.
struct UtcTime {
  std::int64_t seconds = 0;

  auto operator<=>(const UtcTime&) const = default;

  UtcTime plus_hours(std::int64_t h) const { return UtcTime{seconds + h * 3600}; }
};

enum class Weekday { sunday = 0, monday, tuesday, wednesday, thursday, friday, saturday };

std::int64_t days_from_civil(int year, unsigned month, unsigned day);

UtcTime make_utc(int year, unsigned month, unsigned day, unsigned hour = 0,
                 unsigned minute = 0, unsigned second = 0);

int hour_of(UtcTime t);
Weekday weekday_of(UtcTime t);

// Accepts `YYYY-MM-DDTHH:MM:SS` followed by `Z`, `+HH:MM`, `-HH:MM` or nothing
// (treated as UTC); a space may replace the `T`. Offsets are folded into UTC.
std::optional<UtcTime> parse_iso8601(std::string_view text);

// Always `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(UtcTime t);

}  // namespace fxrl
