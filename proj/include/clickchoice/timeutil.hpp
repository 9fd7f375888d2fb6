#pragma once
// UTC timestamps as integer epoch seconds and calendar days as days since
// 1970-01-01.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clickchoice {

using EpochSeconds = std::int64_t;
using Day = std::int64_t;

inline constexpr EpochSeconds kSecondsPerDay = 86400;

// "YYYY-MM-DD"; nullopt on malformed input.
std::optional<Day> parse_date(std::string_view text);
std::string format_date(Day day);

// ISO-8601 ("2015-09-03T12:00:00Z", optional fraction and +hh:mm offset,
// space instead of 'T' accepted) or integer epoch seconds.
std::optional<EpochSeconds> parse_timestamp(std::string_view text);

inline Day day_of(EpochSeconds t) {
    // floor division so pre-epoch instants land on the right day
    return t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
}

inline EpochSeconds start_of(Day d) { return d * kSecondsPerDay; }

// "START..END" inclusive, or a single date.
std::vector<Day> parse_date_range(std::string_view text);

}  // namespace clickchoice
