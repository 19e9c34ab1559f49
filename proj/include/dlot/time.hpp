#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace dlot {

/// UTC wall-clock instant at millisecond resolution.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Millis = std::chrono::milliseconds;

/// Source of "now". Production code uses the system clock; tests inject a virtual one.
using Clock = std::function<Timestamp()>;

Timestamp system_now();

/// `2024-03-01T09:30:00.250Z`
std::string format_iso8601(Timestamp t);

/// Accepts `YYYY-MM-DDTHH:MM:SS[.sss]Z`. Returns nullopt on anything else.
std::optional<Timestamp> parse_iso8601(std::string_view text);

inline Timestamp from_epoch_ms(long long ms) { return Timestamp{Millis{ms}}; }
inline long long to_epoch_ms(Timestamp t) { return t.time_since_epoch().count(); }

}  // namespace dlot
