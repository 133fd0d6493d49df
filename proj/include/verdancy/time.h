#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace verdancy {

using Millis = std::chrono::milliseconds;
using Timestamp = std::chrono::sys_time<Millis>;

inline Timestamp from_epoch_ms(std::int64_t ms) { return Timestamp{Millis{ms}}; }
inline std::int64_t to_epoch_ms(Timestamp t) { return t.time_since_epoch().count(); }

inline Millis seconds(double s) {
  return Millis{static_cast<std::int64_t>(s * 1000.0 + (s >= 0 ? 0.5 : -0.5))};
}
inline double to_seconds(Millis d) { return static_cast<double>(d.count()) / 1000.0; }

// ISO 8601 UTC. Formats as "YYYY-MM-DDTHH:MM:SSZ", adding ".mmm" only when the
// millisecond part is non-zero.
std::string format_iso8601(Timestamp t);

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff...]" followed by "Z", "+HH:MM" or "-HH:MM".
// A space is accepted in place of 'T'. Returns nullopt on anything else.
std::optional<Timestamp> parse_iso8601(std::string_view text);

}  // namespace verdancy
