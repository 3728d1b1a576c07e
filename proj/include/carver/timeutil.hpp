#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace carver {

using SysTime = std::chrono::system_clock::time_point;

// RFC 3339 / ISO 8601 date-time ("2024-05-01T10:00:00.123+02:00", "...Z").
std::optional<SysTime> parse_rfc3339(std::string_view text);

// UTC, microsecond precision, "Z" suffix.
std::string format_rfc3339(SysTime t);

// IMF-fixdate as used by cookie Expires ("Wed, 21 Oct 2015 07:28:00 GMT");
// also accepts the RFC 850 and asctime variants with dashes.
std::optional<SysTime> parse_http_date(std::string_view text);

}  // namespace carver
