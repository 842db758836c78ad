#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace memop {

// A point in time carrying both the original RFC 3339 text (re-emitted
// verbatim by the canonical encoder) and its UTC instant in nanoseconds.
struct Timestamp {
    std::string text;
    std::int64_t unix_nanos = 0;

    bool operator==(const Timestamp&) const = default;
};

struct CivilDateTime {
    std::int64_t year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;
    std::int64_t nanos = 0;
};

// Calendar duration per ISO 8601 (P..T..). Components are kept separate
// because year/month arithmetic is civil, not a fixed number of seconds.
struct IsoDuration {
    std::int64_t years = 0;
    std::int64_t months = 0;
    std::int64_t weeks = 0;
    std::int64_t days = 0;
    std::int64_t hours = 0;
    std::int64_t minutes = 0;
    std::int64_t seconds = 0;
};

std::int64_t days_from_civil(std::int64_t y, int m, int d);
CivilDateTime civil_from_nanos(std::int64_t ns);
std::int64_t nanos_from_civil(const CivilDateTime& c);

// Strict RFC 3339: date, 'T', time, optional fraction, mandatory offset
// ('Z' or +hh:mm / -hh:mm). Returns nullopt on any malformation.
std::optional<std::int64_t> parse_rfc3339(std::string_view s);
std::optional<Timestamp> parse_timestamp(std::string_view s);

// UTC rendering, 'Z' suffix; fractional seconds only when nonzero.
std::string format_rfc3339_utc(std::int64_t ns);

std::optional<IsoDuration> parse_iso8601_duration(std::string_view s);

// Anchors the duration at `ns` using civil-calendar arithmetic: years and
// months shift the calendar date (day clamped to month length), then weeks,
// days, and the time components are added as exact offsets.
std::int64_t add_duration(std::int64_t ns, const IsoDuration& d);

}  // namespace memop
