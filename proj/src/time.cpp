#include "memop/time.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace memop {
namespace {

constexpr std::int64_t kNanosPerSecond = 1'000'000'000;
constexpr std::int64_t kSecondsPerDay = 86'400;

bool is_leap(std::int64_t y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int last_day_of_month(std::int64_t y, int m) {
    static constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return kDays[static_cast<std::size_t>(m - 1)];
}

// Floor division/modulo for negative-safe epoch math.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
    return a - floor_div(a, b) * b;
}

bool parse_fixed_digits(std::string_view s, std::size_t pos, int count, std::int64_t& out) {
    if (pos + static_cast<std::size_t>(count) > s.size()) return false;
    std::int64_t v = 0;
    for (int i = 0; i < count; ++i) {
        char c = s[pos + static_cast<std::size_t>(i)];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

}  // namespace

std::int64_t days_from_civil(std::int64_t y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = floor_div(y, 400);
    const std::int64_t yoe = y - era * 400;
    const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

CivilDateTime civil_from_nanos(std::int64_t ns) {
    const std::int64_t total_seconds = floor_div(ns, kNanosPerSecond);
    const std::int64_t frac = floor_mod(ns, kNanosPerSecond);
    std::int64_t z = floor_div(total_seconds, kSecondsPerDay);
    const std::int64_t sod = floor_mod(total_seconds, kSecondsPerDay);

    z += 719468;
    const std::int64_t era = floor_div(z, 146097);
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
    const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;

    CivilDateTime c;
    c.year = y + (m <= 2);
    c.month = static_cast<int>(m);
    c.day = static_cast<int>(d);
    c.hour = static_cast<int>(sod / 3600);
    c.minute = static_cast<int>((sod / 60) % 60);
    c.second = static_cast<int>(sod % 60);
    c.nanos = frac;
    return c;
}

std::int64_t nanos_from_civil(const CivilDateTime& c) {
    const std::int64_t days = days_from_civil(c.year, c.month, c.day);
    const std::int64_t secs =
        days * kSecondsPerDay + c.hour * 3600 + c.minute * 60 + c.second;
    return secs * kNanosPerSecond + c.nanos;
}

std::optional<std::int64_t> parse_rfc3339(std::string_view s) {
    std::int64_t year, month, day, hour, minute, second;
    if (!parse_fixed_digits(s, 0, 4, year)) return std::nullopt;
    if (s.size() < 20 || s[4] != '-' || s[7] != '-') return std::nullopt;
    if (!parse_fixed_digits(s, 5, 2, month) || !parse_fixed_digits(s, 8, 2, day))
        return std::nullopt;
    if (s[10] != 'T' && s[10] != 't') return std::nullopt;
    if (!parse_fixed_digits(s, 11, 2, hour)) return std::nullopt;
    if (s[13] != ':' || s[16] != ':') return std::nullopt;
    if (!parse_fixed_digits(s, 14, 2, minute) || !parse_fixed_digits(s, 17, 2, second))
        return std::nullopt;

    if (month < 1 || month > 12 || day < 1) return std::nullopt;
    if (day > last_day_of_month(year, static_cast<int>(month))) return std::nullopt;
    if (hour > 23 || minute > 59 || second > 59) return std::nullopt;

    std::size_t pos = 19;
    std::int64_t frac_ns = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        std::int64_t scale = 100'000'000;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (scale > 0) frac_ns += (s[pos] - '0') * scale;
            scale /= 10;
            ++pos;
        }
        if (pos == start) return std::nullopt;
    }

    if (pos >= s.size()) return std::nullopt;
    std::int64_t offset_seconds = 0;
    const char oc = s[pos];
    if (oc == 'Z' || oc == 'z') {
        ++pos;
    } else if (oc == '+' || oc == '-') {
        std::int64_t oh, om;
        if (!parse_fixed_digits(s, pos + 1, 2, oh)) return std::nullopt;
        if (pos + 3 >= s.size() || s[pos + 3] != ':') return std::nullopt;
        if (!parse_fixed_digits(s, pos + 4, 2, om)) return std::nullopt;
        if (oh > 23 || om > 59) return std::nullopt;
        offset_seconds = (oh * 3600 + om * 60) * (oc == '-' ? -1 : 1);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;

    CivilDateTime c;
    c.year = year;
    c.month = static_cast<int>(month);
    c.day = static_cast<int>(day);
    c.hour = static_cast<int>(hour);
    c.minute = static_cast<int>(minute);
    c.second = static_cast<int>(second);
    c.nanos = frac_ns;
    return nanos_from_civil(c) - offset_seconds * kNanosPerSecond;
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
    auto ns = parse_rfc3339(s);
    if (!ns) return std::nullopt;
    return Timestamp{std::string(s), *ns};
}

std::string format_rfc3339_utc(std::int64_t ns) {
    const CivilDateTime c = civil_from_nanos(ns);
    char buf[64];
    int len = std::snprintf(buf, sizeof(buf), "%04lld-%02d-%02dT%02d:%02d:%02d",
                            static_cast<long long>(c.year), c.month, c.day, c.hour,
                            c.minute, c.second);
    std::string out(buf, static_cast<std::size_t>(len));
    if (c.nanos != 0) {
        std::snprintf(buf, sizeof(buf), "%09lld", static_cast<long long>(c.nanos));
        std::string frac(buf);
        while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
        out += '.';
        out += frac;
    }
    out += 'Z';
    return out;
}

std::optional<IsoDuration> parse_iso8601_duration(std::string_view s) {
    if (s.size() < 2 || s[0] != 'P') return std::nullopt;
    IsoDuration d;
    bool in_time = false;
    bool any = false;
    std::size_t pos = 1;
    while (pos < s.size()) {
        if (s[pos] == 'T') {
            if (in_time) return std::nullopt;
            in_time = true;
            ++pos;
            continue;
        }
        std::int64_t value = 0;
        auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), value);
        if (ec != std::errc() || ptr == s.data() + pos || value < 0) return std::nullopt;
        pos = static_cast<std::size_t>(ptr - s.data());
        if (pos >= s.size()) return std::nullopt;
        const char unit = s[pos++];
        if (!in_time) {
            switch (unit) {
                case 'Y': d.years = value; break;
                case 'M': d.months = value; break;
                case 'W': d.weeks = value; break;
                case 'D': d.days = value; break;
                default: return std::nullopt;
            }
        } else {
            switch (unit) {
                case 'H': d.hours = value; break;
                case 'M': d.minutes = value; break;
                case 'S': d.seconds = value; break;
                default: return std::nullopt;
            }
        }
        any = true;
    }
    if (!any || (in_time && s.back() == 'T')) return std::nullopt;
    return d;
}

std::int64_t add_duration(std::int64_t ns, const IsoDuration& d) {
    CivilDateTime c = civil_from_nanos(ns);
    if (d.years != 0 || d.months != 0) {
        std::int64_t month_index = c.year * 12 + (c.month - 1) + d.years * 12 + d.months;
        c.year = floor_div(month_index, 12);
        c.month = static_cast<int>(floor_mod(month_index, 12)) + 1;
        const int last = last_day_of_month(c.year, c.month);
        if (c.day > last) c.day = last;
    }
    std::int64_t out = nanos_from_civil(c);
    out += (d.weeks * 7 + d.days) * kSecondsPerDay * kNanosPerSecond;
    out += (d.hours * 3600 + d.minutes * 60 + d.seconds) * kNanosPerSecond;
    return out;
}

}  // namespace memop
