#include <doctest.h>

#include <chrono>
#include <random>

#include "memop/time.hpp"

using namespace memop;

namespace {

// Independent epoch-day oracle built on the standard calendar types.
std::int64_t chrono_days(int y, unsigned m, unsigned d) {
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                    std::chrono::day{d}};
    return std::chrono::sys_days(ymd).time_since_epoch().count();
}

constexpr std::int64_t kNsPerSec = 1'000'000'000;

}  // namespace

TEST_CASE("days_from_civil agrees with std::chrono across four centuries") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> year(1900, 2300);
    std::uniform_int_distribution<int> month(1, 12);
    for (int i = 0; i < 5000; ++i) {
        const int y = year(rng);
        const int m = month(rng);
        std::chrono::year_month_day_last last{std::chrono::year{y},
                                              std::chrono::month_day_last{std::chrono::month{
                                                  static_cast<unsigned>(m)}}};
        std::uniform_int_distribution<unsigned> day(1, unsigned{last.day()});
        const unsigned d = day(rng);
        CAPTURE(y);
        CAPTURE(m);
        CAPTURE(d);
        CHECK(days_from_civil(y, m, static_cast<int>(d)) == chrono_days(y, m, d));
    }
}

TEST_CASE("civil round trip") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::int64_t> ns(-4'000'000'000LL * kNsPerSec,
                                                   8'000'000'000LL * kNsPerSec);
    for (int i = 0; i < 2000; ++i) {
        const std::int64_t t = ns(rng);
        CHECK(nanos_from_civil(civil_from_nanos(t)) == t);
    }
}

TEST_CASE("rfc3339 parsing") {
    CHECK(parse_rfc3339("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_rfc3339("1970-01-01T00:00:01Z") == kNsPerSec);
    CHECK(parse_rfc3339("2025-10-01T00:00:00Z") ==
          chrono_days(2025, 10, 1) * 86400 * kNsPerSec);

    SUBCASE("offsets shift toward UTC") {
        const auto utc = parse_rfc3339("2025-04-12T08:00:00Z");
        const auto east = parse_rfc3339("2025-04-12T16:00:00+08:00");
        const auto west = parse_rfc3339("2025-04-12T03:30:00-04:30");
        REQUIRE(utc);
        CHECK(east == utc);
        CHECK(west == utc);
    }

    SUBCASE("fractions") {
        CHECK(parse_rfc3339("1970-01-01T00:00:00.5Z") == kNsPerSec / 2);
        CHECK(parse_rfc3339("1970-01-01T00:00:00.000000001Z") == 1);
        CHECK(parse_rfc3339("1970-01-01T00:00:00.123456789Z") == 123456789);
    }

    SUBCASE("rejects malformed inputs") {
        for (const char* bad :
             {"", "2025-10-01", "2025-10-01T00:00:00", "2025-10-01 00:00:00Z",
              "2025-13-01T00:00:00Z", "2025-02-30T00:00:00Z", "2025-10-01T24:00:00Z",
              "2025-10-01T00:60:00Z", "25-10-01T00:00:00Z", "2025-10-01T00:00:00+8:00",
              "2025-10-01T00:00:00Zjunk", "2025-10-01T00:00:00.Z",
              "not a time at all"}) {
            CAPTURE(bad);
            CHECK_FALSE(parse_rfc3339(bad).has_value());
        }
    }

    SUBCASE("leap day valid only in leap years") {
        CHECK(parse_rfc3339("2024-02-29T00:00:00Z").has_value());
        CHECK_FALSE(parse_rfc3339("2025-02-29T00:00:00Z").has_value());
        CHECK(parse_rfc3339("2000-02-29T00:00:00Z").has_value());
        CHECK_FALSE(parse_rfc3339("1900-02-29T00:00:00Z").has_value());
    }
}

TEST_CASE("parse_timestamp keeps the original text") {
    auto ts = parse_timestamp("2025-04-12T16:00:00+08:00");
    REQUIRE(ts);
    CHECK(ts->text == "2025-04-12T16:00:00+08:00");
    CHECK(ts->unix_nanos == parse_rfc3339("2025-04-12T08:00:00Z"));
    CHECK_FALSE(parse_timestamp("nope").has_value());
}

TEST_CASE("format_rfc3339_utc") {
    CHECK(format_rfc3339_utc(0) == "1970-01-01T00:00:00Z");
    CHECK(format_rfc3339_utc(kNsPerSec / 2) == "1970-01-01T00:00:00.5Z");
    CHECK(format_rfc3339_utc(123456789) == "1970-01-01T00:00:00.123456789Z");
    CHECK(format_rfc3339_utc(-kNsPerSec) == "1969-12-31T23:59:59Z");

    SUBCASE("round trips through the parser") {
        std::mt19937_64 rng(13);
        std::uniform_int_distribution<std::int64_t> ns(-2'000'000'000LL * kNsPerSec,
                                                       4'000'000'000LL * kNsPerSec);
        for (int i = 0; i < 2000; ++i) {
            const std::int64_t t = ns(rng);
            CHECK(parse_rfc3339(format_rfc3339_utc(t)) == t);
        }
    }
}

TEST_CASE("iso8601 durations") {
    auto d = parse_iso8601_duration("P1Y2M3W4DT5H6M7S");
    REQUIRE(d);
    CHECK(d->years == 1);
    CHECK(d->months == 2);
    CHECK(d->weeks == 3);
    CHECK(d->days == 4);
    CHECK(d->hours == 5);
    CHECK(d->minutes == 6);
    CHECK(d->seconds == 7);

    CHECK(parse_iso8601_duration("P7D").has_value());
    CHECK(parse_iso8601_duration("PT90M").has_value());

    for (const char* bad : {"", "P", "PT", "7D", "P7", "P-7D", "PD", "P7DT", "P1S", "pt1h"}) {
        CAPTURE(bad);
        CHECK_FALSE(parse_iso8601_duration(bad).has_value());
    }
}

TEST_CASE("add_duration frozen anchors") {
    const auto base = parse_rfc3339("2025-01-01T00:00:00Z");
    REQUIRE(base);

    auto p7d = parse_iso8601_duration("P7D");
    REQUIRE(p7d);
    CHECK(format_rfc3339_utc(add_duration(*base, *p7d)) == "2025-01-08T00:00:00Z");

    auto p1m = parse_iso8601_duration("P1M");
    REQUIRE(p1m);
    const auto jan31 = parse_rfc3339("2025-01-31T12:00:00Z");
    REQUIRE(jan31);
    CHECK(format_rfc3339_utc(add_duration(*jan31, *p1m)) == "2025-02-28T12:00:00Z");

    auto p1y = parse_iso8601_duration("P1Y");
    REQUIRE(p1y);
    const auto leap = parse_rfc3339("2024-02-29T06:00:00Z");
    REQUIRE(leap);
    CHECK(format_rfc3339_utc(add_duration(*leap, *p1y)) == "2025-02-28T06:00:00Z");

    auto pt36h = parse_iso8601_duration("PT36H");
    REQUIRE(pt36h);
    CHECK(format_rfc3339_utc(add_duration(*base, *pt36h)) == "2025-01-02T12:00:00Z");
}

TEST_CASE("add_duration of pure time components agrees with plain arithmetic") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::int64_t> ns(0, 2'000'000'000LL * kNsPerSec);
    std::uniform_int_distribution<std::int64_t> amount(0, 10000);
    for (int i = 0; i < 500; ++i) {
        const std::int64_t t = ns(rng);
        IsoDuration d;
        d.hours = amount(rng);
        d.minutes = amount(rng);
        d.seconds = amount(rng);
        const std::int64_t expected =
            t + (d.hours * 3600 + d.minutes * 60 + d.seconds) * kNsPerSec;
        CHECK(add_duration(t, d) == expected);
    }
}
