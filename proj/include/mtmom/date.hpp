#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <tuple>

#include "mtmom/errors.hpp"

namespace mtmom {

// Civil calendar date stored as days since 1970-01-01 (proleptic Gregorian).
// The conversion pair below is Howard Hinnant's days_from_civil / civil_from_days.
struct Date {
    int32_t days = 0;

    friend bool operator==(Date a, Date b) { return a.days == b.days; }
    friend bool operator!=(Date a, Date b) { return a.days != b.days; }
    friend bool operator<(Date a, Date b) { return a.days < b.days; }
    friend bool operator<=(Date a, Date b) { return a.days <= b.days; }
    friend bool operator>(Date a, Date b) { return a.days > b.days; }
    friend bool operator>=(Date a, Date b) { return a.days >= b.days; }

    Date next() const { return Date{days + 1}; }
};

namespace detail {
constexpr int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

constexpr std::tuple<int, unsigned, unsigned> civil_from_days(int64_t z) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), m, d};
}
}  // namespace detail

inline Date make_date(int year, int month, int day) {
    return Date{static_cast<int32_t>(detail::days_from_civil(year, static_cast<unsigned>(month),
                                                             static_cast<unsigned>(day)))};
}

inline int year_of(Date d) { return std::get<0>(detail::civil_from_days(d.days)); }
inline int month_of(Date d) { return static_cast<int>(std::get<1>(detail::civil_from_days(d.days))); }
inline int day_of(Date d) { return static_cast<int>(std::get<2>(detail::civil_from_days(d.days))); }

// 0 = Monday .. 6 = Sunday (1970-01-01 was a Thursday).
inline int weekday_of(Date d) {
    int w = (d.days + 3) % 7;
    return w < 0 ? w + 7 : w;
}

inline bool is_weekend(Date d) { return weekday_of(d) >= 5; }

inline std::string to_string(Date d) {
    auto [y, m, dd] = detail::civil_from_days(d.days);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, dd);
    return buf;
}

// Strict ISO-8601 YYYY-MM-DD. Returns nullopt on any malformation,
// including out-of-range month/day (verified by round trip).
inline std::optional<Date> parse_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (s[i] < '0' || s[i] > '9') return std::nullopt;
    int y = std::stoi(s.substr(0, 4));
    int m = std::stoi(s.substr(5, 2));
    int d = std::stoi(s.substr(8, 2));
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    Date out = make_date(y, m, d);
    if (year_of(out) != y || month_of(out) != m || day_of(out) != d) return std::nullopt;
    return out;
}

inline Date parse_date_or_throw(const std::string& s, const std::string& context = "") {
    auto d = parse_date(s);
    if (!d) raise(Errc::unparseable_date, "unparseable date '" + s + "'" +
                                              (context.empty() ? "" : " (" + context + ")"));
    return *d;
}

}  // namespace mtmom
