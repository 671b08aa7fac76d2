#pragma once
// Civil-date <-> epoch-day conversion (days since 1970-01-01, proleptic
// Gregorian) and ISO formatting. Implements the standard days_from_civil /
// civil_from_days algorithms.

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "nudgekit/common.hpp"

namespace nudgekit {

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    unsigned month;
    unsigned day;
};

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), m, d};
}

inline std::string format_iso_date(std::int64_t epoch_day) {
    CivilDate c = civil_from_days(epoch_day);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
    return buf;
}

inline std::int64_t parse_iso_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(std::string(s).c_str(), "%d-%u-%u", &y, &m, &d) != 3 ||
        m < 1 || m > 12 || d < 1 || d > 31) {
        throw ParseError("bad ISO date: " + std::string(s));
    }
    return days_from_civil(y, m, d);
}

}  // namespace nudgekit
