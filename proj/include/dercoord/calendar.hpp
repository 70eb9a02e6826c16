#ifndef DERCOORD_CALENDAR_HPP
#define DERCOORD_CALENDAR_HPP

#include <chrono>
#include <cstdio>
#include <string>

#include "dercoord/errors.hpp"

namespace dercoord {

using Date = std::chrono::sys_days;

inline bool is_weekend(Date d) {
    const std::chrono::weekday wd{d};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

inline Date make_date(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw FormatError("invalid calendar date");
    return Date{ymd};
}

inline std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

inline Date parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u", &y, &m, &d) != 3) throw FormatError("bad date: " + text);
    return make_date(y, m, d);
}

// A local wall-clock instant at minute resolution.
struct Timestamp {
    Date date;
    int minute_of_day = 0;

    int hour() const { return minute_of_day / 60; }
};

// Accepts "YYYY-MM-DDTHH:MM[:SS]" or with a space separator.
inline Timestamp parse_timestamp(const std::string& text) {
    int y = 0;
    unsigned mo = 0, d = 0;
    int hh = 0, mm = 0;
    char sep = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u%c%d:%d", &y, &mo, &d, &sep, &hh, &mm) != 6 ||
        (sep != 'T' && sep != ' ') || hh < 0 || hh > 23 || mm < 0 || mm > 59)
        throw FormatError("bad timestamp: " + text);
    return {make_date(y, mo, d), hh * 60 + mm};
}

inline std::string format_timestamp(const Timestamp& ts) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:00", format_date(ts.date).c_str(), ts.minute_of_day / 60,
                  ts.minute_of_day % 60);
    return buf;
}

}  // namespace dercoord

#endif
