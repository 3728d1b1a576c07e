#include "carver/timeutil.hpp"

#include <cctype>
#include <cstdio>
#include <ctime>
#include <string>

#include "carver/model.hpp"

namespace carver {

namespace {

SysTime from_utc_fields(int year, int mon, int day, int hour, int min, int sec) {
    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = min;
    tm.tm_sec = sec;
    return std::chrono::system_clock::from_time_t(timegm(&tm));
}

int month_index(std::string_view name) {
    static constexpr std::string_view kMonths[] = {"jan", "feb", "mar", "apr", "may", "jun",
                                                   "jul", "aug", "sep", "oct", "nov", "dec"};
    for (int i = 0; i < 12; ++i) {
        if (iequals(name.substr(0, 3), kMonths[i])) return i + 1;
    }
    return 0;
}

}  // namespace

std::optional<SysTime> parse_rfc3339(std::string_view text) {
    std::string s(text);
    int year = 0, mon = 0, day = 0, hour = 0, min = 0, sec = 0, consumed = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%*1[Tt ]%2d:%2d:%2d%n", &year, &mon, &day, &hour, &min,
                    &sec, &consumed) != 6) {
        return std::nullopt;
    }
    if (mon < 1 || mon > 12 || day < 1 || day > 31 || hour > 23 || min > 59 || sec > 60) return std::nullopt;
    std::size_t pos = static_cast<std::size_t>(consumed);
    std::chrono::microseconds frac{0};
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        long long scale = 100000;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            frac += std::chrono::microseconds((s[pos] - '0') * scale);
            scale /= 10;
            ++pos;
        }
    }
    std::chrono::minutes offset{0};
    if (pos < s.size()) {
        char c = s[pos];
        if (c == 'Z' || c == 'z') {
            ++pos;
        } else if (c == '+' || c == '-') {
            int oh = 0, om = 0;
            if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d", &oh, &om) != 2) return std::nullopt;
            offset = std::chrono::minutes(oh * 60 + om) * (c == '-' ? -1 : 1);
            pos += 6;
        } else {
            return std::nullopt;
        }
    }
    if (pos != s.size()) return std::nullopt;
    return from_utc_fields(year, mon, day, hour, min, sec) + frac - offset;
}

std::string format_rfc3339(SysTime t) {
    auto secs = std::chrono::time_point_cast<std::chrono::seconds>(t);
    if (secs > t) secs -= std::chrono::seconds(1);
    auto micros = std::chrono::duration_cast<std::chrono::microseconds>(t - secs).count();
    std::time_t tt = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<long long>(micros));
    return buf;
}

std::optional<SysTime> parse_http_date(std::string_view text) {
    std::string s(text);
    char mon_name[8] = {};
    int day = 0, year = 0, hour = 0, min = 0, sec = 0;
    auto comma = s.find(',');
    std::string rest = comma == std::string::npos ? s : s.substr(comma + 1);
    if (std::sscanf(rest.c_str(), " %d %3s %d %d:%d:%d", &day, mon_name, &year, &hour, &min, &sec) == 6 ||
        std::sscanf(rest.c_str(), " %d-%3s-%d %d:%d:%d", &day, mon_name, &year, &hour, &min, &sec) == 6) {
        if (year < 100) year += year < 70 ? 2000 : 1900;
        int mon = month_index(mon_name);
        if (mon == 0) return std::nullopt;
        return from_utc_fields(year, mon, day, hour, min, sec);
    }
    return std::nullopt;
}

}  // namespace carver
