#include "clickchoice/timeutil.hpp"

#include <charconv>
#include <cstdio>
#include <chrono>

#include "clickchoice/errors.hpp"

namespace clickchoice {

namespace {

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

std::optional<Day> civil_day(int y, int m, int d) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd}.time_since_epoch().count();
}

}  // namespace

std::optional<Day> parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
        return std::nullopt;
    }
    return civil_day(y, m, d);
}

std::string format_date(Day day) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{day}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::optional<EpochSeconds> parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;

    bool all_digits = true;
    for (std::size_t c = 0; c < text.size(); ++c) {
        const char ch = text[c];
        if (!(ch >= '0' && ch <= '9') && !(c == 0 && ch == '-')) {
            all_digits = false;
            break;
        }
    }
    if (all_digits) {
        EpochSeconds v = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || p != text.data() + text.size()) return std::nullopt;
        return v;
    }

    if (text.size() < 19) return std::nullopt;
    const auto day = parse_date(text.substr(0, 10));
    if (!day || (text[10] != 'T' && text[10] != 't' && text[10] != ' ')) return std::nullopt;
    if (text[13] != ':' || text[16] != ':') return std::nullopt;
    int hh = 0, mm = 0, ss = 0;
    if (!parse_int(text.substr(11, 2), hh) || !parse_int(text.substr(14, 2), mm) ||
        !parse_int(text.substr(17, 2), ss)) {
        return std::nullopt;
    }
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;

    std::string_view rest = text.substr(19);
    if (!rest.empty() && rest.front() == '.') {
        std::size_t c = 1;
        while (c < rest.size() && rest[c] >= '0' && rest[c] <= '9') ++c;
        if (c == 1) return std::nullopt;
        rest.remove_prefix(c);  // sub-second precision is truncated
    }
    EpochSeconds offset = 0;
    if (rest == "Z" || rest == "z" || rest.empty()) {
        offset = 0;
    } else if ((rest.front() == '+' || rest.front() == '-') && (rest.size() == 6 || rest.size() == 5)) {
        const int sign = rest.front() == '+' ? 1 : -1;
        int oh = 0, om = 0;
        if (rest.size() == 6) {
            if (rest[3] != ':' || !parse_int(rest.substr(1, 2), oh) || !parse_int(rest.substr(4, 2), om)) {
                return std::nullopt;
            }
        } else if (!parse_int(rest.substr(1, 2), oh) || !parse_int(rest.substr(3, 2), om)) {
            return std::nullopt;
        }
        offset = sign * (oh * 3600 + om * 60);
    } else {
        return std::nullopt;
    }
    return start_of(*day) + hh * 3600 + mm * 60 + ss - offset;
}

std::vector<Day> parse_date_range(std::string_view text) {
    const auto sep = text.find("..");
    const std::string_view first = sep == std::string_view::npos ? text : text.substr(0, sep);
    const std::string_view last = sep == std::string_view::npos ? text : text.substr(sep + 2);
    const auto a = parse_date(first);
    const auto b = parse_date(last);
    if (!a || !b) throw InputError("bad date range '" + std::string(text) + "', expected YYYY-MM-DD..YYYY-MM-DD");
    if (*b < *a) throw InputError("date range '" + std::string(text) + "' ends before it starts");
    std::vector<Day> out;
    for (Day d = *a; d <= *b; ++d) out.push_back(d);
    return out;
}

}  // namespace clickchoice
