#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "pgalstm/errors.hpp"

namespace pgalstm {

// Calendar day, ISO yyyy-mm-dd on the wire.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int y, unsigned m, unsigned d)
      : days_(std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}}) {}

  static Date parse(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    const auto bad = [&] { return DataError("invalid ISO date '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
    const auto num = [&](std::string_view part, auto& out) {
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
      if (ec != std::errc() || p != part.data() + part.size()) throw bad();
    };
    num(s.substr(0, 4), y);
    num(s.substr(5, 2), m);
    num(s.substr(8, 2), d);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) throw bad();
    return Date(std::chrono::sys_days(ymd));
  }

  std::string iso() const {
    const std::chrono::year_month_day ymd(days_);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
  }

  int year() const { return static_cast<int>(std::chrono::year_month_day(days_).year()); }

  // 1-based day of the year.
  int day_of_year() const {
    const std::chrono::year_month_day ymd(days_);
    const std::chrono::sys_days jan1{ymd.year() / std::chrono::January / 1};
    return static_cast<int>((days_ - jan1).count()) + 1;
  }

  Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }

  Date plus_years(int n) const {
    std::chrono::year_month_day ymd(days_);
    ymd += std::chrono::years{n};
    if (!ymd.ok()) ymd = ymd.year() / ymd.month() / std::chrono::last;
    return Date(std::chrono::sys_days(ymd));
  }

  friend int days_between(Date from, Date to) {
    return static_cast<int>((to.days_ - from.days_).count());
  }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace pgalstm
