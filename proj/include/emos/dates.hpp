#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emos {

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// civil-days algorithm).
inline std::int32_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int32_t>(doe) - 719468;
}

inline void civil_from_days(std::int32_t z, int& y, int& m, int& d) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yr = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = yr + (m <= 2);
}

}  // namespace detail

// Calendar date stored as days since 1970-01-01.  Comparisons and day
// arithmetic are integer operations; parsing/formatting is strict ISO.
class Date {
 public:
  Date() = default;

  static Date from_days(std::int32_t d) {
    Date out;
    out.days_ = d;
    return out;
  }

  static Date from_ymd(int y, int m, int d) {
    if (m < 1 || m > 12 || d < 1 || d > 31)
      throw std::invalid_argument("invalid calendar date");
    Date out = from_days(detail::days_from_civil(y, m, d));
    int yy, mm, dd;
    detail::civil_from_days(out.days_, yy, mm, dd);
    if (yy != y || mm != m || dd != d)
      throw std::invalid_argument("invalid calendar date");
    return out;
  }

  // Strict "YYYY-MM-DD".
  static Date parse(std::string_view iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
      throw std::invalid_argument("bad date '" + std::string(iso) + "' (want YYYY-MM-DD)");
    auto digits = [&](std::size_t from, std::size_t len) {
      int v = 0;
      for (std::size_t i = from; i < from + len; ++i) {
        if (iso[i] < '0' || iso[i] > '9')
          throw std::invalid_argument("bad date '" + std::string(iso) + "' (want YYYY-MM-DD)");
        v = v * 10 + (iso[i] - '0');
      }
      return v;
    };
    return from_ymd(digits(0, 4), digits(5, 2), digits(8, 2));
  }

  std::string to_string() const {
    int y, m, d;
    detail::civil_from_days(days_, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
  }

  std::int32_t days_since_epoch() const { return days_; }

  friend bool operator==(Date a, Date b) = default;
  friend auto operator<=>(Date a, Date b) = default;

  Date operator+(int n) const { return from_days(days_ + n); }
  Date operator-(int n) const { return from_days(days_ - n); }
  int operator-(Date o) const { return days_ - o.days_; }

 private:
  std::int32_t days_ = 0;
};

}  // namespace emos
