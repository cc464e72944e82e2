#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "spot/error.hpp"

namespace spot {

enum class FacetKind { continuous, categorical, datetime, text };

inline std::string_view to_string(FacetKind kind) {
  switch (kind) {
    case FacetKind::continuous: return "continuous";
    case FacetKind::categorical: return "categorical";
    case FacetKind::datetime: return "datetime";
    case FacetKind::text: return "text";
  }
  return "text";
}

inline std::optional<FacetKind> facet_kind_from_string(std::string_view s) {
  if (s == "continuous") return FacetKind::continuous;
  if (s == "categorical") return FacetKind::categorical;
  if (s == "datetime") return FacetKind::datetime;
  if (s == "text") return FacetKind::text;
  return std::nullopt;
}

/// UTC instant with millisecond precision.
struct Timestamp {
  std::int64_t ms = 0;
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct Missing {
  friend bool operator==(const Missing&, const Missing&) = default;
};

/// A single cell. Numbers never hold NaN; NaN collapses to Missing on construction.
class Value {
 public:
  using Storage = std::variant<Missing, double, std::string, Timestamp>;

  Value() = default;
  Value(Missing) {}
  Value(double v) {
    if (!std::isnan(v)) storage_ = v;
  }
  Value(int v) : Value(static_cast<double>(v)) {}
  Value(std::string s) : storage_(std::move(s)) {}
  Value(const char* s) : storage_(std::string(s)) {}
  Value(Timestamp t) : storage_(t) {}

  bool is_missing() const { return std::holds_alternative<Missing>(storage_); }
  bool is_number() const { return std::holds_alternative<double>(storage_); }
  bool is_label() const { return std::holds_alternative<std::string>(storage_); }
  bool is_time() const { return std::holds_alternative<Timestamp>(storage_); }

  double number() const { return std::get<double>(storage_); }
  const std::string& label() const { return std::get<std::string>(storage_); }
  Timestamp time() const { return std::get<Timestamp>(storage_); }

  const Storage& storage() const { return storage_; }

  friend bool operator==(const Value&, const Value&) = default;

 private:
  Storage storage_;
};

// Values of one kind compare naturally; values of different kinds order by
// alternative index (missing first).
inline std::partial_ordering operator<=>(const Value& a, const Value& b) {
  if (a.storage().index() != b.storage().index()) return a.storage().index() <=> b.storage().index();
  if (a.is_number()) return a.number() <=> b.number();
  if (a.is_label()) return a.label() <=> b.label();
  if (a.is_time()) return a.time() <=> b.time();
  return std::partial_ordering::equivalent;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace detail

/// Integer, decimal and scientific notation. No thousands separators,
/// no inf/nan spellings, surrounding whitespace ignored.
inline std::optional<double> parse_number(std::string_view text) {
  text = detail::trim(text);
  if (text.empty()) return std::nullopt;
  std::size_t i = 0;
  if (text[i] == '+' || text[i] == '-') ++i;
  std::size_t int_digits = 0, frac_digits = 0;
  while (i < text.size() && detail::is_digit(text[i])) ++i, ++int_digits;
  if (i < text.size() && text[i] == '.') {
    ++i;
    while (i < text.size() && detail::is_digit(text[i])) ++i, ++frac_digits;
  }
  if (int_digits + frac_digits == 0) return std::nullopt;
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) ++i;
    std::size_t exp_digits = 0;
    while (i < text.size() && detail::is_digit(text[i])) ++i, ++exp_digits;
    if (exp_digits == 0) return std::nullopt;
  }
  if (i != text.size()) return std::nullopt;

  std::string_view body = text;
  if (body.front() == '+') body.remove_prefix(1);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), out);
  if (ec != std::errc() || ptr != body.data() + body.size()) return std::nullopt;
  if (!std::isfinite(out)) return std::nullopt;
  return out;
}

/// Shortest representation that round-trips.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace detail {

inline bool read_digits(std::string_view s, std::size_t& pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t k = 0; k < count; ++k) {
    char c = s[pos + k];
    if (!is_digit(c)) return false;
    v = v * 10 + (c - '0');
  }
  pos += count;
  out = v;
  return true;
}

}  // namespace detail

/// ISO-8601 date or date-time: YYYY-MM-DD[(T| )HH:MM[:SS[.fff...]]][Z|(+|-)HH[:]MM].
/// Offsets are normalized to UTC; sub-millisecond digits are truncated.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  text = detail::trim(text);
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, ms = 0;
  if (!detail::read_digits(text, pos, 4, y)) return std::nullopt;
  if (pos >= text.size() || text[pos++] != '-') return std::nullopt;
  if (!detail::read_digits(text, pos, 2, mo)) return std::nullopt;
  if (pos >= text.size() || text[pos++] != '-') return std::nullopt;
  if (!detail::read_digits(text, pos, 2, d)) return std::nullopt;

  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;

  int offset_minutes = 0;
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != 't' && text[pos] != ' ') return std::nullopt;
    ++pos;
    if (!detail::read_digits(text, pos, 2, h)) return std::nullopt;
    if (pos >= text.size() || text[pos++] != ':') return std::nullopt;
    if (!detail::read_digits(text, pos, 2, mi)) return std::nullopt;
    if (pos < text.size() && text[pos] == ':') {
      ++pos;
      if (!detail::read_digits(text, pos, 2, s)) return std::nullopt;
      if (pos < text.size() && (text[pos] == '.' || text[pos] == ',')) {
        ++pos;
        std::size_t digits = 0;
        int scale = 100;
        while (pos < text.size() && detail::is_digit(text[pos])) {
          if (digits < 3) ms += (text[pos] - '0') * scale, scale /= 10;
          ++pos, ++digits;
        }
        if (digits == 0) return std::nullopt;
      }
    }
    if (h > 23 || mi > 59 || s > 59) return std::nullopt;
    if (pos < text.size()) {
      char c = text[pos];
      if (c == 'Z' || c == 'z') {
        ++pos;
      } else if (c == '+' || c == '-') {
        ++pos;
        int oh = 0, om = 0;
        if (!detail::read_digits(text, pos, 2, oh)) return std::nullopt;
        if (pos < text.size() && text[pos] == ':') ++pos;
        if (!detail::read_digits(text, pos, 2, om)) return std::nullopt;
        if (oh > 23 || om > 59) return std::nullopt;
        offset_minutes = (oh * 60 + om) * (c == '-' ? -1 : 1);
      } else {
        return std::nullopt;
      }
    }
    if (pos != text.size()) return std::nullopt;
  }

  auto day_point = sys_days{ymd};
  auto t = day_point + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms} - minutes{offset_minutes};
  return Timestamp{duration_cast<milliseconds>(t.time_since_epoch()).count()};
}

/// Renders YYYY-MM-DDTHH:MM:SS.mmmZ.
inline std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  sys_time<milliseconds> tp{milliseconds{ts.ms}};
  auto day_point = floor<days>(tp);
  year_month_day ymd{day_point};
  hh_mm_ss<milliseconds> tod{tp - day_point};
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()), static_cast<int>(tod.subseconds().count()));
  return buf;
}

enum class TimeInterval { year, month, day, hour, minute };

inline std::string_view to_string(TimeInterval interval) {
  switch (interval) {
    case TimeInterval::year: return "year";
    case TimeInterval::month: return "month";
    case TimeInterval::day: return "day";
    case TimeInterval::hour: return "hour";
    case TimeInterval::minute: return "minute";
  }
  return "day";
}

inline std::optional<TimeInterval> time_interval_from_string(std::string_view s) {
  if (s == "year") return TimeInterval::year;
  if (s == "month") return TimeInterval::month;
  if (s == "day") return TimeInterval::day;
  if (s == "hour") return TimeInterval::hour;
  if (s == "minute") return TimeInterval::minute;
  return std::nullopt;
}

/// Start of the calendar interval (UTC) containing ts.
inline Timestamp truncate(Timestamp ts, TimeInterval interval) {
  using namespace std::chrono;
  sys_time<milliseconds> tp{milliseconds{ts.ms}};
  auto to_ts = [](auto point) {
    return Timestamp{duration_cast<milliseconds>(point.time_since_epoch()).count()};
  };
  switch (interval) {
    case TimeInterval::year: {
      year_month_day ymd{floor<days>(tp)};
      return to_ts(sys_days{ymd.year() / January / 1});
    }
    case TimeInterval::month: {
      year_month_day ymd{floor<days>(tp)};
      return to_ts(sys_days{ymd.year() / ymd.month() / 1});
    }
    case TimeInterval::day: return to_ts(floor<days>(tp));
    case TimeInterval::hour: return to_ts(floor<hours>(tp));
    case TimeInterval::minute: return to_ts(floor<minutes>(tp));
  }
  return ts;
}

}  // namespace spot
