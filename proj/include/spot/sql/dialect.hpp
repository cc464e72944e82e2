#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "spot/value.hpp"

namespace spot::sql {

/// Dialect-specific pieces of generated SQL. Everything else in the
/// compiler is plain ANSI.
class Dialect {
 public:
  virtual ~Dialect() = default;
  virtual std::string_view name() const = 0;
  /// Numbered placeholder, 1-based; the same number may appear repeatedly.
  virtual std::string placeholder(std::size_t index) const = 0;
  /// floor() of a non-negative double expression, as an integer.
  virtual std::string floor_nonnegative(const std::string& expr) const = 0;
  virtual std::string least(const std::string& a, const std::string& b) const = 0;
  /// Calendar truncation of an epoch-millisecond integer column to month or year.
  virtual std::string truncate_calendar_ms(const std::string& column, TimeInterval interval) const = 0;
  virtual std::string stddev_pop(const std::string& expr) const { return "stddev_pop(" + expr + ")"; }
  virtual std::string real_type() const { return "DOUBLE PRECISION"; }

  std::string quote_identifier(std::string_view id) const {
    std::string out = "\"";
    for (char c : id) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }

  /// Floor to a fixed-width unit (minute, hour, day) with integer arithmetic;
  /// the double modulo keeps negative timestamps on the right side.
  std::string floor_ms(const std::string& column, long long unit) const {
    const auto u = std::to_string(unit);
    return "(" + column + " - ((" + column + " % " + u + ") + " + u + ") % " + u + ")";
  }

  std::string truncate_ms(const std::string& column, TimeInterval interval) const {
    switch (interval) {
      case TimeInterval::minute: return floor_ms(column, 60000LL);
      case TimeInterval::hour: return floor_ms(column, 3600000LL);
      case TimeInterval::day: return floor_ms(column, 86400000LL);
      default: return truncate_calendar_ms(column, interval);
    }
  }
};

class SqliteDialect : public Dialect {
 public:
  std::string_view name() const override { return "sqlite"; }
  std::string placeholder(std::size_t index) const override { return "?" + std::to_string(index); }
  // CAST truncates toward zero, which is floor for the non-negative operand.
  std::string floor_nonnegative(const std::string& expr) const override { return "CAST(" + expr + " AS INTEGER)"; }
  std::string least(const std::string& a, const std::string& b) const override { return "MIN(" + a + ", " + b + ")"; }
  std::string truncate_calendar_ms(const std::string& column, TimeInterval interval) const override {
    const auto seconds = "(" + floor_ms(column, 1000LL) + " / 1000)";
    const char* start = interval == TimeInterval::year ? "start of year" : "start of month";
    return "(CAST(strftime('%s', " + seconds + ", 'unixepoch', '" + start + "') AS INTEGER) * 1000)";
  }
  std::string real_type() const override { return "REAL"; }
};

class PostgresDialect : public Dialect {
 public:
  std::string_view name() const override { return "postgresql"; }
  std::string placeholder(std::size_t index) const override { return "$" + std::to_string(index); }
  std::string floor_nonnegative(const std::string& expr) const override { return "CAST(FLOOR(" + expr + ") AS BIGINT)"; }
  std::string least(const std::string& a, const std::string& b) const override { return "LEAST(" + a + ", " + b + ")"; }
  std::string truncate_calendar_ms(const std::string& column, TimeInterval interval) const override {
    const char* unit = interval == TimeInterval::year ? "year" : "month";
    return "(CAST(EXTRACT(EPOCH FROM date_trunc('" + std::string(unit) + "', to_timestamp(" + column +
           " / 1000.0) AT TIME ZONE 'UTC')) AS BIGINT) * 1000)";
  }
};

inline std::shared_ptr<const Dialect> sqlite_dialect() { return std::make_shared<SqliteDialect>(); }
inline std::shared_ptr<const Dialect> postgres_dialect() { return std::make_shared<PostgresDialect>(); }

}  // namespace spot::sql
