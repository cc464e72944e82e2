#include <gtest/gtest.h>

#include "spot/value.hpp"

namespace spot {
namespace {

TEST(ParseNumber, AcceptsIntegerDecimalScientific) {
  EXPECT_EQ(parse_number("42"), 42.0);
  EXPECT_EQ(parse_number("-3.5"), -3.5);
  EXPECT_EQ(parse_number("+.5"), 0.5);
  EXPECT_EQ(parse_number("1e3"), 1000.0);
  EXPECT_EQ(parse_number("2.5E-2"), 0.025);
  EXPECT_EQ(parse_number("  7 "), 7.0);
  EXPECT_EQ(parse_number("5."), 5.0);
}

TEST(ParseNumber, RejectsSeparatorsAndSpecials) {
  EXPECT_FALSE(parse_number("1,000"));
  EXPECT_FALSE(parse_number("nan"));
  EXPECT_FALSE(parse_number("inf"));
  EXPECT_FALSE(parse_number(""));
  EXPECT_FALSE(parse_number("."));
  EXPECT_FALSE(parse_number("1e"));
  EXPECT_FALSE(parse_number("0x10"));
  EXPECT_FALSE(parse_number("1e400"));
  EXPECT_FALSE(parse_number("12abc"));
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(4.0), "4");
  EXPECT_EQ(format_number(-2.5), "-2.5");
  double third = 1.0 / 3.0;
  EXPECT_EQ(parse_number(format_number(third)), third);
}

TEST(Timestamp, ParsesDatesAndOffsets) {
  EXPECT_EQ(parse_timestamp("1970-01-01")->ms, 0);
  EXPECT_EQ(parse_timestamp("1970-01-02")->ms, 86400000);
  EXPECT_EQ(parse_timestamp("1970-01-01T00:00:01.5Z")->ms, 1500);
  EXPECT_EQ(parse_timestamp("1970-01-01 01:00")->ms, 3600000);
  // 02:00 at +02:00 is midnight UTC
  EXPECT_EQ(parse_timestamp("1970-01-01T02:00:00+02:00")->ms, 0);
  EXPECT_EQ(parse_timestamp("1969-12-31T23:00:00-0100")->ms, 0);
  EXPECT_EQ(parse_timestamp("1969-12-31")->ms, -86400000);
}

TEST(Timestamp, RejectsInvalid) {
  EXPECT_FALSE(parse_timestamp("2021-02-30"));
  EXPECT_FALSE(parse_timestamp("2021-13-01"));
  EXPECT_FALSE(parse_timestamp("2021"));
  EXPECT_FALSE(parse_timestamp("21-01-01"));
  EXPECT_FALSE(parse_timestamp("2021-01-01T25:00"));
  EXPECT_FALSE(parse_timestamp("2021-01-01Tfoo"));
  EXPECT_FALSE(parse_timestamp("01/02/2021"));
}

TEST(Timestamp, FormatRoundTrip) {
  auto t = parse_timestamp("2021-03-17T08:09:10.123Z");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_timestamp(*t), "2021-03-17T08:09:10.123Z");
  EXPECT_EQ(parse_timestamp(format_timestamp(Timestamp{-1})), Timestamp{-1});
}

TEST(Truncate, CalendarIntervals) {
  auto t = *parse_timestamp("2021-03-17T08:00:00Z");
  EXPECT_EQ(truncate(t, TimeInterval::month), *parse_timestamp("2021-03-01T00:00Z"));
  EXPECT_EQ(truncate(t, TimeInterval::year), *parse_timestamp("2021-01-01"));
  EXPECT_EQ(truncate(t, TimeInterval::day), *parse_timestamp("2021-03-17"));
  auto u = *parse_timestamp("2021-03-17T08:59:59.999Z");
  EXPECT_EQ(truncate(u, TimeInterval::hour), *parse_timestamp("2021-03-17T08:00Z"));
  EXPECT_EQ(truncate(u, TimeInterval::minute), *parse_timestamp("2021-03-17T08:59Z"));
  // before the epoch truncation still goes down
  EXPECT_EQ(truncate(Timestamp{-1}, TimeInterval::day), *parse_timestamp("1969-12-31"));
}

TEST(Value, MissingIsDistinct) {
  Value missing;
  EXPECT_TRUE(missing.is_missing());
  EXPECT_NE(missing, Value{0.0});
  EXPECT_NE(missing, Value{std::string()});
  EXPECT_TRUE(Value{std::nan("")}.is_missing());
}

}  // namespace
}  // namespace spot
