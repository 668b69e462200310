#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "deriva/random.hpp"
#include "deriva/table.hpp"

using namespace deriva;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::Io;
}

}  // namespace

TEST(Table, ParsesNumericAndTextColumns) {
  auto t = parse_csv("a,b,c\n1,x,2.5\n3,y,NaN\n");
  ASSERT_EQ(t.row_count(), 2u);
  EXPECT_EQ(t.columns()[0].kind, ColumnKind::Numeric);
  EXPECT_EQ(t.columns()[1].kind, ColumnKind::Text);
  EXPECT_EQ(t.columns()[2].kind, ColumnKind::Numeric);
  EXPECT_TRUE(t.at(1, 2).is_missing());
  EXPECT_EQ(t.at(0, 2).as_number(), 2.5);
  EXPECT_EQ(t.at(1, 1).as_text(), "y");
}

TEST(Table, MissingTokens) {
  auto t = parse_csv("a\n1\nNaN\nnan\n\n2");
  ASSERT_EQ(t.row_count(), 5u);
  EXPECT_TRUE(t.at(1, 0).is_missing());
  EXPECT_TRUE(t.at(2, 0).is_missing());
  EXPECT_TRUE(t.at(3, 0).is_missing());
  EXPECT_EQ(t.at(4, 0).as_number(), 2.0);
}

TEST(Table, Errors) {
  EXPECT_EQ(code_of([] { parse_csv(""); }), Errc::EmptyInput);
  EXPECT_EQ(code_of([] { parse_csv("a,b\n1\n"); }), Errc::RaggedRow);
  EXPECT_EQ(code_of([] { parse_csv("a,a\n1,2\n"); }), Errc::DuplicateColumn);
  auto t = parse_csv("a,b\n1,x\n");
  EXPECT_EQ(code_of([&] { t.column_index("zz"); }), Errc::UnknownColumn);
  EXPECT_EQ(code_of([&] { t.set({0, 1}, Cell::number(1)); }), Errc::KindMismatch);
  EXPECT_EQ(code_of([&] { slice_rows(t, 0, 5); }), Errc::OutOfBounds);
}

TEST(Table, NonFiniteBecomesMissing) {
  EXPECT_TRUE(Cell::number(std::numeric_limits<double>::infinity()).is_missing());
  EXPECT_TRUE(Cell::number(std::nan("")).is_missing());
}

TEST(Table, BitwiseCellEquality) {
  EXPECT_FALSE(Cell::number(0.0).identical(Cell::number(-0.0)));
  EXPECT_TRUE(Cell::number(0.1).identical(Cell::number(0.1)));
  EXPECT_TRUE(Cell::missing().identical(Cell::missing()));
}

TEST(Table, MissingLocationsAndSlices) {
  auto t = parse_csv("a,b\n1,NaN\n2,3\nNaN,NaN\n");
  auto locs = missing_locations(t, "b");
  ASSERT_EQ(locs.size(), 2u);
  EXPECT_EQ(locs[0].row, 0u);
  EXPECT_EQ(locs[1].row, 2u);
  auto parts = std::vector<Table>{slice_rows(t, 0, 1), slice_rows(t, 1, 3)};
  EXPECT_TRUE(concat_rows(parts).same_contents(t));
}

TEST(Table, FormatDoubleRoundTrips) {
  SplitMix64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double v = (rng.next_unit() - 0.5) * std::pow(10.0, static_cast<int>(rng.below(30)) - 15);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(Table, CsvRoundTripRandomTables) {
  SplitMix64 rng(42);
  for (int n = 0; n < 50; ++n) {
    const auto cols = 1 + rng.below(5);
    const auto rows = 1 + rng.below(20);
    std::vector<ColumnSchema> schema;
    for (std::size_t c = 0; c < cols; ++c)
      schema.push_back({"c" + std::to_string(c), c % 3 == 2 ? ColumnKind::Text : ColumnKind::Numeric});
    std::vector<std::vector<Cell>> data(rows);
    for (auto& row : data) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (schema[c].kind == ColumnKind::Text)
          row.push_back(Cell::text("w" + std::to_string(rng.below(1000))));
        else if (rng.below(5) == 0)
          row.push_back(Cell::missing());
        else
          row.push_back(Cell::number((rng.next_unit() - 0.5) * 1e4));
      }
    }
    Table t(schema, data);
    auto back = parse_csv(write_csv(t));
    EXPECT_TRUE(back.same_contents(t)) << write_csv(t);
  }
}
