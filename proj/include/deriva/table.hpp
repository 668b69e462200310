#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "deriva/error.hpp"

namespace deriva {

struct Missing {
  friend bool operator==(Missing, Missing) { return true; }
};

/// One table entry. Numbers are always finite; anything non-finite is stored as Missing.
class Cell {
 public:
  Cell() = default;

  static Cell missing() { return Cell{}; }
  static Cell number(double v);
  static Cell text(std::string s) { return Cell{Storage{std::move(s)}}; }

  bool is_missing() const { return std::holds_alternative<Missing>(value_); }
  bool is_number() const { return std::holds_alternative<double>(value_); }
  bool is_text() const { return std::holds_alternative<std::string>(value_); }

  double as_number() const;
  const std::string& as_text() const;

  /// Bitwise equality: numbers compare by representation, so -0.0 != 0.0.
  bool identical(const Cell& other) const;

  friend bool operator==(const Cell& a, const Cell& b) { return a.identical(b); }

 private:
  using Storage = std::variant<Missing, double, std::string>;
  explicit Cell(Storage s) : value_(std::move(s)) {}
  Storage value_;
};

enum class ColumnKind { Numeric, Text };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;

  friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

struct CellLocation {
  std::size_t row = 0;
  std::size_t column = 0;

  friend auto operator<=>(const CellLocation&, const CellLocation&) = default;
};

/// Rectangular grid with named columns. Row order is significant.
class Table {
 public:
  Table() = default;
  Table(std::vector<ColumnSchema> columns, std::vector<std::vector<Cell>> rows,
        std::optional<std::string> provenance = std::nullopt);

  std::size_t row_count() const { return rows_.size(); }
  std::size_t column_count() const { return columns_.size(); }
  const std::vector<ColumnSchema>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  const std::optional<std::string>& provenance() const { return provenance_; }
  void set_provenance(std::optional<std::string> p) { provenance_ = std::move(p); }

  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Throws UnknownColumn.
  std::size_t column_index(std::string_view name) const;
  bool is_numeric(std::size_t column) const { return columns_.at(column).kind == ColumnKind::Numeric; }

  const Cell& at(std::size_t row, std::size_t column) const;
  const Cell& at(CellLocation loc) const { return at(loc.row, loc.column); }

  /// Replaces one cell; enforces the column kind (numeric columns take Number or Missing).
  void set(CellLocation loc, Cell cell);

  std::vector<double> numeric_column(std::string_view name) const;

  /// Cell-for-cell bitwise equality of schema and contents (provenance ignored).
  bool same_contents(const Table& other) const;

 private:
  std::vector<ColumnSchema> columns_;
  std::vector<std::vector<Cell>> rows_;
  std::optional<std::string> provenance_;
};

struct CsvOptions {
  std::set<std::string> missing_tokens{"NaN", "nan", ""};
  char delimiter = ',';
};

Table parse_csv(std::string_view text, const CsvOptions& options = {});
std::string write_csv(const Table& table, char delimiter = ',');

Table read_csv_file(const std::string& path, const CsvOptions& options = {});
void write_csv_file(const Table& table, const std::string& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

std::vector<CellLocation> missing_locations(const Table& table, std::string_view column_name);
Table slice_rows(const Table& table, std::size_t start, std::size_t end);
/// Stacks tables with identical schemas.
Table concat_rows(const std::vector<Table>& parts);

}  // namespace deriva
