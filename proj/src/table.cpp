#include "deriva/table.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace deriva {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyColumnName: return "EmptyColumnName";
    case Errc::RaggedRow: return "RaggedRow";
    case Errc::DuplicateColumn: return "DuplicateColumn";
    case Errc::UnknownColumn: return "UnknownColumn";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownIdentifier: return "UnknownIdentifier";
    case Errc::DuplicateLet: return "DuplicateLet";
    case Errc::ArityError: return "ArityError";
    case Errc::InvalidWindow: return "InvalidWindow";
    case Errc::WindowUnderflow: return "WindowUnderflow";
    case Errc::MissingOperand: return "MissingOperand";
    case Errc::DivisionByZero: return "DivisionByZero";
    case Errc::RecursionExhausted: return "RecursionExhausted";
    case Errc::SelfReferenceForward: return "SelfReferenceForward";
    case Errc::NonFiniteResult: return "NonFiniteResult";
    case Errc::WarmupRow: return "WarmupRow";
    case Errc::MissingInput: return "MissingInput";
    case Errc::CyclicDerivation: return "CyclicDerivation";
    case Errc::UnknownFormula: return "UnknownFormula";
    case Errc::NotEnoughRows: return "NotEnoughRows";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::MissingVariable: return "MissingVariable";
    case Errc::UnknownPlaceholder: return "UnknownPlaceholder";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::HttpError: return "HttpError";
    case Errc::FixtureExhausted: return "FixtureExhausted";
    case Errc::Timeout: return "Timeout";
    case Errc::MarkerNotFound: return "MarkerNotFound";
    case Errc::MalformedReflection: return "MalformedReflection";
    case Errc::NoCleanBlock: return "NoCleanBlock";
    case Errc::NoMissingValues: return "NoMissingValues";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::SandboxFailure: return "SandboxFailure";
    case Errc::ContaminatedOutput: return "ContaminatedOutput";
    case Errc::EmptyOutcomes: return "EmptyOutcomes";
    case Errc::AllExcluded: return "AllExcluded";
    case Errc::MissingArtifact: return "MissingArtifact";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Cell Cell::number(double v) {
  if (!std::isfinite(v)) return Cell{};
  return Cell{Storage{v}};
}

double Cell::as_number() const {
  if (const auto* v = std::get_if<double>(&value_)) return *v;
  throw Error(Errc::KindMismatch, "cell is not a number");
}

const std::string& Cell::as_text() const {
  if (const auto* v = std::get_if<std::string>(&value_)) return *v;
  throw Error(Errc::KindMismatch, "cell is not text");
}

bool Cell::identical(const Cell& other) const {
  if (value_.index() != other.value_.index()) return false;
  if (is_number()) {
    return std::bit_cast<std::uint64_t>(std::get<double>(value_)) ==
           std::bit_cast<std::uint64_t>(std::get<double>(other.value_));
  }
  return value_ == other.value_;
}

Table::Table(std::vector<ColumnSchema> columns, std::vector<std::vector<Cell>> rows,
             std::optional<std::string> provenance)
    : columns_(std::move(columns)), rows_(std::move(rows)), provenance_(std::move(provenance)) {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw Error(Errc::EmptyColumnName, "column names must be non-empty");
    if (!seen.insert(c.name).second) throw Error(Errc::DuplicateColumn, c.name);
  }
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != columns_.size()) {
      throw Error(Errc::RaggedRow, "row " + std::to_string(r) + ": expected " +
                                       std::to_string(columns_.size()) + " cells, got " +
                                       std::to_string(rows_[r].size()));
    }
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (columns_[c].kind == ColumnKind::Numeric && rows_[r][c].is_text()) {
        throw Error(Errc::KindMismatch, "text cell in numeric column '" + columns_[c].name + "'");
      }
    }
  }
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::column_index(std::string_view name) const {
  if (auto idx = find_column(name)) return *idx;
  throw Error(Errc::UnknownColumn, std::string(name));
}

const Cell& Table::at(std::size_t row, std::size_t column) const {
  if (row >= rows_.size() || column >= columns_.size()) {
    throw Error(Errc::OutOfBounds,
                "cell (" + std::to_string(row) + ", " + std::to_string(column) + ")");
  }
  return rows_[row][column];
}

void Table::set(CellLocation loc, Cell cell) {
  if (loc.row >= rows_.size() || loc.column >= columns_.size()) {
    throw Error(Errc::OutOfBounds,
                "cell (" + std::to_string(loc.row) + ", " + std::to_string(loc.column) + ")");
  }
  if (columns_[loc.column].kind == ColumnKind::Numeric && cell.is_text()) {
    throw Error(Errc::KindMismatch, "text cell in numeric column '" + columns_[loc.column].name + "'");
  }
  if (columns_[loc.column].kind == ColumnKind::Text && cell.is_number()) {
    throw Error(Errc::KindMismatch, "number in text column '" + columns_[loc.column].name + "'");
  }
  rows_[loc.row][loc.column] = std::move(cell);
}

std::vector<double> Table::numeric_column(std::string_view name) const {
  const auto c = column_index(name);
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& row : rows_) out.push_back(row[c].is_number() ? row[c].as_number() : std::nan(""));
  return out;
}

bool Table::same_contents(const Table& other) const {
  return columns_ == other.columns_ && rows_ == other.rows_;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  // A single trailing newline terminates the last record rather than opening a new one.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto d = line.find(delim, pos);
    if (d == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, d - pos));
    pos = d + 1;
  }
}

std::optional<double> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Table parse_csv(std::string_view text, const CsvOptions& options) {
  if (trim(text).empty()) throw Error(Errc::EmptyInput, "no header row");
  const auto lines = split_lines(text);

  std::vector<ColumnSchema> columns;
  for (auto f : split_fields(lines.front(), options.delimiter)) {
    columns.push_back({std::string(trim(f)), ColumnKind::Numeric});
  }

  enum class Raw { Missing, Number, Text };
  std::vector<std::vector<std::pair<Raw, std::string_view>>> raw;
  std::vector<std::vector<double>> numbers;
  std::vector<bool> all_numeric(columns.size(), true);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto fields = split_fields(lines[li], options.delimiter);
    if (fields.size() != columns.size()) {
      throw Error(Errc::RaggedRow, "row " + std::to_string(li - 1) + ": expected " +
                                       std::to_string(columns.size()) + " fields, got " +
                                       std::to_string(fields.size()));
    }
    auto& rrow = raw.emplace_back();
    auto& nrow = numbers.emplace_back(columns.size(), 0.0);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      auto f = trim(fields[c]);
      if (options.missing_tokens.count(std::string(f))) {
        rrow.emplace_back(Raw::Missing, f);
      } else if (auto v = parse_decimal(f)) {
        rrow.emplace_back(std::isfinite(*v) ? Raw::Number : Raw::Missing, f);
        nrow[c] = *v;
      } else {
        rrow.emplace_back(Raw::Text, f);
        all_numeric[c] = false;
      }
    }
  }

  for (std::size_t c = 0; c < columns.size(); ++c) {
    columns[c].kind = all_numeric[c] ? ColumnKind::Numeric : ColumnKind::Text;
  }

  std::vector<std::vector<Cell>> rows;
  rows.reserve(raw.size());
  for (std::size_t r = 0; r < raw.size(); ++r) {
    auto& row = rows.emplace_back();
    row.reserve(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& [kind, f] = raw[r][c];
      if (kind == Raw::Missing) {
        row.push_back(Cell::missing());
      } else if (columns[c].kind == ColumnKind::Numeric) {
        row.push_back(Cell::number(numbers[r][c]));
      } else {
        row.push_back(Cell::text(std::string(f)));
      }
    }
  }
  return Table(std::move(columns), std::move(rows));
}

std::string write_csv(const Table& table, char delimiter) {
  std::string out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c) out += delimiter;
    out += table.columns()[c].name;
  }
  for (const auto& row : table.rows()) {
    out += '\n';
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += delimiter;
      const auto& cell = row[c];
      if (cell.is_missing()) {
        out += "NaN";
      } else if (cell.is_number()) {
        out += format_double(cell.as_number());
      } else {
        out += cell.as_text();
      }
    }
  }
  return out;
}

Table read_csv_file(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto t = parse_csv(ss.str(), options);
  t.set_provenance(path);
  return t;
}

void write_csv_file(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << write_csv(table) << '\n';
}

std::vector<CellLocation> missing_locations(const Table& table, std::string_view column_name) {
  const auto c = table.column_index(column_name);
  std::vector<CellLocation> out;
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    if (table.rows()[r][c].is_missing()) out.push_back({r, c});
  }
  return out;
}

Table slice_rows(const Table& table, std::size_t start, std::size_t end) {
  if (start > end || end > table.row_count()) {
    throw Error(Errc::OutOfBounds, "slice [" + std::to_string(start) + ", " + std::to_string(end) +
                                       ") of " + std::to_string(table.row_count()) + " rows");
  }
  std::vector<std::vector<Cell>> rows(table.rows().begin() + static_cast<std::ptrdiff_t>(start),
                                      table.rows().begin() + static_cast<std::ptrdiff_t>(end));
  return Table(table.columns(), std::move(rows), table.provenance());
}

Table concat_rows(const std::vector<Table>& parts) {
  if (parts.empty()) return Table{};
  std::vector<std::vector<Cell>> rows;
  for (const auto& p : parts) {
    if (p.columns() != parts.front().columns()) {
      throw Error(Errc::ShapeMismatch, "concat_rows requires identical schemas");
    }
    rows.insert(rows.end(), p.rows().begin(), p.rows().end());
  }
  return Table(parts.front().columns(), std::move(rows), parts.front().provenance());
}

}  // namespace deriva
