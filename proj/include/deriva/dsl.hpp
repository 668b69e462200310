#pragma once

// Constrained formula language used as the execution target for generated imputation code.
//
//   program  := letdef* targetdef
//   letdef   := "let" IDENT "=" expr ";"
//   targetdef:= "target" IDENT "=" expr ";"
//   expr     := term (("+"|"-") term)*
//   term     := factor (("*"|"/") factor)*
//   factor   := NUMBER | ref | call | "(" expr ")" | "-" factor
//   ref      := IDENT "[" "t" (("+"|"-") INT)? "]" | IDENT
//   call     := ("mean"|"sum"|"min"|"max") "(" expr "," SINT "," SINT ")"
//             | ("sqrt"|"abs") "(" expr ")"
//             | ("pow"|"max2"|"min2") "(" expr "," expr ")"
//
// `#` starts a line comment.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "deriva/error.hpp"
#include "deriva/table.hpp"

namespace deriva::dsl {

struct SourcePos {
  int line = 1;
  int column = 1;
};

class ParseError : public Error {
 public:
  ParseError(Errc code, SourcePos pos, const std::string& detail)
      : Error(code, "line " + std::to_string(pos.line) + ", col " + std::to_string(pos.column) +
                        ": " + detail),
        pos_(pos) {}

  SourcePos pos() const { return pos_; }

 private:
  SourcePos pos_;
};

enum class BinaryOp { Add, Sub, Mul, Div };
enum class ScalarFn { Sqrt, Abs, Pow, Max2, Min2 };
enum class WindowFn { Mean, Sum, Min, Max };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Const {
  double value = 0.0;
};

/// Column, let or target reference at `offset` rows from the anchor row.
struct Ref {
  std::string name;
  int offset = 0;
  SourcePos pos{};  // not part of structural equality
};

struct Binary {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};

struct Call {
  ScalarFn fn;
  std::vector<ExprPtr> args;
};

/// Aggregate of `body` over rows [anchor+lo, anchor+hi]; the anchor is rebound per row.
struct Window {
  WindowFn fn;
  ExprPtr body;
  int lo = 0;
  int hi = 0;
};

struct Expr {
  std::variant<Const, Ref, Binary, Call, Window> node;
};

ExprPtr make_const(double v);
ExprPtr make_ref(std::string name, int offset = 0);
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr make_call(ScalarFn fn, std::vector<ExprPtr> args);
ExprPtr make_window(WindowFn fn, ExprPtr body, int lo, int hi);

bool structurally_equal(const Expr& a, const Expr& b);

struct Binding {
  std::string name;
  ExprPtr body;
};

struct FormulaProgram {
  std::vector<Binding> lets;
  Binding target;

  const std::string& target_column() const { return target.name; }
};

bool structurally_equal(const FormulaProgram& a, const FormulaProgram& b);

/// Throws ParseError (SyntaxError, UnknownIdentifier, DuplicateLet, ArityError, InvalidWindow).
FormulaProgram parse_program(std::string_view source);

/// Canonical text: one statement per line, every binary operation parenthesised.
std::string format_program(const FormulaProgram& program);
std::string format_expr(const Expr& expr);

/// Column names the program reads (excluding lets and the target itself).
std::vector<std::string> referenced_columns(const FormulaProgram& program);

constexpr int kDefaultRecursionBudget = 64;

/// Evaluates the target expression anchored at `row`. Throws Error with codes
/// WindowUnderflow, MissingOperand, DivisionByZero, RecursionExhausted,
/// SelfReferenceForward, NonFiniteResult, UnknownColumn/UnknownIdentifier/DuplicateLet (binding).
double evaluate_cell(const FormulaProgram& program, const Table& table, std::size_t row,
                     int recursion_budget = kDefaultRecursionBudget);

struct CellError {
  Errc code;
  std::string message;
};

struct CellResult {
  CellLocation location;
  std::optional<double> value;
  std::optional<CellError> error;
};

struct ImputeResult {
  Table table;
  std::vector<CellResult> cells;
};

/// Fills every Missing target cell in ascending row order; per-cell failures are recorded, not thrown.
ImputeResult impute_column(const FormulaProgram& program, const Table& table,
                           int recursion_budget = kDefaultRecursionBudget);

/// Same as impute_column but only attempts rows in [begin, end), evaluating against the full table.
ImputeResult impute_rows(const FormulaProgram& program, const Table& table, std::size_t begin,
                         std::size_t end, int recursion_budget = kDefaultRecursionBudget);

}  // namespace deriva::dsl
