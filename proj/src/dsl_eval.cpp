#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "deriva/dsl.hpp"

namespace deriva::dsl {

namespace {

struct Resolved {
  enum class Kind { Let, Target, Column } kind;
  std::size_t index = 0;  // let index or column index
};

// Name resolution against a concrete table; computed once per program/table pair.
class BoundProgram {
 public:
  BoundProgram(const FormulaProgram& prog, const Table& table) : prog_(prog) {
    auto tcol = table.find_column(prog.target.name);
    if (!tcol) throw Error(Errc::UnknownColumn, prog.target.name);
    if (!table.is_numeric(*tcol)) throw Error(Errc::KindMismatch, "target column '" + prog.target.name + "' is not numeric");
    target_col_ = *tcol;
    for (std::size_t i = 0; i < prog.lets.size(); ++i) {
      if (table.find_column(prog.lets[i].name)) {
        throw Error(Errc::DuplicateLet, "let '" + prog.lets[i].name + "' collides with a table column");
      }
      names_.emplace(prog.lets[i].name, Resolved{Resolved::Kind::Let, i});
    }
    names_.emplace(prog.target.name, Resolved{Resolved::Kind::Target, target_col_});
    for (const auto& c : referenced_columns(prog)) {
      auto idx = table.find_column(c);
      if (!idx) throw Error(Errc::UnknownIdentifier, "'" + c + "' is not a column, let, or the target");
      if (!table.is_numeric(*idx)) throw Error(Errc::KindMismatch, "column '" + c + "' is not numeric");
      names_.emplace(c, Resolved{Resolved::Kind::Column, *idx});
    }
  }

  const FormulaProgram& program() const { return prog_; }
  std::size_t target_col() const { return target_col_; }
  const Resolved& lookup(const std::string& name) const { return names_.at(name); }

 private:
  const FormulaProgram& prog_;
  std::size_t target_col_ = 0;
  std::unordered_map<std::string, Resolved> names_;
};

std::string loc_text(long row, std::size_t col) {
  return "(" + std::to_string(row) + ", " + std::to_string(col) + ")";
}

class Evaluation {
 public:
  Evaluation(const BoundProgram& bound, const Table& table, int budget)
      : bound_(bound), table_(table), budget_(budget), rows_(static_cast<long>(table.row_count())) {}

  double target_at(long row, int depth) {
    if (depth > budget_) {
      throw Error(Errc::RecursionExhausted, "recursion budget exhausted at row " + std::to_string(row));
    }
    if (auto it = target_memo_.find(row); it != target_memo_.end()) return it->second;
    const double v = eval(*bound_.program().target.body, row, row, depth);
    target_memo_.emplace(row, v);
    return v;
  }

 private:
  static double checked(double v, long row) {
    if (!std::isfinite(v)) {
      throw Error(Errc::NonFiniteResult, "non-finite intermediate value at row " + std::to_string(row));
    }
    return v;
  }

  double eval(const Expr& e, long anchor, long target_row, int depth) {
    return std::visit(
        [&](const auto& n) -> double {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Const>) {
            return n.value;
          } else if constexpr (std::is_same_v<T, Ref>) {
            return read(n, anchor, target_row, depth);
          } else if constexpr (std::is_same_v<T, Binary>) {
            const double a = eval(*n.lhs, anchor, target_row, depth);
            const double b = eval(*n.rhs, anchor, target_row, depth);
            switch (n.op) {
              case BinaryOp::Add: return checked(a + b, anchor);
              case BinaryOp::Sub: return checked(a - b, anchor);
              case BinaryOp::Mul: return checked(a * b, anchor);
              case BinaryOp::Div:
                if (b == 0.0) throw Error(Errc::DivisionByZero, "division by zero at row " + std::to_string(anchor));
                return checked(a / b, anchor);
            }
            return 0.0;
          } else if constexpr (std::is_same_v<T, Call>) {
            const double a = eval(*n.args[0], anchor, target_row, depth);
            switch (n.fn) {
              case ScalarFn::Sqrt: return checked(std::sqrt(a), anchor);
              case ScalarFn::Abs: return std::abs(a);
              default: break;
            }
            const double b = eval(*n.args[1], anchor, target_row, depth);
            switch (n.fn) {
              case ScalarFn::Pow: return checked(std::pow(a, b), anchor);
              case ScalarFn::Max2: return std::max(a, b);
              case ScalarFn::Min2: return std::min(a, b);
              default: return 0.0;
            }
          } else {
            double acc = 0.0;
            for (long r = anchor + n.lo; r <= anchor + n.hi; ++r) {
              const double v = eval(*n.body, r, target_row, depth);
              if (r == anchor + n.lo) {
                acc = v;
                continue;
              }
              switch (n.fn) {
                case WindowFn::Mean:
                case WindowFn::Sum: acc += v; break;
                case WindowFn::Min: acc = std::min(acc, v); break;
                case WindowFn::Max: acc = std::max(acc, v); break;
              }
            }
            if (n.fn == WindowFn::Mean) acc /= static_cast<double>(n.hi - n.lo + 1);
            return checked(acc, anchor);
          }
        },
        e.node);
  }

  double read(const Ref& ref, long anchor, long target_row, int depth) {
    const long row = anchor + ref.offset;
    if (row < 0 || row >= rows_) {
      throw Error(Errc::WindowUnderflow, "row " + std::to_string(anchor) + " needs offset " +
                                             std::to_string(ref.offset) + " (row " + std::to_string(row) +
                                             " is outside the table)");
    }
    const auto& res = bound_.lookup(ref.name);
    switch (res.kind) {
      case Resolved::Kind::Let: {
        const auto key = std::make_tuple(res.index, row, target_row);
        if (auto it = let_memo_.find(key); it != let_memo_.end()) return it->second;
        const double v = eval(*bound_.program().lets[res.index].body, row, target_row, depth);
        let_memo_.emplace(key, v);
        return v;
      }
      case Resolved::Kind::Column: {
        const auto& cell = table_.rows()[static_cast<std::size_t>(row)][res.index];
        if (!cell.is_number()) {
          throw Error(Errc::MissingOperand, "missing operand at " + loc_text(row, res.index));
        }
        return cell.as_number();
      }
      case Resolved::Kind::Target: {
        if (row >= target_row) {
          throw Error(Errc::SelfReferenceForward,
                      "'" + ref.name + "' at row " + std::to_string(row) +
                          " is not strictly before the row being computed (" + std::to_string(target_row) + ")");
        }
        const auto& cell = table_.rows()[static_cast<std::size_t>(row)][res.index];
        if (cell.is_number()) return cell.as_number();
        return target_at(row, depth + 1);
      }
    }
    return 0.0;
  }

  const BoundProgram& bound_;
  const Table& table_;
  int budget_;
  long rows_;
  std::map<long, double> target_memo_;
  std::map<std::tuple<std::size_t, long, long>, double> let_memo_;
};

}  // namespace

double evaluate_cell(const FormulaProgram& program, const Table& table, std::size_t row, int recursion_budget) {
  if (row >= table.row_count()) {
    throw Error(Errc::OutOfBounds, "row " + std::to_string(row) + " of " + std::to_string(table.row_count()));
  }
  BoundProgram bound(program, table);
  Evaluation ev(bound, table, recursion_budget);
  return ev.target_at(static_cast<long>(row), 0);
}

ImputeResult impute_rows(const FormulaProgram& program, const Table& table, std::size_t begin, std::size_t end,
                         int recursion_budget) {
  BoundProgram bound(program, table);
  ImputeResult result{table, {}};
  end = std::min(end, table.row_count());
  const auto col = bound.target_col();
  for (std::size_t r = begin; r < end; ++r) {
    if (!table.rows()[r][col].is_missing()) continue;
    CellResult cr{{r, col}, std::nullopt, std::nullopt};
    try {
      // Cells filled earlier in this pass are visible to later self-recurrent rows.
      Evaluation ev(bound, result.table, recursion_budget);
      const double v = ev.target_at(static_cast<long>(r), 0);
      result.table.set({r, col}, Cell::number(v));
      cr.value = v;
    } catch (const Error& e) {
      cr.error = CellError{e.code(), e.what()};
    }
    result.cells.push_back(std::move(cr));
  }
  return result;
}

ImputeResult impute_column(const FormulaProgram& program, const Table& table, int recursion_budget) {
  return impute_rows(program, table, 0, table.row_count(), recursion_budget);
}

}  // namespace deriva::dsl
