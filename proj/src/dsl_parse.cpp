#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "deriva/dsl.hpp"

namespace deriva::dsl {

ExprPtr make_const(double v) { return std::make_shared<const Expr>(Expr{Const{v}}); }
ExprPtr make_ref(std::string name, int offset) {
  return std::make_shared<const Expr>(Expr{Ref{std::move(name), offset, {}}});
}
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
  return std::make_shared<const Expr>(Expr{Binary{op, std::move(lhs), std::move(rhs)}});
}
ExprPtr make_call(ScalarFn fn, std::vector<ExprPtr> args) {
  return std::make_shared<const Expr>(Expr{Call{fn, std::move(args)}});
}
ExprPtr make_window(WindowFn fn, ExprPtr body, int lo, int hi) {
  return std::make_shared<const Expr>(Expr{Window{fn, std::move(body), lo, hi}});
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Const>) {
          return std::bit_cast<std::uint64_t>(x.value) == std::bit_cast<std::uint64_t>(y.value);
        } else if constexpr (std::is_same_v<T, Ref>) {
          return x.name == y.name && x.offset == y.offset;
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.op == y.op && structurally_equal(*x.lhs, *y.lhs) && structurally_equal(*x.rhs, *y.rhs);
        } else if constexpr (std::is_same_v<T, Call>) {
          if (x.fn != y.fn || x.args.size() != y.args.size()) return false;
          for (std::size_t i = 0; i < x.args.size(); ++i) {
            if (!structurally_equal(*x.args[i], *y.args[i])) return false;
          }
          return true;
        } else {
          return x.fn == y.fn && x.lo == y.lo && x.hi == y.hi && structurally_equal(*x.body, *y.body);
        }
      },
      a.node);
}

bool structurally_equal(const FormulaProgram& a, const FormulaProgram& b) {
  if (a.lets.size() != b.lets.size() || a.target.name != b.target.name) return false;
  for (std::size_t i = 0; i < a.lets.size(); ++i) {
    if (a.lets[i].name != b.lets[i].name || !structurally_equal(*a.lets[i].body, *b.lets[i].body)) {
      return false;
    }
  }
  return structurally_equal(*a.target.body, *b.target.body);
}

namespace {

enum class Tok { Ident, Number, Plus, Minus, Star, Slash, LParen, RParen, LBracket, RBracket, Comma, Semi, Assign, End };

struct Token {
  Tok kind;
  std::string_view text;
  SourcePos pos;
};

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::Number: return "number";
    case Tok::Plus: return "'+'";
    case Tok::Minus: return "'-'";
    case Tok::Star: return "'*'";
    case Tok::Slash: return "'/'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::LBracket: return "'['";
    case Tok::RBracket: return "']'";
    case Tok::Comma: return "','";
    case Tok::Semi: return "';'";
    case Tok::Assign: return "'='";
    case Tok::End: return "end of input";
  }
  return "?";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_blank();
      const SourcePos pos{line_, col_};
      if (i_ >= src_.size()) {
        out.push_back({Tok::End, {}, pos});
        return out;
      }
      const char ch = src_[i_];
      if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
        const auto start = i_;
        while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_')) advance();
        out.push_back({Tok::Ident, src_.substr(start, i_ - start), pos});
      } else if (std::isdigit(static_cast<unsigned char>(ch))) {
        out.push_back({Tok::Number, lex_number(), pos});
      } else {
        Tok k;
        switch (ch) {
          case '+': k = Tok::Plus; break;
          case '-': k = Tok::Minus; break;
          case '*': k = Tok::Star; break;
          case '/': k = Tok::Slash; break;
          case '(': k = Tok::LParen; break;
          case ')': k = Tok::RParen; break;
          case '[': k = Tok::LBracket; break;
          case ']': k = Tok::RBracket; break;
          case ',': k = Tok::Comma; break;
          case ';': k = Tok::Semi; break;
          case '=': k = Tok::Assign; break;
          default:
            throw ParseError(Errc::SyntaxError, pos, std::string("unexpected character '") + ch + "'");
        }
        out.push_back({k, src_.substr(i_, 1), pos});
        advance();
      }
    }
  }

 private:
  void advance() {
    if (src_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void skip_blank() {
    while (i_ < src_.size()) {
      const char ch = src_[i_];
      if (ch == '#') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        advance();
      } else {
        break;
      }
    }
  }

  bool digit_at(std::size_t k) const {
    return k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]));
  }

  std::string_view lex_number() {
    const auto start = i_;
    while (digit_at(i_)) advance();
    if (i_ < src_.size() && src_[i_] == '.' && digit_at(i_ + 1)) {
      advance();
      while (digit_at(i_)) advance();
    }
    if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
      auto k = i_ + 1;
      if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
      if (digit_at(k)) {
        while (i_ < k) advance();
        while (digit_at(i_)) advance();
      }
    }
    return src_.substr(start, i_ - start);
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

struct FnInfo {
  enum class Kind { Scalar, Window } kind;
  ScalarFn scalar{};
  WindowFn window{};
  std::size_t arity = 0;
};

const std::unordered_map<std::string_view, FnInfo>& functions() {
  static const std::unordered_map<std::string_view, FnInfo> table{
      {"mean", {FnInfo::Kind::Window, {}, WindowFn::Mean, 3}},
      {"sum", {FnInfo::Kind::Window, {}, WindowFn::Sum, 3}},
      {"min", {FnInfo::Kind::Window, {}, WindowFn::Min, 3}},
      {"max", {FnInfo::Kind::Window, {}, WindowFn::Max, 3}},
      {"sqrt", {FnInfo::Kind::Scalar, ScalarFn::Sqrt, {}, 1}},
      {"abs", {FnInfo::Kind::Scalar, ScalarFn::Abs, {}, 1}},
      {"pow", {FnInfo::Kind::Scalar, ScalarFn::Pow, {}, 2}},
      {"max2", {FnInfo::Kind::Scalar, ScalarFn::Max2, {}, 2}},
      {"min2", {FnInfo::Kind::Scalar, ScalarFn::Min2, {}, 2}},
  };
  return table;
}

std::optional<long long> integer_literal(std::string_view text) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  FormulaProgram program() {
    FormulaProgram prog;
    std::vector<SourcePos> let_pos;
    while (peek().kind == Tok::Ident && peek().text == "let") {
      next();
      auto [name, pos] = expect_ident("let name");
      expect(Tok::Assign);
      auto body = expr();
      expect(Tok::Semi);
      prog.lets.push_back({std::move(name), std::move(body)});
      let_pos.push_back(pos);
    }
    if (!(peek().kind == Tok::Ident && peek().text == "target")) {
      fail(peek(), prog.lets.empty() ? "'let' or 'target'" : "'let' or 'target'");
    }
    next();
    auto [tname, tpos] = expect_ident("target column name");
    expect(Tok::Assign);
    auto tbody = expr();
    expect(Tok::Semi);
    if (peek().kind != Tok::End) fail(peek(), "end of input after target statement");
    prog.target = {std::move(tname), std::move(tbody)};

    resolve(prog, let_pos, tpos);
    return prog;
  }

 private:
  const Token& peek() const { return toks_[i_]; }
  const Token& next() { return toks_[i_++]; }

  [[noreturn]] void fail(const Token& at, std::string_view expected) const {
    throw ParseError(Errc::SyntaxError, at.pos,
                     "expected " + std::string(expected) + ", found " +
                         (at.kind == Tok::End ? std::string("end of input") : "'" + std::string(at.text) + "'"));
  }

  const Token& expect(Tok k) {
    if (peek().kind != k) fail(peek(), describe(k));
    return next();
  }

  std::pair<std::string, SourcePos> expect_ident(std::string_view what) {
    if (peek().kind != Tok::Ident) fail(peek(), what);
    const auto& t = next();
    return {std::string(t.text), t.pos};
  }

  ExprPtr expr() {
    auto lhs = term();
    while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
      const auto op = next().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      lhs = make_binary(op, std::move(lhs), term());
    }
    return lhs;
  }

  ExprPtr term() {
    auto lhs = factor();
    while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
      const auto op = next().kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
      lhs = make_binary(op, std::move(lhs), factor());
    }
    return lhs;
  }

  ExprPtr factor() {
    const auto& t = peek();
    switch (t.kind) {
      case Tok::Number:
        return make_const(number_value(next()));
      case Tok::Minus: {
        next();
        if (peek().kind == Tok::Number) return make_const(-number_value(next()));
        return make_binary(BinaryOp::Mul, make_const(-1.0), factor());
      }
      case Tok::LParen: {
        next();
        auto e = expr();
        expect(Tok::RParen);
        return e;
      }
      case Tok::Ident: {
        if (toks_[i_ + 1].kind == Tok::LParen) {
          if (functions().count(t.text)) return call();
          throw ParseError(Errc::UnknownIdentifier, t.pos, "unknown function '" + std::string(t.text) + "'");
        }
        return ref();
      }
      default:
        fail(t, "number, reference, call or '('");
    }
  }

  double number_value(const Token& t) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || !std::isfinite(v)) {
      throw ParseError(Errc::SyntaxError, t.pos, "number out of range: " + std::string(t.text));
    }
    return v;
  }

  ExprPtr ref() {
    const auto& id = next();
    Ref r{std::string(id.text), 0, id.pos};
    if (peek().kind == Tok::LBracket) {
      next();
      const auto& t = peek();
      if (t.kind != Tok::Ident || t.text != "t") fail(t, "'t'");
      next();
      if (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
        const bool neg = next().kind == Tok::Minus;
        const auto& n = peek();
        auto v = n.kind == Tok::Number ? integer_literal(n.text) : std::nullopt;
        if (!v || *v > 1'000'000) fail(n, "integer row offset");
        next();
        r.offset = static_cast<int>(neg ? -*v : *v);
      }
      expect(Tok::RBracket);
    }
    return std::make_shared<const Expr>(Expr{std::move(r)});
  }

  struct Arg {
    ExprPtr expr;
    SourcePos pos;
  };

  ExprPtr call() {
    const auto& name = next();
    const auto& info = functions().at(name.text);
    expect(Tok::LParen);
    std::vector<Arg> args;
    if (peek().kind != Tok::RParen) {
      while (true) {
        const auto pos = peek().pos;
        args.push_back({expr(), pos});
        if (peek().kind != Tok::Comma) break;
        next();
      }
    }
    expect(Tok::RParen);
    if (args.size() != info.arity) {
      throw ParseError(Errc::ArityError, name.pos,
                       std::string(name.text) + " takes " + std::to_string(info.arity) +
                           " argument(s), got " + std::to_string(args.size()));
    }
    if (info.kind == FnInfo::Kind::Scalar) {
      std::vector<ExprPtr> exprs;
      for (auto& a : args) exprs.push_back(std::move(a.expr));
      return make_call(info.scalar, std::move(exprs));
    }
    const int lo = window_offset(args[1]);
    const int hi = window_offset(args[2]);
    if (lo > hi) {
      throw ParseError(Errc::InvalidWindow, args[1].pos,
                       "window lower offset " + std::to_string(lo) + " exceeds upper offset " + std::to_string(hi));
    }
    return make_window(info.window, std::move(args[0].expr), lo, hi);
  }

  static int window_offset(const Arg& a) {
    const auto* c = std::get_if<Const>(&a.expr->node);
    if (!c || c->value != std::floor(c->value) || std::abs(c->value) > 1'000'000) {
      throw ParseError(Errc::SyntaxError, a.pos, "expected integer window offset");
    }
    return static_cast<int>(c->value);
  }

  static void collect_refs(const Expr& e, std::vector<const Ref*>& out) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Ref>) {
            out.push_back(&n);
          } else if constexpr (std::is_same_v<T, Binary>) {
            collect_refs(*n.lhs, out);
            collect_refs(*n.rhs, out);
          } else if constexpr (std::is_same_v<T, Call>) {
            for (const auto& a : n.args) collect_refs(*a, out);
          } else if constexpr (std::is_same_v<T, Window>) {
            collect_refs(*n.body, out);
          }
        },
        e.node);
  }

  static void resolve(const FormulaProgram& prog, const std::vector<SourcePos>& let_pos, SourcePos target_pos) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < prog.lets.size(); ++i) {
      const auto& name = prog.lets[i].name;
      if (functions().count(name) || name == "let" || name == "target") {
        throw ParseError(Errc::SyntaxError, let_pos[i], "reserved name '" + name + "'");
      }
      if (!index.emplace(name, i).second) {
        throw ParseError(Errc::DuplicateLet, let_pos[i], "let '" + name + "' defined twice");
      }
    }
    if (index.count(prog.target.name)) {
      throw ParseError(Errc::DuplicateLet, target_pos, "let '" + prog.target.name + "' shadows the target column");
    }
    // A let may only use lets defined before it.
    for (std::size_t i = 0; i < prog.lets.size(); ++i) {
      std::vector<const Ref*> refs;
      collect_refs(*prog.lets[i].body, refs);
      for (const auto* r : refs) {
        auto it = index.find(r->name);
        if (it != index.end() && it->second >= i) {
          throw ParseError(Errc::UnknownIdentifier, r->pos,
                           "'" + r->name + "' is not defined before let '" + prog.lets[i].name + "'");
        }
      }
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
};

const char* op_text(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return " + ";
    case BinaryOp::Sub: return " - ";
    case BinaryOp::Mul: return " * ";
    case BinaryOp::Div: return " / ";
  }
  return " ? ";
}

const char* fn_text(ScalarFn fn) {
  switch (fn) {
    case ScalarFn::Sqrt: return "sqrt";
    case ScalarFn::Abs: return "abs";
    case ScalarFn::Pow: return "pow";
    case ScalarFn::Max2: return "max2";
    case ScalarFn::Min2: return "min2";
  }
  return "?";
}

const char* fn_text(WindowFn fn) {
  switch (fn) {
    case WindowFn::Mean: return "mean";
    case WindowFn::Sum: return "sum";
    case WindowFn::Min: return "min";
    case WindowFn::Max: return "max";
  }
  return "?";
}

void format_into(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Const>) {
          out += format_double(n.value);
        } else if constexpr (std::is_same_v<T, Ref>) {
          out += n.name;
          out += "[t";
          if (n.offset > 0) out += "+" + std::to_string(n.offset);
          if (n.offset < 0) out += std::to_string(n.offset);
          out += "]";
        } else if constexpr (std::is_same_v<T, Binary>) {
          out += "(";
          format_into(*n.lhs, out);
          out += op_text(n.op);
          format_into(*n.rhs, out);
          out += ")";
        } else if constexpr (std::is_same_v<T, Call>) {
          out += fn_text(n.fn);
          out += "(";
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i) out += ", ";
            format_into(*n.args[i], out);
          }
          out += ")";
        } else {
          out += fn_text(n.fn);
          out += "(";
          format_into(*n.body, out);
          out += ", " + std::to_string(n.lo) + ", " + std::to_string(n.hi) + ")";
        }
      },
      e.node);
}

}  // namespace

FormulaProgram parse_program(std::string_view source) {
  return Parser(Lexer(source).run()).program();
}

std::string format_expr(const Expr& expr) {
  std::string out;
  format_into(expr, out);
  return out;
}

std::string format_program(const FormulaProgram& program) {
  std::string out;
  for (const auto& l : program.lets) {
    out += "let " + l.name + " = " + format_expr(*l.body) + ";\n";
  }
  out += "target " + program.target.name + " = " + format_expr(*program.target.body) + ";";
  return out;
}

namespace {
void collect_names(const Expr& e, std::vector<std::string>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Ref>) {
          out.push_back(n.name);
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect_names(*n.lhs, out);
          collect_names(*n.rhs, out);
        } else if constexpr (std::is_same_v<T, Call>) {
          for (const auto& a : n.args) collect_names(*a, out);
        } else if constexpr (std::is_same_v<T, Window>) {
          collect_names(*n.body, out);
        }
      },
      e.node);
}
}  // namespace

std::vector<std::string> referenced_columns(const FormulaProgram& program) {
  std::set<std::string> lets;
  for (const auto& l : program.lets) lets.insert(l.name);
  std::vector<std::string> names;
  for (const auto& l : program.lets) collect_names(*l.body, names);
  collect_names(*program.target.body, names);
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& n : names) {
    if (lets.count(n) || n == program.target.name) continue;
    if (seen.insert(n).second) out.push_back(std::move(n));
  }
  return out;
}

}  // namespace deriva::dsl
