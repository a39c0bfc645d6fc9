#pragma once

// Interpreter for the numpy-flavoured Python subset that heuristic functions
// are written in: a single `def` with assignments, subscript assignment,
// if/elif/else, for/while loops and return; scalar/vector/matrix values with
// elementwise arithmetic and the common np.* helpers. Anything outside the
// subset is rejected at load time with a message naming the construct.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eohs/core.hpp"
#include "eohs/problems.hpp"

namespace eohs::pysub {

struct Value {
  enum class Kind { none, scalar, vector, matrix };
  Kind kind = Kind::none;
  double s = 0.0;
  std::vector<double> v;
  bool boolean = false;  // scalar/vector produced by a comparison
  const DistanceMatrix* m = nullptr;

  static Value scalar(double x, bool b = false) {
    Value r;
    r.kind = Kind::scalar;
    r.s = x;
    r.boolean = b;
    return r;
  }
  static Value vector(std::vector<double> x, bool b = false) {
    Value r;
    r.kind = Kind::vector;
    r.v = std::move(x);
    r.boolean = b;
    return r;
  }
  static Value matrix(const DistanceMatrix* mat) {
    Value r;
    r.kind = Kind::matrix;
    r.m = mat;
    return r;
  }
};

inline Error eval_error(const std::string& what) { return Error("eval", what); }

// ---------------------------------------------------------------------------
// Tokens

enum class Tok { name, number, op, string, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0.0;
};

inline std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto is_name = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < line.size() && std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
      std::size_t j = i;
      while (j < line.size() && (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.')) ++j;
      if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
        ++j;
        if (j < line.size() && (line[j] == '+' || line[j] == '-')) ++j;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
      }
      const std::string txt(line.substr(i, j - i));
      out.push_back({Tok::number, txt, std::stod(txt)});
      i = j;
      continue;
    }
    if (is_name(c)) {
      std::size_t j = i;
      while (j < line.size() && is_name(line[j])) ++j;
      out.push_back({Tok::name, std::string(line.substr(i, j - i)), 0});
      i = j;
      continue;
    }
    if (c == '"' || c == '\'') {
      std::size_t j = i + 1;
      while (j < line.size() && line[j] != c) j += line[j] == '\\' ? 2 : 1;
      out.push_back({Tok::string, std::string(line.substr(i + 1, j - i - 1)), 0});
      i = j + 1;
      continue;
    }
    static const char* const kOps[] = {"**=", "//=", "**", "//", "<=", ">=", "==", "!=", "+=", "-=",
                                       "*=",  "/=",  "->", "+",  "-",  "*",  "/",  "%",  "<",  ">",
                                       "=",   "(",   ")",  "[",  "]",  ",",  ".",  ":",  "&",  "|", "~"};
    bool matched = false;
    for (const char* op : kOps) {
      const std::string_view o(op);
      if (line.substr(i, o.size()) == o) {
        out.push_back({Tok::op, std::string(o), 0});
        i += o.size();
        matched = true;
        break;
      }
    }
    if (!matched) throw Error("load", std::string("unexpected character '") + c + "'");
  }
  out.push_back({Tok::end, "", 0});
  return out;
}

// ---------------------------------------------------------------------------
// AST

struct Expr {
  enum class Kind { number, name, unary, binary, compare, boolop, not_, call, attr, subscript, tuple, list };
  Kind kind;
  std::string op;  // operator, name, attribute
  double number = 0.0;
  std::vector<std::unique_ptr<Expr>> kids;
};
using ExprPtr = std::unique_ptr<Expr>;

inline ExprPtr clone(const Expr& e) {
  auto c = std::make_unique<Expr>(Expr{e.kind, e.op, e.number, {}});
  for (const auto& k : e.kids) c->kids.push_back(clone(*k));
  return c;
}

struct Stmt {
  enum class Kind { assign, aug_assign, subscript_assign, ret, if_, while_, for_, pass, brk, cont, expr };
  Kind kind;
  std::string target;
  std::string op;
  ExprPtr value;
  ExprPtr index;  // subscript assignment
  ExprPtr cond;   // if/while; for: iterable
  std::vector<Stmt> body;
  std::vector<Stmt> orelse;
};

class ExprParser {
 public:
  explicit ExprParser(std::vector<Token> toks) : t_(std::move(toks)) {}

  const Token& peek(std::size_t k = 0) const { return t_[std::min(p_ + k, t_.size() - 1)]; }
  bool at_op(std::string_view op) const { return peek().kind == Tok::op && peek().text == op; }
  bool at_name(std::string_view n) const { return peek().kind == Tok::name && peek().text == n; }
  bool at_end() const { return peek().kind == Tok::end; }
  Token take() { return t_[p_ < t_.size() - 1 ? p_++ : p_]; }

  void expect_op(std::string_view op) {
    if (!at_op(op)) throw Error("load", "expected '" + std::string(op) + "' near '" + peek().text + "'");
    ++p_;
  }

  std::string expect_name() {
    if (peek().kind != Tok::name) throw Error("load", "expected a name near '" + peek().text + "'");
    return take().text;
  }

  ExprPtr expression() {
    auto e = or_expr();
    if (at_name("if")) throw Error("load", "conditional expressions are not supported");
    if (at_op(",")) {
      auto tup = node(Expr::Kind::tuple);
      tup->kids.push_back(std::move(e));
      while (at_op(",")) {
        take();
        if (at_end() || at_op(")") || at_op("]") || at_op(":")) break;
        tup->kids.push_back(or_expr());
      }
      return tup;
    }
    return e;
  }

  ExprPtr or_expr() {
    auto l = and_expr();
    while (at_name("or")) {
      take();
      l = binary(Expr::Kind::boolop, "or", std::move(l), and_expr());
    }
    return l;
  }

 private:
  static ExprPtr node(Expr::Kind k, std::string op = {}) {
    auto e = std::make_unique<Expr>();
    e->kind = k;
    e->op = std::move(op);
    return e;
  }
  static ExprPtr binary(Expr::Kind k, std::string op, ExprPtr l, ExprPtr r) {
    auto e = node(k, std::move(op));
    e->kids.push_back(std::move(l));
    e->kids.push_back(std::move(r));
    return e;
  }

  ExprPtr and_expr() {
    auto l = not_expr();
    while (at_name("and")) {
      take();
      l = binary(Expr::Kind::boolop, "and", std::move(l), not_expr());
    }
    return l;
  }

  ExprPtr not_expr() {
    if (at_name("not")) {
      take();
      auto e = node(Expr::Kind::not_);
      e->kids.push_back(not_expr());
      return e;
    }
    return comparison();
  }

  ExprPtr comparison() {
    auto l = bit_or();
    static const char* const kCmp[] = {"<", "<=", ">", ">=", "==", "!="};
    while (true) {
      std::string op;
      for (const char* c : kCmp) {
        if (at_op(c)) op = c;
      }
      if (op.empty()) {
        if (at_name("in") || (at_name("not") && peek(1).text == "in") || at_name("is")) {
          throw Error("load", "'" + peek().text + "' comparisons are not supported");
        }
        return l;
      }
      take();
      l = binary(Expr::Kind::compare, op, std::move(l), bit_or());
    }
  }

  ExprPtr bit_or() {
    auto l = bit_and();
    while (at_op("|")) {
      take();
      l = binary(Expr::Kind::binary, "|", std::move(l), bit_and());
    }
    return l;
  }

  ExprPtr bit_and() {
    auto l = arith();
    while (at_op("&")) {
      take();
      l = binary(Expr::Kind::binary, "&", std::move(l), arith());
    }
    return l;
  }

  ExprPtr arith() {
    auto l = term();
    while (at_op("+") || at_op("-")) {
      const auto op = take().text;
      l = binary(Expr::Kind::binary, op, std::move(l), term());
    }
    return l;
  }

  ExprPtr term() {
    auto l = unary();
    while (at_op("*") || at_op("/") || at_op("//") || at_op("%")) {
      const auto op = take().text;
      l = binary(Expr::Kind::binary, op, std::move(l), unary());
    }
    return l;
  }

  ExprPtr unary() {
    if (at_op("-") || at_op("+") || at_op("~")) {
      const auto op = take().text;
      auto e = node(Expr::Kind::unary, op);
      e->kids.push_back(unary());
      return e;
    }
    return power();
  }

  ExprPtr power() {
    auto base = postfix();
    if (at_op("**")) {
      take();
      return binary(Expr::Kind::binary, "**", std::move(base), unary());
    }
    return base;
  }

  ExprPtr postfix() {
    auto e = atom();
    while (true) {
      if (at_op(".")) {
        take();
        auto a = node(Expr::Kind::attr, expect_name());
        a->kids.push_back(std::move(e));
        e = std::move(a);
      } else if (at_op("(")) {
        take();
        auto c = node(Expr::Kind::call);
        c->kids.push_back(std::move(e));
        while (!at_op(")")) {
          if (peek().kind == Tok::name && peek(1).kind == Tok::op && peek(1).text == "=") {
            throw Error("load", "keyword arguments are not supported");
          }
          c->kids.push_back(or_expr());
          if (!at_op(",")) break;
          take();
        }
        expect_op(")");
        e = std::move(c);
      } else if (at_op("[")) {
        take();
        auto s = node(Expr::Kind::subscript);
        s->kids.push_back(std::move(e));
        if (at_op(":")) throw Error("load", "slices are not supported");
        s->kids.push_back(expression());
        if (at_op(":")) throw Error("load", "slices are not supported");
        expect_op("]");
        e = std::move(s);
      } else {
        return e;
      }
    }
  }

  ExprPtr atom() {
    const Token tok = take();
    if (tok.kind == Tok::number) {
      auto e = node(Expr::Kind::number);
      e->number = tok.number;
      return e;
    }
    if (tok.kind == Tok::name) {
      if (tok.text == "True" || tok.text == "False") {
        auto e = node(Expr::Kind::number, "bool");
        e->number = tok.text == "True" ? 1.0 : 0.0;
        return e;
      }
      static const char* const kReserved[] = {"lambda", "yield", "await", "def", "class", "import"};
      for (const char* r : kReserved) {
        if (tok.text == r) throw Error("load", "'" + tok.text + "' is not supported");
      }
      return node(Expr::Kind::name, tok.text);
    }
    if (tok.kind == Tok::op && tok.text == "(") {
      auto e = expression();
      expect_op(")");
      return e;
    }
    if (tok.kind == Tok::op && tok.text == "[") {
      auto l = node(Expr::Kind::list);
      while (!at_op("]")) {
        l->kids.push_back(or_expr());
        if (!at_op(",")) break;
        take();
      }
      expect_op("]");
      return l;
    }
    if (tok.kind == Tok::string) throw Error("load", "string values are not supported");
    throw Error("load", "unexpected token '" + tok.text + "'");
  }

  std::vector<Token> t_;
  std::size_t p_ = 0;
};

// ---------------------------------------------------------------------------
// Source -> logical lines -> statements

struct LogicalLine {
  std::size_t indent = 0;
  std::string text;
  std::size_t line_no = 0;
};

inline std::vector<LogicalLine> logical_lines(std::string_view src) {
  std::vector<std::string> phys;
  {
    std::size_t pos = 0;
    while (pos <= src.size()) {
      auto end = src.find('\n', pos);
      if (end == std::string_view::npos) end = src.size();
      std::string l(src.substr(pos, end - pos));
      if (!l.empty() && l.back() == '\r') l.pop_back();
      phys.push_back(std::move(l));
      pos = end + 1;
    }
  }
  std::vector<LogicalLine> out;
  std::size_t i = 0;
  while (i < phys.size()) {
    std::string line = phys[i];
    const std::size_t start_no = i + 1;
    ++i;
    const auto body = detail::trim(line);
    // Standalone string literal lines (docstrings), possibly multi-line.
    if (body.starts_with("\"\"\"") || body.starts_with("'''")) {
      const std::string q(body.substr(0, 3));
      if (body.size() >= 6 && body.substr(3).find(q) != std::string_view::npos) continue;
      while (i < phys.size() && phys[i].find(q) == std::string::npos) ++i;
      ++i;
      continue;
    }
    std::string text(detail::strip_line_comment(line));
    auto depth = [](const std::string& s) {
      int d = 0;
      for (char c : s) {
        if (c == '(' || c == '[' || c == '{') ++d;
        if (c == ')' || c == ']' || c == '}') --d;
      }
      return d;
    };
    int open = depth(text);
    while ((open > 0 || (!detail::trim(text).empty() && detail::trim(text).back() == '\\')) &&
           i < phys.size()) {
      while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
      if (!text.empty() && text.back() == '\\') text.pop_back();
      const std::string next(detail::strip_line_comment(phys[i++]));
      text += " " + next;
      open = depth(text);
    }
    if (detail::trim(text).empty()) continue;
    std::size_t indent = 0;
    for (char c : text) {
      if (c == ' ') ++indent;
      else if (c == '\t') indent = (indent / 8 + 1) * 8;
      else break;
    }
    out.push_back({indent, std::string(detail::trim(text)), start_no});
  }
  return out;
}

struct Function {
  std::string name;
  std::vector<std::string> params;
  std::vector<Stmt> body;
};

class Loader {
 public:
  explicit Loader(std::vector<LogicalLine> lines) : lines_(std::move(lines)) {}

  Function load(std::string_view required_name) {
    Function fn;
    bool have = false;
    while (pos_ < lines_.size()) {
      const auto& ln = lines_[pos_];
      const std::string& t = ln.text;
      if (t.starts_with("import ") || t.starts_with("from ")) {
        if (ln.indent != 0) fail(ln, "unexpected indentation");
        ++pos_;
        continue;
      }
      if (t.starts_with("def ")) {
        if (ln.indent != 0) fail(ln, "nested function definitions are not supported");
        Function f = parse_def(ln);
        if (f.name != required_name) {
          fail(ln, "helper function '" + f.name + "' is not supported");
        }
        if (have) fail(ln, "duplicate definition of " + f.name);
        fn = std::move(f);
        have = true;
        continue;
      }
      fail(ln, "stray top-level code");
    }
    if (!have) throw Error("load", "no definition of " + std::string(required_name));
    return fn;
  }

 private:
  [[noreturn]] static void fail(const LogicalLine& ln, const std::string& what) {
    throw Error("load", "line " + std::to_string(ln.line_no) + ": " + what);
  }

  Function parse_def(const LogicalLine& ln) {
    ExprParser p(tokenize(ln.text));
    p.take();  // def
    Function f;
    f.name = p.expect_name();
    p.expect_op("(");
    while (!p.at_op(")")) {
      f.params.push_back(p.expect_name());
      // Skip annotations and defaults up to the next top-level comma.
      int depth = 0;
      while (!p.at_end()) {
        if (depth == 0 && (p.at_op(",") || p.at_op(")"))) break;
        if (p.at_op("(") || p.at_op("[")) ++depth;
        if (p.at_op(")") || p.at_op("]")) --depth;
        p.take();
      }
      if (p.at_op(",")) p.take();
    }
    p.expect_op(")");
    while (!p.at_end() && !p.at_op(":")) p.take();  // return annotation
    p.expect_op(":");
    if (!p.at_end()) fail(ln, "function body must start on the next line");
    ++pos_;
    if (pos_ >= lines_.size() || lines_[pos_].indent <= ln.indent) fail(ln, "empty function body");
    f.body = block(lines_[pos_].indent);
    return f;
  }

  std::vector<Stmt> block(std::size_t indent) {
    std::vector<Stmt> out;
    while (pos_ < lines_.size() && lines_[pos_].indent >= indent) {
      if (lines_[pos_].indent > indent) fail(lines_[pos_], "unexpected indentation");
      out.push_back(statement(indent));
    }
    return out;
  }

  // Body of a compound statement: either inline after ':' or an indented block.
  std::vector<Stmt> suite(ExprParser& p, const LogicalLine& ln) {
    p.expect_op(":");
    ++pos_;
    if (!p.at_end()) {
      std::vector<Stmt> one;
      one.push_back(simple(p, ln));
      return one;
    }
    if (pos_ >= lines_.size() || lines_[pos_].indent <= ln.indent) fail(ln, "expected an indented block");
    return block(lines_[pos_].indent);
  }

  Stmt statement(std::size_t indent) {
    const LogicalLine& ln = lines_[pos_];
    ExprParser p(tokenize(ln.text));
    if (p.at_name("if")) {
      p.take();
      Stmt s;
      s.kind = Stmt::Kind::if_;
      s.cond = p.expression();
      s.body = suite(p, ln);
      if (pos_ < lines_.size() && lines_[pos_].indent == indent) {
        const auto& nxt = lines_[pos_];
        if (nxt.text.starts_with("elif ") || nxt.text.starts_with("elif(")) {
          // Rewrite "elif" as a nested if inside else.
          LogicalLine rewritten = nxt;
          rewritten.text = nxt.text.substr(2);
          lines_[pos_] = rewritten;
          s.orelse.push_back(statement(indent));
        } else if (nxt.text.starts_with("else")) {
          ExprParser q(tokenize(nxt.text));
          q.take();
          s.orelse = suite(q, nxt);
        }
      }
      return s;
    }
    if (p.at_name("while")) {
      p.take();
      Stmt s;
      s.kind = Stmt::Kind::while_;
      s.cond = p.expression();
      s.body = suite(p, ln);
      return s;
    }
    if (p.at_name("for")) {
      p.take();
      Stmt s;
      s.kind = Stmt::Kind::for_;
      s.target = p.expect_name();
      if (p.at_op(",")) fail(ln, "tuple unpacking is not supported");
      if (!p.at_name("in")) fail(ln, "expected 'in'");
      p.take();
      s.cond = p.expression();
      s.body = suite(p, ln);
      return s;
    }
    if (p.at_name("else") || p.at_name("elif")) fail(ln, "'" + p.peek().text + "' without 'if'");
    static const char* const kUnsupported[] = {"def", "class", "try", "with", "import", "from",
                                               "lambda", "global", "nonlocal", "raise", "assert",
                                               "del", "yield", "except", "finally"};
    for (const char* u : kUnsupported) {
      if (p.at_name(u)) fail(ln, "'" + std::string(u) + "' is not supported inside the function");
    }
    Stmt s = simple(p, ln);
    ++pos_;
    return s;
  }

  Stmt simple(ExprParser& p, const LogicalLine& ln) {
    Stmt s;
    if (p.at_name("return")) {
      p.take();
      s.kind = Stmt::Kind::ret;
      if (!p.at_end()) s.value = p.expression();
    } else if (p.at_name("pass")) {
      p.take();
      s.kind = Stmt::Kind::pass;
    } else if (p.at_name("break")) {
      p.take();
      s.kind = Stmt::Kind::brk;
    } else if (p.at_name("continue")) {
      p.take();
      s.kind = Stmt::Kind::cont;
    } else {
      auto lhs = p.expression();
      static const char* const kAug[] = {"+=", "-=", "*=", "/=", "//=", "**="};
      std::string aug;
      for (const char* a : kAug) {
        if (p.at_op(a)) aug = a;
      }
      if (p.at_op("=") || !aug.empty()) {
        p.take();
        auto rhs = p.expression();
        if (p.at_op("=")) fail(ln, "chained assignment is not supported");
        if (lhs->kind == Expr::Kind::name) {
          s.kind = aug.empty() ? Stmt::Kind::assign : Stmt::Kind::aug_assign;
          s.target = lhs->op;
          s.op = aug.empty() ? "" : aug.substr(0, aug.size() - 1);
          s.value = std::move(rhs);
        } else if (lhs->kind == Expr::Kind::subscript && lhs->kids[0]->kind == Expr::Kind::name) {
          s.kind = Stmt::Kind::subscript_assign;
          s.target = lhs->kids[0]->op;
          s.index = clone(*lhs->kids[1]);
          if (aug.empty()) {
            s.value = std::move(rhs);
          } else {
            // x[i] op= v  ->  x[i] = x[i] op v
            auto combined = std::make_unique<Expr>(Expr{Expr::Kind::binary, aug.substr(0, aug.size() - 1), 0.0, {}});
            combined->kids.push_back(std::move(lhs));
            combined->kids.push_back(std::move(rhs));
            s.value = std::move(combined);
          }
        } else {
          fail(ln, "unsupported assignment target");
        }
      } else {
        s.kind = Stmt::Kind::expr;
        s.value = std::move(lhs);
      }
    }
    if (!p.at_end()) fail(ln, "unexpected '" + p.peek().text + "'");
    return s;
  }

  std::vector<LogicalLine> lines_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

namespace ops {

inline bool integral(double x) { return std::isfinite(x) && x == std::floor(x); }

inline std::size_t as_index(double x, std::size_t n) {
  if (!integral(x)) throw eval_error("index is not an integer");
  auto i = static_cast<std::int64_t>(x);
  if (i < 0) i += static_cast<std::int64_t>(n);
  if (i < 0 || i >= static_cast<std::int64_t>(n)) throw eval_error("index out of range");
  return static_cast<std::size_t>(i);
}

inline bool truth(const Value& v) {
  switch (v.kind) {
    case Value::Kind::scalar: return v.s != 0.0;
    case Value::Kind::none: return false;
    case Value::Kind::vector:
      if (v.v.size() == 1) return v.v[0] != 0.0;
      throw eval_error("truth value of an array with more than one element is ambiguous");
    case Value::Kind::matrix: throw eval_error("truth value of a matrix is ambiguous");
  }
  return false;
}

inline const std::vector<double>& vec(const Value& v, const char* fn) {
  if (v.kind != Value::Kind::vector) throw eval_error(std::string(fn) + " expects an array");
  return v.v;
}

inline double num(const Value& v, const char* fn) {
  if (v.kind == Value::Kind::scalar) return v.s;
  if (v.kind == Value::Kind::vector && v.v.size() == 1) return v.v[0];
  throw eval_error(std::string(fn) + " expects a scalar");
}

template <class F>
Value map1(const Value& a, F f) {
  if (a.kind == Value::Kind::scalar) return Value::scalar(f(a.s));
  if (a.kind == Value::Kind::vector) {
    std::vector<double> out(a.v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.v[i]);
    return Value::vector(std::move(out));
  }
  throw eval_error("elementwise operation on an unsupported value");
}

template <class F>
Value map2(const Value& a, const Value& b, F f, bool boolean = false) {
  using K = Value::Kind;
  if (a.kind == K::scalar && b.kind == K::scalar) return Value::scalar(f(a.s, b.s), boolean);
  if (a.kind == K::vector && b.kind == K::scalar) {
    std::vector<double> out(a.v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.v[i], b.s);
    return Value::vector(std::move(out), boolean);
  }
  if (a.kind == K::scalar && b.kind == K::vector) {
    std::vector<double> out(b.v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.s, b.v[i]);
    return Value::vector(std::move(out), boolean);
  }
  if (a.kind == K::vector && b.kind == K::vector) {
    if (a.v.size() != b.v.size()) {
      throw eval_error("operands could not be broadcast together with shapes (" +
                       std::to_string(a.v.size()) + ",) (" + std::to_string(b.v.size()) + ",)");
    }
    std::vector<double> out(a.v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.v[i], b.v[i]);
    return Value::vector(std::move(out), boolean);
  }
  throw eval_error("elementwise operation on an unsupported value");
}

inline double py_floordiv(double a, double b) { return std::floor(a / b); }
inline double py_mod(double a, double b) {
  const double r = std::fmod(a, b);
  return (r != 0.0 && ((r < 0) != (b < 0))) ? r + b : r;
}

inline Value binary(const std::string& op, const Value& a, const Value& b) {
  if (op == "+") return map2(a, b, [](double x, double y) { return x + y; });
  if (op == "-") return map2(a, b, [](double x, double y) { return x - y; });
  if (op == "*") return map2(a, b, [](double x, double y) { return x * y; });
  if (op == "/") {
    return map2(a, b, [](double x, double y) {
      if (y == 0.0) {
        if (x == 0.0) return std::numeric_limits<double>::quiet_NaN();
        return std::copysign(std::numeric_limits<double>::infinity(), x) * std::copysign(1.0, y);
      }
      return x / y;
    });
  }
  if (op == "//") return map2(a, b, py_floordiv);
  if (op == "%") return map2(a, b, py_mod);
  if (op == "**") return map2(a, b, [](double x, double y) { return std::pow(x, y); });
  if (op == "&") return map2(a, b, [](double x, double y) { return (x != 0 && y != 0) ? 1.0 : 0.0; }, true);
  if (op == "|") return map2(a, b, [](double x, double y) { return (x != 0 || y != 0) ? 1.0 : 0.0; }, true);
  throw eval_error("unsupported operator " + op);
}

inline Value compare(const std::string& op, const Value& a, const Value& b) {
  auto c = [&](auto f) { return map2(a, b, [f](double x, double y) { return f(x, y) ? 1.0 : 0.0; }, true); };
  if (op == "<") return c(std::less<double>());
  if (op == "<=") return c(std::less_equal<double>());
  if (op == ">") return c(std::greater<double>());
  if (op == ">=") return c(std::greater_equal<double>());
  if (op == "==") return c(std::equal_to<double>());
  if (op == "!=") return c(std::not_equal_to<double>());
  throw eval_error("unsupported comparison " + op);
}

inline std::size_t argbest(const std::vector<double>& v, bool want_min) {
  if (v.empty()) throw eval_error("attempt to get argmin/argmax of an empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) return i;
    if (want_min ? v[i] < v[best] : v[i] > v[best]) best = i;
  }
  return best;
}

inline double reduce(const Value& a, const std::string& fn) {
  if (a.kind == Value::Kind::scalar) {
    if (fn == "any") return a.s != 0.0;
    if (fn == "all") return a.s != 0.0;
    if (fn == "std" || fn == "var") return 0.0;
    return a.s;
  }
  const auto& v = vec(a, fn.c_str());
  if (fn == "sum") return std::accumulate(v.begin(), v.end(), 0.0);
  if (fn == "any") return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
  if (fn == "all") return std::all_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
  if (v.empty()) {
    if (fn == "mean" || fn == "std" || fn == "var") return std::numeric_limits<double>::quiet_NaN();
    throw eval_error("zero-size array to reduction operation " + fn);
  }
  if (fn == "min") return *std::min_element(v.begin(), v.end());
  if (fn == "max") return *std::max_element(v.begin(), v.end());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (fn == "mean") return mean;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(v.size());
  if (fn == "var") return var;
  if (fn == "std") return std::sqrt(var);
  if (fn == "argmin") return static_cast<double>(argbest(v, true));
  if (fn == "argmax") return static_cast<double>(argbest(v, false));
  throw eval_error("unsupported reduction " + fn);
}

}  // namespace ops

/// A loaded heuristic function.
class Program {
 public:
  Program(std::string_view source, std::string_view required_name)
      : fn_(Loader(logical_lines(source)).load(required_name)) {}

  const std::string& name() const { return fn_.name; }
  const std::vector<std::string>& params() const { return fn_.params; }

  /// Calls the function with positional arguments.
  Value call(std::vector<Value> args) const {
    if (args.size() != fn_.params.size()) {
      throw eval_error(fn_.name + "() takes " + std::to_string(fn_.params.size()) +
                       " positional arguments but " + std::to_string(args.size()) + " were given");
    }
    Frame f;
    for (std::size_t i = 0; i < args.size(); ++i) f.vars[fn_.params[i]] = std::move(args[i]);
    f.steps = 0;
    exec_block(fn_.body, f);
    return f.returned ? std::move(f.result) : Value{};
  }

 private:
  enum class Flow { normal, ret, brk, cont };

  struct Frame {
    std::unordered_map<std::string, Value> vars;
    Value result;
    bool returned = false;
    std::uint64_t steps = 0;
  };

  Flow exec_block(const std::vector<Stmt>& body, Frame& f) const {
    for (const auto& s : body) {
      const Flow fl = exec(s, f);
      if (fl != Flow::normal) return fl;
    }
    return Flow::normal;
  }

  Flow exec(const Stmt& s, Frame& f) const {
    ++f.steps;
    switch (s.kind) {
      case Stmt::Kind::assign: f.vars[s.target] = eval(*s.value, f); return Flow::normal;
      case Stmt::Kind::aug_assign: {
        const auto it = f.vars.find(s.target);
        if (it == f.vars.end()) throw eval_error("name '" + s.target + "' is not defined");
        it->second = ops::binary(s.op, it->second, eval(*s.value, f));
        return Flow::normal;
      }
      case Stmt::Kind::subscript_assign: {
        const auto it = f.vars.find(s.target);
        if (it == f.vars.end()) throw eval_error("name '" + s.target + "' is not defined");
        assign_index(it->second, eval(*s.index, f), eval(*s.value, f));
        return Flow::normal;
      }
      case Stmt::Kind::ret:
        f.result = s.value ? eval(*s.value, f) : Value{};
        f.returned = true;
        return Flow::ret;
      case Stmt::Kind::if_:
        if (ops::truth(eval(*s.cond, f))) return exec_block(s.body, f);
        return exec_block(s.orelse, f);
      case Stmt::Kind::while_:
        while (ops::truth(eval(*s.cond, f))) {
          ++f.steps;
          const Flow fl = exec_block(s.body, f);
          if (fl == Flow::brk) break;
          if (fl == Flow::ret) return fl;
        }
        return Flow::normal;
      case Stmt::Kind::for_: {
        const Value it = eval(*s.cond, f);
        std::vector<double> items;
        if (it.kind == Value::Kind::vector) items = it.v;
        else if (it.kind == Value::Kind::matrix) throw eval_error("iterating a matrix is not supported");
        else throw eval_error("object is not iterable");
        for (double x : items) {
          f.vars[s.target] = Value::scalar(x);
          const Flow fl = exec_block(s.body, f);
          if (fl == Flow::brk) break;
          if (fl == Flow::ret) return fl;
        }
        return Flow::normal;
      }
      case Stmt::Kind::pass: return Flow::normal;
      case Stmt::Kind::brk: return Flow::brk;
      case Stmt::Kind::cont: return Flow::cont;
      case Stmt::Kind::expr: eval(*s.value, f); return Flow::normal;
    }
    return Flow::normal;
  }

  static void assign_index(Value& target, const Value& index, const Value& value) {
    if (target.kind != Value::Kind::vector) throw eval_error("item assignment needs an array");
    auto& v = target.v;
    auto put = [&](std::size_t i, std::size_t k) {
      if (value.kind == Value::Kind::scalar) v[i] = value.s;
      else if (value.kind == Value::Kind::vector && k < value.v.size()) v[i] = value.v[k];
      else throw eval_error("could not broadcast assignment value");
    };
    if (index.kind == Value::Kind::scalar) {
      put(ops::as_index(index.s, v.size()), 0);
      if (value.kind == Value::Kind::vector && value.v.size() != 1) {
        throw eval_error("setting an array element with a sequence");
      }
    } else if (index.kind == Value::Kind::vector && index.boolean) {
      if (index.v.size() != v.size()) throw eval_error("boolean index did not match array length");
      std::size_t k = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (index.v[i] != 0.0) put(i, k++);
      }
    } else if (index.kind == Value::Kind::vector) {
      for (std::size_t k = 0; k < index.v.size(); ++k) put(ops::as_index(index.v[k], v.size()), k);
    } else {
      throw eval_error("unsupported index");
    }
    target.boolean = false;
  }

  static Value index_value(const Value& base, const Value& idx) {
    using K = Value::Kind;
    if (base.kind == K::vector) {
      if (idx.kind == K::scalar) return Value::scalar(base.v[ops::as_index(idx.s, base.v.size())], base.boolean);
      if (idx.kind == K::vector && idx.boolean) {
        if (idx.v.size() != base.v.size()) throw eval_error("boolean index did not match array length");
        std::vector<double> out;
        for (std::size_t i = 0; i < idx.v.size(); ++i) {
          if (idx.v[i] != 0.0) out.push_back(base.v[i]);
        }
        return Value::vector(std::move(out), base.boolean);
      }
      if (idx.kind == K::vector) {
        std::vector<double> out(idx.v.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = base.v[ops::as_index(idx.v[i], base.v.size())];
        return Value::vector(std::move(out), base.boolean);
      }
    }
    if (base.kind == K::matrix && idx.kind == K::scalar) {
      const auto row = base.m->row(ops::as_index(idx.s, base.m->size()));
      return Value::vector(std::vector<double>(row.begin(), row.end()));
    }
    throw eval_error("unsupported subscript");
  }

  Value eval(const Expr& e, Frame& f) const {
    using K = Expr::Kind;
    switch (e.kind) {
      case K::number: return Value::scalar(e.number, e.op == "bool");
      case K::name: {
        const auto it = f.vars.find(e.op);
        if (it != f.vars.end()) return it->second;
        if (e.op == "None") return Value{};
        throw eval_error("name '" + e.op + "' is not defined");
      }
      case K::unary: {
        const Value v = eval(*e.kids[0], f);
        if (e.op == "-") return ops::map1(v, [](double x) { return -x; });
        if (e.op == "~") {
          Value r = ops::map1(v, [](double x) { return x != 0.0 ? 0.0 : 1.0; });
          r.boolean = true;
          return r;
        }
        return v;
      }
      case K::binary: return ops::binary(e.op, eval(*e.kids[0], f), eval(*e.kids[1], f));
      case K::compare: return ops::compare(e.op, eval(*e.kids[0], f), eval(*e.kids[1], f));
      case K::boolop: {
        Value l = eval(*e.kids[0], f);
        const bool lt = ops::truth(l);
        if (e.op == "and") return lt ? eval(*e.kids[1], f) : l;
        return lt ? l : eval(*e.kids[1], f);
      }
      case K::not_: return Value::scalar(ops::truth(eval(*e.kids[0], f)) ? 0.0 : 1.0, true);
      case K::subscript: {
        const Value base = eval(*e.kids[0], f);
        const Expr& ix = *e.kids[1];
        if (ix.kind == K::tuple) {
          if (base.kind != Value::Kind::matrix || ix.kids.size() != 2) throw eval_error("unsupported subscript");
          const Value r = eval(*ix.kids[0], f);
          const Value c = eval(*ix.kids[1], f);
          if (r.kind == Value::Kind::scalar) return index_value(index_value(base, r), c);
          if (c.kind == Value::Kind::scalar) {
            // Column of a symmetric distance matrix equals the row.
            return index_value(index_value(base, c), r);
          }
          throw eval_error("unsupported matrix subscript");
        }
        return index_value(base, eval(ix, f));
      }
      case K::list: {
        std::vector<double> out;
        for (const auto& k : e.kids) out.push_back(ops::num(eval(*k, f), "list element"));
        return Value::vector(std::move(out));
      }
      case K::tuple: throw eval_error("tuples are not supported here");
      case K::attr: {
        if (e.kids[0]->kind == K::name && (e.kids[0]->op == "np" || e.kids[0]->op == "numpy" ||
                                           e.kids[0]->op == "math")) {
          if (e.op == "inf") return Value::scalar(std::numeric_limits<double>::infinity());
          if (e.op == "pi") return Value::scalar(std::numbers::pi);
          if (e.op == "e") return Value::scalar(std::numbers::e);
          throw eval_error("module attribute '" + e.op + "' is not supported");
        }
        const Value v = eval(*e.kids[0], f);
        if (e.op == "size") {
          if (v.kind == Value::Kind::vector) return Value::scalar(static_cast<double>(v.v.size()));
          if (v.kind == Value::Kind::scalar) return Value::scalar(1.0);
        }
        throw eval_error("attribute '" + e.op + "' is not supported");
      }
      case K::call: return call(e, f);
    }
    throw eval_error("unsupported expression");
  }

  Value call(const Expr& e, Frame& f) const {
    const Expr& callee = *e.kids[0];
    std::vector<Value> args;
    for (std::size_t i = 1; i < e.kids.size(); ++i) args.push_back(eval(*e.kids[i], f));
    auto need = [&](std::size_t n, const std::string& fn) {
      if (args.size() != n) throw eval_error(fn + "() takes " + std::to_string(n) + " arguments");
    };
    std::string fn;
    if (callee.kind == Expr::Kind::name) {
      fn = callee.op;
    } else if (callee.kind == Expr::Kind::attr && callee.kids[0]->kind == Expr::Kind::name &&
               (callee.kids[0]->op == "np" || callee.kids[0]->op == "numpy" || callee.kids[0]->op == "math")) {
      fn = "np." + callee.op;
    } else if (callee.kind == Expr::Kind::attr) {
      // Array methods: x.sum(), x.argmin(), ...
      const Value self = eval(*callee.kids[0], f);
      const std::string& m = callee.op;
      if (m == "copy") return self;
      if (m == "argmin" || m == "argmax" || m == "sum" || m == "min" || m == "max" || m == "mean" ||
          m == "std" || m == "var" || m == "any" || m == "all") {
        if (!args.empty()) throw eval_error("axis arguments are not supported");
        return Value::scalar(ops::reduce(self, m), m == "any" || m == "all");
      }
      throw eval_error("method '" + m + "' is not supported");
    } else {
      throw eval_error("unsupported call");
    }

    static const std::unordered_map<std::string, double (*)(double)> kUnary = {
        {"np.abs", [](double x) { return std::abs(x); }},
        {"abs", [](double x) { return std::abs(x); }},
        {"np.absolute", [](double x) { return std::abs(x); }},
        {"np.fabs", [](double x) { return std::abs(x); }},
        {"np.sqrt", [](double x) { return std::sqrt(x); }},
        {"np.exp", [](double x) { return std::exp(x); }},
        {"np.log", [](double x) { return std::log(x); }},
        {"np.log1p", [](double x) { return std::log1p(x); }},
        {"np.log2", [](double x) { return std::log2(x); }},
        {"np.log10", [](double x) { return std::log10(x); }},
        {"np.square", [](double x) { return x * x; }},
        {"np.floor", [](double x) { return std::floor(x); }},
        {"np.ceil", [](double x) { return std::ceil(x); }},
        {"np.round", [](double x) { return std::nearbyint(x); }},
        {"np.tanh", [](double x) { return std::tanh(x); }},
        {"np.sin", [](double x) { return std::sin(x); }},
        {"np.cos", [](double x) { return std::cos(x); }},
        {"np.sign", [](double x) { return static_cast<double>((x > 0) - (x < 0)); }},
        {"float", [](double x) { return x; }},
        {"int", [](double x) { return std::trunc(x); }},
    };
    if (const auto u = kUnary.find(fn); u != kUnary.end()) {
      need(1, fn);
      return ops::map1(args[0], u->second);
    }
    if (fn == "np.minimum" || fn == "np.maximum" || fn == "np.power") {
      need(2, fn);
      if (fn == "np.power") return ops::binary("**", args[0], args[1]);
      return ops::map2(args[0], args[1], [max = fn == "np.maximum"](double x, double y) {
        return max ? std::max(x, y) : std::min(x, y);
      });
    }
    if (fn == "np.clip") {
      need(3, fn);
      return ops::map2(ops::map2(args[0], args[1], [](double x, double lo) { return std::max(x, lo); }),
                       args[2], [](double x, double hi) { return std::min(x, hi); });
    }
    if (fn == "np.where") {
      need(3, fn);
      const Value& c = args[0];
      if (c.kind == Value::Kind::scalar) return ops::truth(c) ? args[1] : args[2];
      const auto& cv = ops::vec(c, "np.where");
      std::vector<double> out(cv.size());
      auto pickv = [&](const Value& v, std::size_t i) {
        if (v.kind == Value::Kind::scalar) return v.s;
        if (v.kind == Value::Kind::vector && v.v.size() == cv.size()) return v.v[i];
        throw eval_error("np.where operands could not be broadcast");
      };
      for (std::size_t i = 0; i < cv.size(); ++i) out[i] = cv[i] != 0.0 ? pickv(args[1], i) : pickv(args[2], i);
      return Value::vector(std::move(out));
    }
    if (fn == "np.isinf" || fn == "np.isfinite" || fn == "np.isnan") {
      need(1, fn);
      Value r = ops::map1(args[0], [&fn](double x) {
        if (fn == "np.isinf") return std::isinf(x) ? 1.0 : 0.0;
        if (fn == "np.isnan") return std::isnan(x) ? 1.0 : 0.0;
        return std::isfinite(x) ? 1.0 : 0.0;
      });
      r.boolean = true;
      return r;
    }
    if (fn == "np.logical_and" || fn == "np.logical_or") {
      need(2, fn);
      return ops::binary(fn == "np.logical_and" ? "&" : "|", args[0], args[1]);
    }
    if (fn == "np.logical_not") {
      need(1, fn);
      Value r = ops::map1(args[0], [](double x) { return x != 0.0 ? 0.0 : 1.0; });
      r.boolean = true;
      return r;
    }
    if (fn == "np.argmin" || fn == "np.argmax" || fn == "np.sum" || fn == "np.min" || fn == "np.max" ||
        fn == "np.amin" || fn == "np.amax" || fn == "np.mean" || fn == "np.std" || fn == "np.var" ||
        fn == "np.any" || fn == "np.all" || fn == "np.median") {
      need(1, fn);
      std::string r = fn.substr(3);
      if (r == "amin") r = "min";
      if (r == "amax") r = "max";
      if (r == "median") {
        auto v = ops::vec(args[0], "np.median");
        if (v.empty()) return Value::scalar(std::numeric_limits<double>::quiet_NaN());
        std::sort(v.begin(), v.end());
        const std::size_t h = v.size() / 2;
        return Value::scalar(v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]));
      }
      return Value::scalar(ops::reduce(args[0], r), r == "any" || r == "all");
    }
    if (fn == "min" || fn == "max") {
      if (args.size() == 1) return Value::scalar(ops::reduce(args[0], fn));
      if (args.empty()) throw eval_error(fn + " expected at least 1 argument");
      double best = ops::num(args[0], fn.c_str());
      for (std::size_t i = 1; i < args.size(); ++i) {
        const double x = ops::num(args[i], fn.c_str());
        best = fn == "min" ? std::min(best, x) : std::max(best, x);
      }
      return Value::scalar(best);
    }
    if (fn == "sum") {
      need(1, fn);
      return Value::scalar(ops::reduce(args[0], "sum"));
    }
    if (fn == "len") {
      need(1, fn);
      if (args[0].kind == Value::Kind::vector) return Value::scalar(static_cast<double>(args[0].v.size()));
      if (args[0].kind == Value::Kind::matrix) return Value::scalar(static_cast<double>(args[0].m->size()));
      throw eval_error("object has no len()");
    }
    if (fn == "range" || fn == "np.arange") {
      if (args.empty() || args.size() > 3) throw eval_error(fn + " takes 1 to 3 arguments");
      double lo = 0, hi, step = 1;
      if (args.size() == 1) {
        hi = ops::num(args[0], fn.c_str());
      } else {
        lo = ops::num(args[0], fn.c_str());
        hi = ops::num(args[1], fn.c_str());
        if (args.size() == 3) step = ops::num(args[2], fn.c_str());
      }
      if (step == 0.0) throw eval_error("range step must not be zero");
      const double count = std::ceil((hi - lo) / step);
      if (count > 1e7) throw eval_error("range too large");
      std::vector<double> out;
      for (double k = 0; k < count; ++k) out.push_back(lo + k * step);
      return Value::vector(std::move(out));
    }
    if (fn == "np.ones_like" || fn == "np.zeros_like") {
      need(1, fn);
      const double fill = fn == "np.ones_like" ? 1.0 : 0.0;
      if (args[0].kind == Value::Kind::scalar) return Value::scalar(fill);
      return Value::vector(std::vector<double>(ops::vec(args[0], fn.c_str()).size(), fill));
    }
    if (fn == "np.full_like") {
      need(2, fn);
      return Value::vector(std::vector<double>(ops::vec(args[0], fn.c_str()).size(), ops::num(args[1], fn.c_str())));
    }
    if (fn == "np.zeros" || fn == "np.ones") {
      need(1, fn);
      const double n = ops::num(args[0], fn.c_str());
      if (!ops::integral(n) || n < 0 || n > 1e7) throw eval_error("bad array size");
      return Value::vector(std::vector<double>(static_cast<std::size_t>(n), fn == "np.ones" ? 1.0 : 0.0));
    }
    if (fn == "np.array" || fn == "np.asarray") {
      need(1, fn);
      if (args[0].kind == Value::Kind::scalar) return args[0];
      return Value::vector(ops::vec(args[0], fn.c_str()));
    }
    throw eval_error("function '" + fn + "' is not supported");
  }

  Function fn_;
};

// ---------------------------------------------------------------------------
// Binding to the task templates

inline std::vector<double> to_doubles(std::span<const std::size_t> ids) {
  return {ids.begin(), ids.end()};
}

inline std::int64_t node_result(const Value& v) {
  double x;
  if (v.kind == Value::Kind::scalar) x = v.s;
  else if (v.kind == Value::Kind::vector && v.v.size() == 1) x = v.v[0];
  else throw eval_error("heuristic must return a node id");
  if (!ops::integral(x)) throw eval_error("returned node id is not an integer");
  return static_cast<std::int64_t>(x);
}

/// Wraps a loaded program as a decider for `task`, binding the template's
/// positional parameters.
inline Decider make_decider(std::shared_ptr<const Program> prog, Task task) {
  const std::size_t want = task == Task::obp ? 2 : task == Task::tsp ? 4 : 6;
  if (prog->params().size() != want) {
    throw Error("load", prog->name() + " must take " + std::to_string(want) + " parameters");
  }
  Decider d;
  if (task == Task::obp) {
    d.obp = [prog](const ObpQuery& q) {
      const Value r = prog->call({Value::scalar(q.item), Value::vector({q.bins.begin(), q.bins.end()})});
      if (r.kind != Value::Kind::vector) throw eval_error("priority must return an array");
      return r.v;
    };
  } else if (task == Task::tsp) {
    d.tsp = [prog](const TspQuery& q) {
      return node_result(prog->call({Value::scalar(static_cast<double>(q.current)),
                                     Value::scalar(static_cast<double>(q.destination)),
                                     Value::vector(to_doubles(q.unvisited)), Value::matrix(q.distances)}));
    };
  } else {
    d.cvrp = [prog](const CvrpQuery& q) {
      return node_result(prog->call({Value::scalar(static_cast<double>(q.current)),
                                     Value::scalar(static_cast<double>(q.depot)),
                                     Value::vector(to_doubles(q.unvisited)), Value::scalar(q.rest_capacity),
                                     Value::vector({q.demands.begin(), q.demands.end()}),
                                     Value::matrix(q.distances)}));
    };
  }
  return d;
}

/// Loads `source` for `task` and returns its decider; throws Error("load").
inline Decider load_decider(std::string_view source, Task task) {
  auto prog = std::make_shared<const Program>(source, required_function(task));
  return make_decider(std::move(prog), task);
}

}  // namespace eohs::pysub
