#pragma once

// Text form of expressions. Grammar (documented in the README):
//
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := '-' factor | power
//   power  := atom ('^' factor)?
//   atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//   NUMBER := digits ('.' digits)?        decimals are exact rationals
//   IDENT  := letter (letter | digit | '_')*
//
// 'exp' and 'abs' are reserved function names. Exponents must normalize to a
// rational constant or a rational-affine form in parameters. print() emits
// text that parses back to the identical canonical expression.

#include <cctype>
#include <optional>
#include <set>
#include <string>

#include "arclosure/expr.hpp"

namespace arclosure {

class ParseError : public ExprError {
 public:
  ParseError(const std::string& m, std::size_t pos)
      : ExprError(m + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
  std::size_t position;
};

namespace detail {

class Parser {
 public:
  Parser(const std::string& text, const std::optional<std::set<std::string>>& allowed)
      : s_(text), allowed_(allowed) {}

  Expr run() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) throw ParseError("unexpected trailing input", pos_);
    return e;
  }

 private:
  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      skip_ws();
      if (match('+'))
        e = e + parse_term();
      else if (match('-'))
        e = e - parse_term();
      else
        return e;
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      skip_ws();
      if (match('*'))
        e = e * parse_factor();
      else if (match('/'))
        e = e / parse_factor();
      else
        return e;
    }
  }

  Expr parse_factor() {
    skip_ws();
    if (match('-')) return -parse_factor();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    skip_ws();
    if (!match('^')) return base;
    std::size_t at = pos_;
    Expr e = parse_factor();
    auto lin = as_linexp(e);
    if (!lin) throw ParseError("exponent must be rational or parameter-affine", at);
    return pow(base, *lin);
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    if (match('(')) {
      Expr e = parse_expr();
      expect(')');
      return e;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  Expr parse_number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    BigInt intpart(s_.substr(start, pos_ - start));
    Rational value(intpart);
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      std::size_t fstart = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ == fstart) throw ParseError("digits expected after decimal point", pos_);
      std::string frac = s_.substr(fstart, pos_ - fstart);
      BigInt scale = 1;
      for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
      value += Rational(BigInt(frac)) / Rational(scale);
    }
    return Expr::number(value);
  }

  Expr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string name = s_.substr(start, pos_ - start);
    if (name == "exp" || name == "abs") {
      skip_ws();
      expect('(');
      Expr arg = parse_expr();
      expect(')');
      return name == "exp" ? exp(arg) : abs(arg);
    }
    if (allowed_ && !allowed_->count(name))
      throw ParseError("unknown identifier '" + name + "'", start);
    return Expr::sym(name);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool match(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!match(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  std::optional<std::set<std::string>> allowed_;
};

}  // namespace detail

inline Expr parse(const std::string& text) { return detail::Parser(text, std::nullopt).run(); }

inline Expr parse(const std::string& text, const std::set<std::string>& allowed_symbols) {
  return detail::Parser(text, allowed_symbols).run();
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string print_exponent(const LinExp& e) {
  if (e.is_one()) return "";
  if (e.is_integer() && e.as_integer() > 0) return "^" + std::to_string(e.as_integer());
  return "^(" + e.str() + ")";
}

inline std::string print_factor(const Factor& f);

}  // namespace detail

inline std::string print(const Expr& e);

namespace detail {

inline std::string print_factor(const Factor& f) {
  switch (f.base.kind) {
    case BaseKind::symbol:
      return f.base.name + print_exponent(f.exp);
    case BaseKind::exponential:
      return "exp(" + print(f.base.arg) + ")";
    case BaseKind::absval:
      return "abs(" + print(f.base.arg) + ")" + print_exponent(f.exp);
    case BaseKind::opaque:
      return "(" + print(f.base.arg) + ")" + print_exponent(f.exp);
  }
  return "";
}

}  // namespace detail

inline std::string print(const Expr& e) {
  const auto& terms = e.data().terms;
  if (terms.empty()) return "0";
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& t = terms[i];
    Rational c = t.coef;
    bool negative = c < 0;
    if (negative) c = -c;
    if (i == 0)
      out += negative ? "-" : "";
    else
      out += negative ? " - " : " + ";
    std::string body;
    if (t.factors.empty()) {
      body = to_string(c);
    } else {
      if (c != 1) body = to_string(c);
      for (const auto& f : t.factors) {
        if (!body.empty()) body += "*";
        body += detail::print_factor(f);
      }
    }
    out += body;
  }
  return out;
}

}  // namespace arclosure
