// The problem-document expression grammar: +, -, *, /, pow, exp, log, tanh,
// min, max over double-precision literals and coordinates x1..xq.
// Left-associative, recursive descent, no host-language eval.
#pragma once

#include "hjcp/core.hpp"

#include <cctype>
#include <memory>

namespace hjcp::expr {

using Fn = std::function<double(const Vec&)>;

namespace detail {

struct Parser {
  const std::string& src;
  size_t pos = 0;
  int dim;
  char var_prefix;

  explicit Parser(const std::string& s, int d, char prefix) : src(s), dim(d), var_prefix(prefix) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("expression error at position " + std::to_string(pos) + ": " +
                                what + " in \"" + src + "\"");
  }

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < src.size() ? src[pos] : '\0';
  }

  Fn parse() {
    Fn e = expr();
    skip_ws();
    if (pos != src.size()) fail("trailing input");
    return e;
  }

  Fn expr() {
    Fn lhs = term();
    while (true) {
      if (eat('+')) {
        Fn rhs = term();
        lhs = [lhs, rhs](const Vec& x) { return lhs(x) + rhs(x); };
      } else if (eat('-')) {
        Fn rhs = term();
        lhs = [lhs, rhs](const Vec& x) { return lhs(x) - rhs(x); };
      } else {
        return lhs;
      }
    }
  }

  Fn term() {
    Fn lhs = factor();
    while (true) {
      if (eat('*')) {
        Fn rhs = factor();
        lhs = [lhs, rhs](const Vec& x) { return lhs(x) * rhs(x); };
      } else if (eat('/')) {
        Fn rhs = factor();
        lhs = [lhs, rhs](const Vec& x) { return lhs(x) / rhs(x); };
      } else {
        return lhs;
      }
    }
  }

  Fn factor() {
    if (eat('-')) {
      Fn inner = factor();
      return [inner](const Vec& x) { return -inner(x); };
    }
    return primary();
  }

  Fn primary() {
    skip_ws();
    if (pos >= src.size()) fail("unexpected end of input");
    const char c = src[pos];
    if (c == '(') {
      ++pos;
      Fn inner = expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  Fn number() {
    size_t end = pos;
    while (end < src.size() &&
           (std::isdigit(static_cast<unsigned char>(src[end])) || src[end] == '.' ||
            src[end] == 'e' || src[end] == 'E' ||
            ((src[end] == '+' || src[end] == '-') && end > pos &&
             (src[end - 1] == 'e' || src[end - 1] == 'E'))))
      ++end;
    const std::string tok = src.substr(pos, end - pos);
    size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (...) {
      fail("bad numeric literal '" + tok + "'");
    }
    if (used != tok.size()) fail("bad numeric literal '" + tok + "'");
    pos = end;
    return [v](const Vec&) { return v; };
  }

  Fn ident() {
    size_t end = pos;
    while (end < src.size() && (std::isalnum(static_cast<unsigned char>(src[end])) ||
                                src[end] == '_'))
      ++end;
    const std::string name = src.substr(pos, end - pos);
    pos = end;

    if (name.size() >= 2 && name[0] == var_prefix) {
      bool digits = true;
      for (size_t i = 1; i < name.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
      if (digits) {
        const int k = std::stoi(name.substr(1));
        if (k < 1 || k > dim) fail("coordinate " + name + " out of range for dimension");
        return [k](const Vec& x) { return x[k - 1]; };
      }
    }

    auto unary = [&](double (*f)(double)) {
      if (!eat('(')) fail("expected '(' after " + name);
      Fn a = expr();
      if (!eat(')')) fail("expected ')'");
      return Fn([f, a](const Vec& x) { return f(a(x)); });
    };
    auto binary = [&](double (*f)(double, double)) {
      if (!eat('(')) fail("expected '(' after " + name);
      Fn a = expr();
      if (!eat(',')) fail("expected ',' in " + name);
      Fn b = expr();
      if (!eat(')')) fail("expected ')'");
      return Fn([f, a, b](const Vec& x) { return f(a(x), b(x)); });
    };

    if (name == "exp") return unary([](double a) { return std::exp(a); });
    if (name == "log") return unary([](double a) { return std::log(a); });
    if (name == "tanh") return unary([](double a) { return std::tanh(a); });
    if (name == "pow") return binary([](double a, double b) { return std::pow(a, b); });
    if (name == "min") return binary([](double a, double b) { return std::min(a, b); });
    if (name == "max") return binary([](double a, double b) { return std::max(a, b); });
    fail("unknown identifier '" + name + "'");
  }
};

}  // namespace detail

// Parse an expression over coordinates <prefix>1..<prefix>dim.
inline Fn parse(const std::string& src, int dim, char var_prefix = 'x') {
  detail::Parser p(src, dim, var_prefix);
  return p.parse();
}

}  // namespace hjcp::expr
