#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "circle.hpp"
#include "error.hpp"

namespace quasigraph {

// Arithmetic expressions in one variable x:
//   literals, x, pi, + - * /, unary minus, parentheses, sin, cos, pow(a, b).
// Compiled to a postfix program; immutable and thread-safe once built.
class Expression {
 public:
  static Expression parse(std::string_view text) {
    Parser p{text, 0, {}};
    p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected trailing input");
    Expression e;
    e.source_ = std::string(text);
    e.program_ = std::make_shared<const std::vector<Op>>(std::move(p.out));
    return e;
  }

  [[nodiscard]] double operator()(double x) const {
    double stack[64];
    int top = 0;
    for (const Op& op : *program_) {
      switch (op.kind) {
        case Kind::Const: stack[top++] = op.value; break;
        case Kind::Var: stack[top++] = x; break;
        case Kind::Neg: stack[top - 1] = -stack[top - 1]; break;
        case Kind::Add: --top; stack[top - 1] += stack[top]; break;
        case Kind::Sub: --top; stack[top - 1] -= stack[top]; break;
        case Kind::Mul: --top; stack[top - 1] *= stack[top]; break;
        case Kind::Div: --top; stack[top - 1] /= stack[top]; break;
        case Kind::Sin: stack[top - 1] = std::sin(stack[top - 1]); break;
        case Kind::Cos: stack[top - 1] = std::cos(stack[top - 1]); break;
        case Kind::Pow: --top; stack[top - 1] = std::pow(stack[top - 1], stack[top]); break;
      }
    }
    return stack[0];
  }

  [[nodiscard]] const std::string& source() const noexcept { return source_; }

 private:
  enum class Kind { Const, Var, Neg, Add, Sub, Mul, Div, Sin, Cos, Pow };
  struct Op {
    Kind kind;
    double value = 0.0;
  };

  struct Parser {
    std::string_view s;
    std::size_t pos;
    std::vector<Op> out;
    int depth = 0;

    [[noreturn]] void fail(const std::string& why) const {
      throw Error(ErrorCode::ParseError, why + " at offset " + std::to_string(pos) + " in '" + std::string(s) + "'");
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void expect(char c) {
      if (!eat(c)) fail(std::string("expected '") + c + "'");
    }
    void expr() {
      if (++depth > 24) fail("expression nested too deeply");
      term();
      for (;;) {
        if (eat('+')) { term(); out.push_back({Kind::Add}); }
        else if (eat('-')) { term(); out.push_back({Kind::Sub}); }
        else break;
      }
      --depth;
    }
    void term() {
      unary();
      for (;;) {
        if (eat('*')) { unary(); out.push_back({Kind::Mul}); }
        else if (eat('/')) { unary(); out.push_back({Kind::Div}); }
        else break;
      }
    }
    void unary() {
      if (eat('-')) { unary(); out.push_back({Kind::Neg}); return; }
      if (eat('+')) { unary(); return; }
      primary();
    }
    void primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of input");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        expr();
        expect(')');
        return;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        double v = 0.0;
        const auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
        if (res.ec != std::errc()) fail("bad number");
        pos = static_cast<std::size_t>(res.ptr - s.data());
        out.push_back({Kind::Const, v});
        return;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        const std::string_view name = s.substr(start, pos - start);
        if (name == "x") { out.push_back({Kind::Var}); return; }
        if (name == "pi") { out.push_back({Kind::Const, kPi}); return; }
        if (name == "sin" || name == "cos") {
          expect('(');
          expr();
          expect(')');
          out.push_back({name == "sin" ? Kind::Sin : Kind::Cos});
          return;
        }
        if (name == "pow") {
          expect('(');
          expr();
          expect(',');
          expr();
          expect(')');
          out.push_back({Kind::Pow});
          return;
        }
        pos = start;
        fail("unknown identifier '" + std::string(name) + "'");
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  std::string source_;
  std::shared_ptr<const std::vector<Op>> program_;
};

}  // namespace quasigraph
