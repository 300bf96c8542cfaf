#pragma once

#include "mshho/types.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <string>

namespace mshho {

/// Tiny arithmetic-expression parser for coefficient and source definitions.
/// Grammar: + - * / ^ (right assoc), unary minus, parentheses, functions
/// sin/cos/exp/sqrt, variables x and y, constants pi and eps, numeric
/// literals. `eps` is bound at parse time.
class Expression {
  struct Node {
    virtual ~Node() = default;
    virtual double eval(double x, double y) const = 0;
  };
  using NodePtr = std::shared_ptr<const Node>;

  struct Const : Node {
    double v;
    explicit Const(double c) : v(c) {}
    double eval(double, double) const override { return v; }
  };
  struct Var : Node {
    bool is_x;
    explicit Var(bool x) : is_x(x) {}
    double eval(double x, double y) const override { return is_x ? x : y; }
  };
  struct Unary : Node {
    int op; // 0 neg, 1 sin, 2 cos, 3 exp, 4 sqrt
    NodePtr a;
    Unary(int o, NodePtr n) : op(o), a(std::move(n)) {}
    double eval(double x, double y) const override {
      const double v = a->eval(x, y);
      switch (op) {
      case 0: return -v;
      case 1: return std::sin(v);
      case 2: return std::cos(v);
      case 3: return std::exp(v);
      default: return std::sqrt(v);
      }
    }
  };
  struct Binary : Node {
    char op;
    NodePtr a, b;
    Binary(char o, NodePtr l, NodePtr r) : op(o), a(std::move(l)), b(std::move(r)) {}
    double eval(double x, double y) const override {
      const double l = a->eval(x, y), r = b->eval(x, y);
      switch (op) {
      case '+': return l + r;
      case '-': return l - r;
      case '*': return l * r;
      case '/': return l / r;
      default: return std::pow(l, r);
      }
    }
  };

  struct Parser {
    const std::string& s;
    size_t pos = 0;
    double eps;

    explicit Parser(const std::string& text, double e) : s(text), eps(e) {}

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
        ++pos;
    }
    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    [[noreturn]] void fail(const std::string& what) const {
      throw ConfigError("expression parse error at position " + std::to_string(pos) + ": " + what +
                        " in '" + s + "'");
    }

    NodePtr parse() {
      NodePtr e = sum();
      skip();
      if (pos != s.size())
        fail("trailing characters");
      return e;
    }
    NodePtr sum() {
      NodePtr l = product();
      for (;;) {
        if (accept('+'))
          l = std::make_shared<Binary>('+', l, product());
        else if (accept('-'))
          l = std::make_shared<Binary>('-', l, product());
        else
          return l;
      }
    }
    NodePtr product() {
      NodePtr l = power();
      for (;;) {
        if (accept('*'))
          l = std::make_shared<Binary>('*', l, power());
        else if (accept('/'))
          l = std::make_shared<Binary>('/', l, power());
        else
          return l;
      }
    }
    NodePtr power() {
      NodePtr base = unary();
      if (accept('^'))
        return std::make_shared<Binary>('^', base, power());
      return base;
    }
    NodePtr unary() {
      if (accept('-'))
        return std::make_shared<Unary>(0, unary());
      return atom();
    }
    NodePtr atom() {
      skip();
      if (pos >= s.size())
        fail("unexpected end of input");
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        size_t used = 0;
        const double v = std::stod(s.substr(pos), &used);
        pos += used;
        return std::make_shared<Const>(v);
      }
      if (c == '(') {
        ++pos;
        NodePtr e = sum();
        if (!accept(')'))
          fail("expected ')'");
        return e;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        size_t end = pos;
        while (end < s.size() && std::isalnum(static_cast<unsigned char>(s[end])))
          ++end;
        const std::string name = s.substr(pos, end - pos);
        pos = end;
        if (name == "x")
          return std::make_shared<Var>(true);
        if (name == "y")
          return std::make_shared<Var>(false);
        if (name == "pi")
          return std::make_shared<Const>(pi());
        if (name == "eps")
          return std::make_shared<Const>(eps);
        int fn = -1;
        if (name == "sin")
          fn = 1;
        else if (name == "cos")
          fn = 2;
        else if (name == "exp")
          fn = 3;
        else if (name == "sqrt")
          fn = 4;
        if (fn >= 0) {
          if (!accept('('))
            fail("expected '(' after " + name);
          NodePtr a = sum();
          if (!accept(')'))
            fail("expected ')'");
          return std::make_shared<Unary>(fn, a);
        }
        fail("unknown identifier '" + name + "'");
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

public:
  Expression() = default;
  explicit Expression(const std::string& text, double eps = 1.0) : text_(text) {
    Parser p(text, eps);
    root_ = p.parse();
  }

  double operator()(double x, double y) const { return root_->eval(x, y); }
  double operator()(const Vec2& p) const { return root_->eval(p.x(), p.y()); }
  const std::string& text() const { return text_; }
  bool valid() const { return static_cast<bool>(root_); }

private:
  std::string text_;
  NodePtr root_;
};

} // namespace mshho
