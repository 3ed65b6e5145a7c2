#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "belab/errors.hpp"

namespace belab {

// Arithmetic expression in named variables, compiled to a postfix program.
// Grammar: + - * / ^ (right associative), unary +/-, parentheses, numbers,
// constants pi and e, and functions sin cos tan asin acos atan sinh cosh tanh
// exp log sqrt abs, pow(a,b), atan2(a,b).
class Expression {
 public:
  Expression() = default;

  Expression(const std::string& text, const std::vector<std::string>& variables)
      : Expression(text, index_names(variables)) {}

  Expression(const std::string& text, std::map<std::string, int> variables)
      : text_(text), vars_(std::move(variables)) {
    parse_sum();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    int depth = 0, max_depth = 0;
    for (const auto& ins : code_) {
      depth += stack_effect(ins.op);
      max_depth = std::max(max_depth, depth);
    }
    if (max_depth > kStack) fail("expression too deeply nested");
  }

  const std::string& text() const { return text_; }

  template <class V>
  double operator()(const V& x) const {
    std::array<double, kStack> st;
    int sp = 0;
    for (const auto& ins : code_) {
      switch (ins.op) {
        case Op::Const: st[sp++] = ins.value; break;
        case Op::Var: st[sp++] = x[ins.index]; break;
        case Op::Add: --sp; st[sp - 1] += st[sp]; break;
        case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
        case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
        case Op::Div: --sp; st[sp - 1] /= st[sp]; break;
        case Op::Pow: --sp; st[sp - 1] = power(st[sp - 1], st[sp]); break;
        case Op::Atan2: --sp; st[sp - 1] = std::atan2(st[sp - 1], st[sp]); break;
        case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
        case Op::Func: st[sp - 1] = apply(ins.index, st[sp - 1]); break;
      }
    }
    return st[0];
  }

 private:
  static constexpr int kStack = 64;
  enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Atan2, Neg, Func };
  struct Instr {
    Op op;
    double value = 0.0;
    int index = 0;
  };

  static std::map<std::string, int> index_names(const std::vector<std::string>& names) {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i < names.size(); ++i) m[names[i]] = static_cast<int>(i);
    return m;
  }

  static int stack_effect(Op op) {
    switch (op) {
      case Op::Const:
      case Op::Var: return 1;
      case Op::Neg:
      case Op::Func: return 0;
      default: return -1;
    }
  }

  static double power(double a, double b) {
    if (b == 2.0) return a * a;
    if (b == 3.0) return a * a * a;
    return std::pow(a, b);
  }

  static const std::vector<std::string>& function_names() {
    static const std::vector<std::string> names{"sin",  "cos",  "tan",  "asin", "acos",
                                                "atan", "sinh", "cosh", "tanh", "exp",
                                                "log",  "sqrt", "abs"};
    return names;
  }

  static double apply(int f, double v) {
    switch (f) {
      case 0: return std::sin(v);
      case 1: return std::cos(v);
      case 2: return std::tan(v);
      case 3: return std::asin(v);
      case 4: return std::acos(v);
      case 5: return std::atan(v);
      case 6: return std::sinh(v);
      case 7: return std::cosh(v);
      case 8: return std::tanh(v);
      case 9: return std::exp(v);
      case 10: return std::log(v);
      case 11: return std::sqrt(v);
      default: return std::abs(v);
    }
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("expression '" + text_ + "' at column " + std::to_string(pos_ + 1) +
                      ": " + why);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  void parse_sum() {
    parse_product();
    for (;;) {
      if (accept('+')) { parse_product(); code_.push_back({Op::Add}); }
      else if (accept('-')) { parse_product(); code_.push_back({Op::Sub}); }
      else return;
    }
  }

  void parse_product() {
    parse_unary();
    for (;;) {
      if (accept('*')) { parse_unary(); code_.push_back({Op::Mul}); }
      else if (accept('/')) { parse_unary(); code_.push_back({Op::Div}); }
      else return;
    }
  }

  void parse_unary() {
    if (accept('-')) { parse_unary(); code_.push_back({Op::Neg}); return; }
    if (accept('+')) { parse_unary(); return; }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (accept('^')) { parse_unary(); code_.push_back({Op::Pow}); }
  }

  void parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (accept('(')) { parse_sum(); expect(')'); return; }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      code_.push_back({Op::Const, v});
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string name = text_.substr(start, pos_ - start);
      if (accept('(')) {
        if (name == "pow" || name == "atan2") {
          parse_sum();
          expect(',');
          parse_sum();
          expect(')');
          code_.push_back({name == "pow" ? Op::Pow : Op::Atan2});
          return;
        }
        const auto& fn = function_names();
        for (std::size_t i = 0; i < fn.size(); ++i) {
          if (fn[i] == name) {
            parse_sum();
            expect(')');
            code_.push_back({Op::Func, 0.0, static_cast<int>(i)});
            return;
          }
        }
        pos_ = start;
        fail("unknown function '" + name + "'");
      }
      if (auto it = vars_.find(name); it != vars_.end()) {
        code_.push_back({Op::Var, 0.0, it->second});
        return;
      }
      if (name == "pi") { code_.push_back({Op::Const, 3.14159265358979323846}); return; }
      if (name == "e") { code_.push_back({Op::Const, 2.71828182845904523536}); return; }
      pos_ = start;
      fail("unknown variable '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string text_;
  std::map<std::string, int> vars_;
  std::vector<Instr> code_;
  std::size_t pos_ = 0;
};

// Coordinates are x0..x{n-1}; x, y, z alias the first three.
inline Expression compile_coordinate_expression(const std::string& text, int n) {
  std::map<std::string, int> names;
  const char* alias[] = {"x", "y", "z"};
  for (int i = 0; i < n; ++i) {
    names["x" + std::to_string(i)] = i;
    if (i < 3) names[alias[i]] = i;
  }
  return Expression(text, std::move(names));
}

}  // namespace belab
