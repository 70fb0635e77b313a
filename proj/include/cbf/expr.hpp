#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbf/interval.hpp"

namespace cbf {

enum class ExprOp : std::uint8_t {
  Const,
  StateVar,  // x1..xn, 0-based index internally
  InputVar,  // u1..um
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  IntPow,  // nonnegative integer exponent
  Sin,
  Cos,
  Exp,
  Sqrt,
};

// Identifies a differentiation / substitution variable.
struct VarRef {
  bool is_input = false;
  int index = 0;  // 0-based

  static VarRef state(int i) { return {false, i}; }
  static VarRef input(int i) { return {true, i}; }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

namespace detail {
struct ExprNode;
}

// Immutable scalar expression over state variables x1..xn and input
// variables u1..um. Construction folds constants, neutral elements and
// structurally equal subtractions; nodes are shared freely across
// threads (evaluation is reentrant).
class Expr {
 public:
  Expr();  // constant 0

  static Expr constant(double v);
  static Expr state(int index);  // 0-based
  static Expr input(int index);
  static Expr var(VarRef v) { return v.is_input ? input(v.index) : state(v.index); }

  ExprOp op() const;
  double const_value() const;  // valid for Const nodes
  int var_index() const;       // valid for StateVar/InputVar
  int exponent() const;        // valid for IntPow
  Expr child(int which) const; // 0 = left/only, 1 = right
  bool is_const(double v) const;

  double eval(std::span<const double> x, std::span<const double> u = {}) const;
  Interval eval_interval(const Box& xb, const Box& ub = Box()) const;

  // Exact symbolic partial derivative.
  Expr diff(VarRef v) const;

  // Replaces variables with the given expressions; nullopt keeps the
  // variable. Enables composition h(f(x,u)) and freezing inputs.
  Expr substitute(std::span<const std::optional<Expr>> state_subs,
                  std::span<const std::optional<Expr>> input_subs) const;

  // Round-trips through parse_expr (structural equality).
  std::string to_string() const;

  // Structural equality (hash-accelerated).
  bool same_as(const Expr& other) const;

  // Largest referenced index + 1, for dimension checks.
  int max_state_dim() const;
  int max_input_dim() const;

  // True when every k-th order derivative in the inputs vanishes for
  // k > deg (checked symbolically after folding).
  bool input_degree_at_most(int deg) const;

  std::size_t node_count() const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr pow_int(const Expr& a, int k);
  friend Expr sin(const Expr& a);
  friend Expr cos(const Expr& a);
  friend Expr exp(const Expr& a);
  friend Expr sqrt(const Expr& a);

  const detail::ExprNode* node() const { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const detail::ExprNode> n) : node_(std::move(n)) {}
  std::shared_ptr<const detail::ExprNode> node_;
};

// Parses the infix grammar: + - * / ^, unary -, sin cos exp sqrt,
// variables x1..xn / u1..um, decimal literals, parentheses. Exponents
// are nonnegative integer literals. Errors carry the byte offset.
Expr parse_expr(const std::string& text, int n_states, int n_inputs);

// \sum_i (dh/dx_i)^2 — shared building block for Lipschitz machinery.
Expr grad_norm_sq(const Expr& e, int n_states);

}  // namespace cbf
