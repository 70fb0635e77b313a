#pragma once

#include <span>
#include <vector>

#include "cbf/expr.hpp"
#include "cbf/interval.hpp"

namespace cbf {

// Flat postorder tape for fast repeated evaluation of an Expr. The
// instruction order matches the recursive evaluator, so results are
// bit-identical to Expr::eval.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const Expr& e);

  double eval(std::span<const double> x, std::span<const double> u = {}) const;
  Interval eval_interval(const Box& xb, const Box& ub = Box()) const;

  bool empty() const { return code_.empty(); }

 private:
  enum class OpCode : std::uint8_t {
    Const,
    StateVar,
    InputVar,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    IntPow,
    Sin,
    Cos,
    Exp,
    Sqrt,
  };
  struct Instr {
    OpCode op;
    int arg = 0;        // var index or exponent
    double value = 0.0; // constant
  };

  template <typename T, typename LoadX, typename LoadU>
  T run(const LoadX& lx, const LoadU& lu) const;

  std::vector<Instr> code_;
  std::size_t max_stack_ = 0;
};

}  // namespace cbf
