#include "cbf/compiled.hpp"

#include <cmath>

namespace cbf {

CompiledExpr::CompiledExpr(const Expr& e) {
  struct Builder {
    std::vector<Instr>& code;
    std::size_t depth = 0, max_depth = 0;

    void emit(OpCode op, int arg, double value, int pops) {
      depth -= pops;
      ++depth;
      max_depth = std::max(max_depth, depth);
      code.push_back({op, arg, value});
    }

    void visit(const Expr& e) {
      switch (e.op()) {
        case ExprOp::Const:
          emit(OpCode::Const, 0, e.const_value(), 0);
          return;
        case ExprOp::StateVar:
          emit(OpCode::StateVar, e.var_index(), 0.0, 0);
          return;
        case ExprOp::InputVar:
          emit(OpCode::InputVar, e.var_index(), 0.0, 0);
          return;
        case ExprOp::Add:
        case ExprOp::Sub:
        case ExprOp::Mul:
        case ExprOp::Div:
          visit(e.child(0));
          visit(e.child(1));
          emit(static_cast<OpCode>(e.op()), 0, 0.0, 2);
          return;
        case ExprOp::Neg:
        case ExprOp::Sin:
        case ExprOp::Cos:
        case ExprOp::Exp:
        case ExprOp::Sqrt:
          visit(e.child(0));
          emit(static_cast<OpCode>(e.op()), 0, 0.0, 1);
          return;
        case ExprOp::IntPow:
          visit(e.child(0));
          emit(OpCode::IntPow, e.exponent(), 0.0, 1);
          return;
      }
    }
  };
  Builder b{code_};
  b.visit(e);
  max_stack_ = b.max_depth;
}

template <typename T, typename LoadX, typename LoadU>
T CompiledExpr::run(const LoadX& lx, const LoadU& lu) const {
  std::vector<T> stack(max_stack_);
  std::size_t sp = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case OpCode::Const:
        stack[sp++] = T(in.value, in.value);
        break;
      case OpCode::StateVar:
        stack[sp++] = lx(in.arg);
        break;
      case OpCode::InputVar:
        stack[sp++] = lu(in.arg);
        break;
      case OpCode::Add:
        --sp;
        stack[sp - 1] = stack[sp - 1] + stack[sp];
        break;
      case OpCode::Sub:
        --sp;
        stack[sp - 1] = stack[sp - 1] - stack[sp];
        break;
      case OpCode::Mul:
        --sp;
        stack[sp - 1] = stack[sp - 1] * stack[sp];
        break;
      case OpCode::Div:
        --sp;
        stack[sp - 1] = stack[sp - 1] / stack[sp];
        break;
      case OpCode::Neg:
        stack[sp - 1] = -stack[sp - 1];
        break;
      case OpCode::IntPow:
        stack[sp - 1] = pow_int(stack[sp - 1], in.arg);
        break;
      case OpCode::Sin:
        stack[sp - 1] = sin_iv(stack[sp - 1]);
        break;
      case OpCode::Cos:
        stack[sp - 1] = cos_iv(stack[sp - 1]);
        break;
      case OpCode::Exp:
        stack[sp - 1] = exp_iv(stack[sp - 1]);
        break;
      case OpCode::Sqrt:
        stack[sp - 1] = sqrt_iv(stack[sp - 1]);
        break;
    }
  }
  return stack[0];
}

double CompiledExpr::eval(std::span<const double> x, std::span<const double> u) const {
  // Scalar fast path mirrors Expr::eval, including its error behavior.
  thread_local std::vector<double> stack;
  if (stack.size() < max_stack_) stack.resize(max_stack_);
  std::size_t sp = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case OpCode::Const:
        stack[sp++] = in.value;
        break;
      case OpCode::StateVar:
        if (static_cast<std::size_t>(in.arg) >= x.size())
          throw DomainError("state index out of range in eval");
        stack[sp++] = x[in.arg];
        break;
      case OpCode::InputVar:
        if (static_cast<std::size_t>(in.arg) >= u.size())
          throw DomainError("input index out of range in eval");
        stack[sp++] = u[in.arg];
        break;
      case OpCode::Add:
        --sp;
        stack[sp - 1] += stack[sp];
        break;
      case OpCode::Sub:
        --sp;
        stack[sp - 1] -= stack[sp];
        break;
      case OpCode::Mul:
        --sp;
        stack[sp - 1] *= stack[sp];
        break;
      case OpCode::Div:
        --sp;
        if (stack[sp] == 0.0) throw DomainError("division by zero");
        stack[sp - 1] /= stack[sp];
        break;
      case OpCode::Neg:
        stack[sp - 1] = -stack[sp - 1];
        break;
      case OpCode::IntPow: {
        double r = 1.0, p = stack[sp - 1];
        int k = in.arg;
        while (k > 0) {
          if (k & 1) r *= p;
          p *= p;
          k >>= 1;
        }
        stack[sp - 1] = r;
        break;
      }
      case OpCode::Sin:
        stack[sp - 1] = std::sin(stack[sp - 1]);
        break;
      case OpCode::Cos:
        stack[sp - 1] = std::cos(stack[sp - 1]);
        break;
      case OpCode::Exp:
        stack[sp - 1] = std::exp(stack[sp - 1]);
        break;
      case OpCode::Sqrt:
        if (stack[sp - 1] < 0.0) throw DomainError("sqrt of negative value");
        stack[sp - 1] = std::sqrt(stack[sp - 1]);
        break;
    }
  }
  return stack[0];
}

Interval CompiledExpr::eval_interval(const Box& xb, const Box& ub) const {
  auto lx = [&](int i) {
    if (static_cast<std::size_t>(i) >= xb.dim())
      throw DomainError("state index out of range in interval eval");
    return xb.interval(i);
  };
  auto lu = [&](int i) {
    if (static_cast<std::size_t>(i) >= ub.dim())
      throw DomainError("input index out of range in interval eval");
    return ub.interval(i);
  };
  return run<Interval>(lx, lu);
}

}  // namespace cbf
