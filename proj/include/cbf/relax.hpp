#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cbf/compiled.hpp"
#include "cbf/expr.hpp"
#include "cbf/interval.hpp"

namespace cbf {

// Interval enclosure of the Hessian of e with respect to the state
// variables, over the given boxes. Symmetric; only one triangle is
// computed.
std::vector<std::vector<Interval>> interval_hessian(const Expr& e, const Box& xb,
                                                    const Box& ub = Box());

namespace relax {

// Symbolic + compiled first and second derivatives of a scalar function
// of (x, u), taken with respect to either the states or the inputs.
// Built once per function, reused across every subdomain.
struct Prepared {
  Expr f;
  bool wrt_inputs = false;
  int dim = 0;
  std::vector<Expr> grad;
  std::vector<std::vector<Expr>> hess;  // hess[i][j - i], j >= i
  CompiledExpr f_c;
  std::vector<CompiledExpr> grad_c;
  std::vector<std::vector<CompiledExpr>> hess_c;
};

std::shared_ptr<const Prepared> prepare(const Expr& e, bool wrt_inputs, int dim);

struct AlphaVector {
  std::vector<double> alpha;  // one nonnegative entry per wrt dimension
  Box box;                    // the box the vector was computed for
};

// Scaled Gerschgorin coefficients from the interval Hessian over
// wrt_box, with the complementary variables pinned to `fixed` (empty
// when the function does not reference them). Zero-width dimensions are
// treated as frozen (alpha = 0, excluded from row sums).
AlphaVector gerschgorin_alpha_on(const Prepared& p, const Box& wrt_box,
                                 const std::vector<double>& fixed);

// base(x) + sum_i alpha_i (lb_i - x_i)(ub_i - x_i): convex on the box,
// below base everywhere on it, equal to base at every vertex.
struct Underestimator {
  std::shared_ptr<const Prepared> prep;
  std::vector<double> fixed;
  AlphaVector alpha;

  const Box& box() const { return alpha.box; }
  const Expr& base() const { return prep->f; }
  double value(std::span<const double> p) const;
  void gradient(std::span<const double> p, std::span<double> out) const;
};

Underestimator underestimator_on(std::shared_ptr<const Prepared> prep, const Box& wrt_box,
                                 std::vector<double> fixed = {});

// Convenience entry points over state-only expressions.
AlphaVector gerschgorin_alpha(const Expr& e, const Box& box);
Underestimator build_underestimator(const Expr& e, const Box& box);

struct MinResult {
  std::vector<double> argmin;
  double value = 0.0;        // objective at argmin
  double lower_bound = 0.0;  // sound lower bound on the box minimum
  bool converged = false;    // gap value - lower_bound <= tol reached
  int iterations = 0;
};

// Deterministic projected gradient with Armijo backtracking, multistart
// from the midpoint and the box vertices, 500-iteration cap per start.
// lower_bound is valid (<= true minimum) even when not converged: it is
// the best convexity cut f(x) + min_box <g(x), . - x> seen.
MinResult minimize_convex_over_box(const Underestimator& u, double tol);

// Sound upper bound on max{ ||grad h(x)|| : x in box, h(x) >= 0 }.
// Returns -infinity when hminus certifies the box lies outside C, and
// +infinity when the convex solve fails to produce a useful bound.
double lipschitz_bound(const Expr& h, const Box& box, const Underestimator& hminus);

// Same bound from a prepared -||grad h||^2 (verifier fast path).
double lipschitz_bound_prepared(std::shared_ptr<const Prepared> neg_gradsq, const Box& box,
                                double convex_tol);

// True only if min over the box of hminus is certified > 0, i.e. the
// box cannot intersect the zero-superlevel set of h.
bool feasibility_case_b(const Underestimator& hminus, double tol);

}  // namespace relax
}  // namespace cbf
