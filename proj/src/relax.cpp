#include "cbf/relax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cbf {

std::vector<std::vector<Interval>> interval_hessian(const Expr& e, const Box& xb, const Box& ub) {
  const std::size_t n = xb.dim();
  std::vector<std::vector<Interval>> H(n, std::vector<Interval>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Expr di = e.diff(VarRef::state(static_cast<int>(i)));
    for (std::size_t j = i; j < n; ++j) {
      const Interval v = di.diff(VarRef::state(static_cast<int>(j))).eval_interval(xb, ub);
      H[i][j] = v;
      H[j][i] = v;
    }
  }
  return H;
}

namespace relax {

std::shared_ptr<const Prepared> prepare(const Expr& e, bool wrt_inputs, int dim) {
  auto p = std::make_shared<Prepared>();
  p->f = e;
  p->wrt_inputs = wrt_inputs;
  p->dim = dim;
  p->f_c = CompiledExpr(e);
  p->grad.reserve(dim);
  for (int i = 0; i < dim; ++i) {
    const VarRef v = wrt_inputs ? VarRef::input(i) : VarRef::state(i);
    p->grad.push_back(e.diff(v));
    p->grad_c.emplace_back(p->grad.back());
  }
  p->hess.resize(dim);
  p->hess_c.resize(dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      const VarRef v = wrt_inputs ? VarRef::input(j) : VarRef::state(j);
      p->hess[i].push_back(p->grad[i].diff(v));
      p->hess_c[i].emplace_back(p->hess[i].back());
    }
  }
  return p;
}

namespace {

Interval hess_entry(const Prepared& p, int i, int j, const Box& xb, const Box& ub) {
  if (j < i) std::swap(i, j);
  return p.hess_c[i][j - i].eval_interval(xb, ub);
}

}  // namespace

AlphaVector gerschgorin_alpha_on(const Prepared& p, const Box& wrt_box,
                                 const std::vector<double>& fixed) {
  const int n = p.dim;
  const Box fixed_box = Box::point(fixed);
  const Box& xb = p.wrt_inputs ? fixed_box : wrt_box;
  const Box& ub = p.wrt_inputs ? wrt_box : fixed_box;

  AlphaVector out;
  out.box = wrt_box;
  out.alpha.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double wi = wrt_box.width(i);
    if (wi <= 0.0) continue;  // frozen dimension
    const Interval hii = hess_entry(p, i, i, xb, ub);
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i || wrt_box.width(j) <= 0.0) continue;
      row += hess_entry(p, i, j, xb, ub).mag() * (wrt_box.width(j) / wi);
    }
    out.alpha[i] = std::max(0.0, -0.5 * (hii.lo - row));
  }
  return out;
}

double Underestimator::value(std::span<const double> p) const {
  const std::span<const double> x = prep->wrt_inputs ? std::span<const double>(fixed) : p;
  const std::span<const double> u = prep->wrt_inputs ? p : std::span<const double>(fixed);
  double v = prep->f_c.eval(x, u);
  const Box& b = alpha.box;
  for (int i = 0; i < prep->dim; ++i)
    v += alpha.alpha[i] * (b.lb[i] - p[i]) * (b.ub[i] - p[i]);
  return v;
}

void Underestimator::gradient(std::span<const double> p, std::span<double> out) const {
  const std::span<const double> x = prep->wrt_inputs ? std::span<const double>(fixed) : p;
  const std::span<const double> u = prep->wrt_inputs ? p : std::span<const double>(fixed);
  const Box& b = alpha.box;
  for (int i = 0; i < prep->dim; ++i)
    out[i] = prep->grad_c[i].eval(x, u) + alpha.alpha[i] * (2.0 * p[i] - b.lb[i] - b.ub[i]);
}

Underestimator underestimator_on(std::shared_ptr<const Prepared> prep, const Box& wrt_box,
                                 std::vector<double> fixed) {
  AlphaVector a = gerschgorin_alpha_on(*prep, wrt_box, fixed);
  return Underestimator{std::move(prep), std::move(fixed), std::move(a)};
}

AlphaVector gerschgorin_alpha(const Expr& e, const Box& box) {
  auto p = prepare(e, false, static_cast<int>(box.dim()));
  return gerschgorin_alpha_on(*p, box, {});
}

Underestimator build_underestimator(const Expr& e, const Box& box) {
  return underestimator_on(prepare(e, false, static_cast<int>(box.dim())), box);
}

namespace {

constexpr int kMaxIters = 500;
constexpr double kArmijoC = 1e-4;

// Convexity cut: f(x) + min over the box of <g, y - x>.
double convexity_lower_bound(const Box& b, std::span<const double> x, std::span<const double> g,
                             double fx) {
  double lb = fx;
  for (std::size_t i = 0; i < b.dim(); ++i)
    lb += std::min(g[i] * (b.lb[i] - x[i]), g[i] * (b.ub[i] - x[i]));
  return lb;
}

}  // namespace

MinResult minimize_convex_over_box(const Underestimator& u, double tol) {
  const Box& b = u.box();
  const std::size_t n = b.dim();

  std::vector<std::vector<double>> starts;
  starts.push_back(b.midpoint());
  if (n <= 4)
    for (auto& v : b.vertices()) starts.push_back(std::move(v));

  MinResult best;
  best.value = std::numeric_limits<double>::infinity();
  best.lower_bound = -std::numeric_limits<double>::infinity();

  std::vector<double> g(n), xn(n);
  for (const auto& start : starts) {
    std::vector<double> x = start;
    double fx = u.value(x);
    if (fx < best.value) {
      best.value = fx;
      best.argmin = x;
    }
    double t = 1.0;
    for (int iter = 0; iter < kMaxIters; ++iter) {
      ++best.iterations;
      u.gradient(x, g);
      const double lb = convexity_lower_bound(b, x, g, fx);
      best.lower_bound = std::max(best.lower_bound, lb);
      if (fx - lb <= tol) {
        best.converged = true;
        break;
      }
      // Armijo backtracking on the projected step, warm-started.
      t = std::min(t * 2.0, 1e12);
      bool moved = false;
      while (t > 1e-18) {
        double fn = 0.0, dir = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          xn[i] = std::clamp(x[i] - t * g[i], b.lb[i], b.ub[i]);
          dir += g[i] * (xn[i] - x[i]);
        }
        fn = u.value(xn);
        if (fn <= fx + kArmijoC * dir && dir < 0.0) {
          x = xn;
          fx = fn;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (fx < best.value) {
        best.value = fx;
        best.argmin = x;
      }
      if (!moved) break;  // stationary within line-search resolution
    }
    if (best.converged) break;  // convex: the global gap is already certified
  }
  return best;
}

double lipschitz_bound(const Expr& h, const Box& box, const Underestimator& hminus) {
  constexpr double kTol = 1e-9;
  if (feasibility_case_b(hminus, kTol)) return -std::numeric_limits<double>::infinity();
  const Expr neg_gradsq = -grad_norm_sq(h, static_cast<int>(box.dim()));
  return lipschitz_bound_prepared(prepare(neg_gradsq, false, static_cast<int>(box.dim())), box,
                                  kTol);
}

double lipschitz_bound_prepared(std::shared_ptr<const Prepared> neg_gradsq, const Box& box,
                                double convex_tol) {
  const Underestimator u = underestimator_on(std::move(neg_gradsq), box);
  const MinResult r = minimize_convex_over_box(u, convex_tol);
  if (!r.converged && !std::isfinite(r.lower_bound))
    return std::numeric_limits<double>::infinity();
  // lower_bound <= min(-||grad h||^2) over the box, so
  // max ||grad h||^2 <= -lower_bound.
  return std::sqrt(std::max(0.0, -r.lower_bound));
}

bool feasibility_case_b(const Underestimator& hminus, double tol) {
  const MinResult r = minimize_convex_over_box(hminus, tol);
  return r.lower_bound > 0.0;
}

}  // namespace relax
}  // namespace cbf
