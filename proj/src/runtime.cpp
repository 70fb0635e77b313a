#include "cbf/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "cbf/rng.hpp"
#include "cbf/verifier.hpp"

namespace cbf {

NominalController NominalController::zero(int m) {
  NominalController c;
  for (int i = 0; i < m; ++i) c.exprs.push_back(Expr::constant(0.0));
  return c;
}

NominalController NominalController::constant(const std::vector<double>& u) {
  NominalController c;
  for (double v : u) c.exprs.push_back(Expr::constant(v));
  return c;
}

std::vector<double> NominalController::eval(std::span<const double> x) const {
  std::vector<double> u(exprs.size());
  for (std::size_t i = 0; i < exprs.size(); ++i) u[i] = exprs[i].eval(x);
  return u;
}

SafetyFilter::SafetyFilter(const ProblemModel& model, const CandidateBarrier& barrier)
    : model_(&model) {
  model.validate();
  barrier.validate(model.n);
  const Expr m = robust_margin_expr(model, barrier);
  margin_c_ = CompiledExpr(m);
  if (model.m > 0) neg_margin_u_ = relax::prepare(-m, true, model.m);
}

double SafetyFilter::margin(std::span<const double> x, std::span<const double> u) const {
  return margin_c_.eval(x, u);
}

namespace {

double dist_sq(std::span<const double> a, std::span<const double> b) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return d2;
}

std::vector<double> clamp_to(const Box& box, std::span<const double> u) {
  std::vector<double> out(u.begin(), u.end());
  for (std::size_t i = 0; i < box.dim(); ++i) out[i] = std::clamp(out[i], box.lb[i], box.ub[i]);
  return out;
}

}  // namespace

std::vector<double> SafetyFilter::apply(std::span<const double> x, std::span<const double> u_nom,
                                        double tol) const {
  const Box& U = model_->U;
  if (model_->m == 0) {
    if (margin_c_.eval(x, {}) >= 0.0) return {};
    throw InfeasibleStateError("no input satisfies the barrier constraint");
  }
  const std::vector<double> xv(x.begin(), x.end());

  // Minimal intervention: feasible nominal inputs pass through untouched.
  if (U.contains(std::vector<double>(u_nom.begin(), u_nom.end())) &&
      margin_c_.eval(x, u_nom) >= 0.0)
    return std::vector<double>(u_nom.begin(), u_nom.end());

  struct Node {
    double obj_lb;
    std::size_t seq;
    Box box;
    bool operator<(const Node& o) const {  // min-heap by bound
      return obj_lb != o.obj_lb ? obj_lb > o.obj_lb : seq > o.seq;
    }
  };
  std::priority_queue<Node> open;
  std::size_t seq = 0;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_u;

  auto try_candidate = [&](const std::vector<double>& u) {
    if (margin_c_.eval(x, u) < 0.0) return;
    const double v = dist_sq(u, u_nom);
    if (v < best_val) {
      best_val = v;
      best_u = u;
    }
  };

  auto push_node = [&](Box box) {
    // Certified infeasible boxes are pruned: max margin <= -lb of the
    // negated-margin underestimator minimum.
    const relax::Underestimator under = relax::underestimator_on(neg_margin_u_, box, xv);
    const relax::MinResult r = relax::minimize_convex_over_box(under, 1e-9);
    try_candidate(r.argmin);  // near the box's max-margin point
    if (r.lower_bound > 0.0) return;
    try_candidate(clamp_to(box, u_nom));
    try_candidate(box.midpoint());
    const double obj_lb = dist_sq(clamp_to(box, u_nom), u_nom);
    open.push(Node{obj_lb, seq++, std::move(box)});
  };
  push_node(U);

  constexpr std::size_t kNodeCap = 100'000;
  std::size_t processed = 0;
  while (!open.empty()) {
    Node top = open.top();
    open.pop();
    if (top.obj_lb >= best_val - tol) break;  // incumbent optimal within tol
    if (++processed > kNodeCap) break;
    if (top.box.sq_diag() == 0.0) continue;
    auto [a, b] = top.box.bisect(top.box.widest_dim());
    push_node(std::move(a));
    push_node(std::move(b));
  }
  if (best_u.empty())
    throw InfeasibleStateError("no input satisfies the barrier constraint at this state");
  return best_u;
}

std::vector<double> safe_control(const ProblemModel& model, const CandidateBarrier& barrier,
                                 std::span<const double> x, std::span<const double> u_nom,
                                 double tol) {
  if (barrier.h.eval(x) < 0.0)
    throw DomainError("safe_control requires a state inside the zero-superlevel set");
  return SafetyFilter(model, barrier).apply(x, u_nom, tol);
}

std::vector<double> sample_disturbance(double w_max, DisturbanceMode mode, std::size_t dim,
                                       std::uint64_t seed) {
  Rng rng(derive_seed(seed, "disturbance"));
  std::vector<double> w(dim, 0.0);
  if (w_max <= 0.0 || dim == 0) return w;
  switch (mode) {
    case DisturbanceMode::UniformBall:
      w = rng.unit_ball(dim);
      break;
    case DisturbanceMode::Boundary:
      w = rng.unit_sphere(dim);
      break;
    case DisturbanceMode::WorstAxis: {
      const std::size_t axis = rng.below(dim);
      const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      w.assign(dim, 0.0);
      w[axis] = sign;
      break;
    }
  }
  for (double& v : w) v *= w_max;
  return w;
}

namespace {

std::vector<double> draw_disturbance(double w_max, DisturbanceMode mode, std::size_t dim,
                                     Rng& rng) {
  std::vector<double> w(dim, 0.0);
  if (w_max <= 0.0 || dim == 0) return w;
  switch (mode) {
    case DisturbanceMode::UniformBall:
      w = rng.unit_ball(dim);
      break;
    case DisturbanceMode::Boundary:
      w = rng.unit_sphere(dim);
      break;
    case DisturbanceMode::WorstAxis: {
      const std::size_t axis = rng.below(dim);
      const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      w[axis] = sign;
      break;
    }
  }
  for (double& v : w) v *= w_max;
  return w;
}

}  // namespace

RolloutRecord simulate(const ProblemModel& model, const CandidateBarrier& barrier,
                       const NominalController& controller, const std::vector<double>& x0,
                       int steps, DisturbanceMode mode, std::uint64_t seed, double tol) {
  model.validate();
  barrier.validate(model.n);
  if (static_cast<int>(controller.exprs.size()) != model.m)
    throw DomainError("nominal controller dimension mismatch");
  if (barrier.h.eval(x0) < 0.0)
    throw DomainError("simulate requires x0 inside the zero-superlevel set");

  const SafetyFilter filter(model, barrier);
  Rng rng(derive_seed(seed, "simulate"));

  RolloutRecord rec;
  rec.min_h = std::numeric_limits<double>::infinity();
  std::vector<double> x = x0;
  for (int t = 0; t < steps; ++t) {
    RolloutStep step;
    step.x = x;
    step.h = barrier.h.eval(x);
    rec.min_h = std::min(rec.min_h, step.h);
    if (step.h < 0.0) ++rec.h_violations;
    step.u_nom = controller.eval(x);
    try {
      step.u = filter.apply(x, step.u_nom, tol);
    } catch (const InfeasibleStateError&) {
      ++rec.infeasible_count;
      rec.completed = false;
      rec.steps.push_back(std::move(step));
      rec.final_h = rec.steps.back().h;
      return rec;
    }
    step.margin = filter.margin(x, step.u);
    step.w = draw_disturbance(model.w_max, mode, model.n, rng);
    std::vector<double> next = model.step(x, step.u);
    for (int i = 0; i < model.n; ++i) next[i] += step.w[i];
    rec.steps.push_back(std::move(step));
    x = std::move(next);
  }
  rec.final_h = barrier.h.eval(x);
  rec.min_h = std::min(rec.min_h, rec.final_h);
  if (rec.final_h < 0.0) ++rec.h_violations;
  return rec;
}

}  // namespace cbf
