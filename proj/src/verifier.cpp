#include "cbf/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <limits>
#include <mutex>
#include <queue>
#include <thread>

namespace cbf {

void ProblemModel::validate() const {
  if (n <= 0) throw DomainError("model needs at least one state");
  if (m < 0) throw DomainError("negative input dimension");
  if (static_cast<int>(f.size()) != n) throw DomainError("dynamics must have one expression per state");
  if (w_max < 0.0) throw DomainError("w_max must be nonnegative");
  if (static_cast<int>(U.dim()) != m) throw DomainError("input box dimension mismatch");
  if (static_cast<int>(X.dim()) != n) throw DomainError("state box dimension mismatch");
  for (const double b : X.lb)
    if (!std::isfinite(b)) throw DomainError("state box must be finite");
  for (const double b : X.ub)
    if (!std::isfinite(b)) throw DomainError("state box must be finite");
  for (const Expr& e : f) {
    if (e.max_state_dim() > n) throw DomainError("dynamics reference undeclared state");
    if (e.max_input_dim() > m) throw DomainError("dynamics reference undeclared input");
  }
  for (const Expr& s : safe_fns) {
    if (s.max_state_dim() > n) throw DomainError("safe-set function references undeclared state");
    if (s.max_input_dim() > 0) throw DomainError("safe-set function must be state-only");
  }
}

std::vector<double> ProblemModel::step(std::span<const double> x, std::span<const double> u) const {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = f[i].eval(x, u);
  return out;
}

bool ProblemModel::in_safe_set(std::span<const double> x) const {
  for (const Expr& s : safe_fns)
    if (s.eval(x) < 0.0) return false;
  return true;
}

void CandidateBarrier::validate(int n) const {
  if (h.max_input_dim() > 0) throw DomainError("barrier must be state-only");
  if (h.max_state_dim() > n) throw DomainError("barrier references undeclared state");
  if (!(gamma0 > 0.0 && gamma0 <= 1.0)) throw DomainError("gamma0 must lie in (0, 1]");
  if (l_tilde && *l_tilde < 0.0) throw DomainError("l_tilde must be nonnegative");
}

std::vector<double> midpoint(const Box& box) { return box.midpoint(); }

double update_lipschitz(double running, double box_bound) { return std::max(running, box_bound); }

Expr robust_margin_expr(const ProblemModel& model, const CandidateBarrier& barrier) {
  std::vector<std::optional<Expr>> subs(model.n);
  for (int i = 0; i < model.n; ++i) subs[i] = model.f[i];
  const Expr h_next = barrier.h.substitute(subs, {});
  return h_next - barrier.h + Expr::constant(barrier.gamma0) * barrier.h -
         Expr::constant(barrier.l_tilde.value_or(0.0) * model.w_max);
}

double robust_margin(const ProblemModel& model, const CandidateBarrier& barrier,
                     std::span<const double> x, std::span<const double> u) {
  const std::vector<double> next = model.step(x, u);
  const double hx = barrier.h.eval(x);
  return barrier.h.eval(next) - hx + barrier.gamma0 * hx -
         barrier.l_tilde.value_or(0.0) * model.w_max;
}

namespace {

using relax::Prepared;
using relax::Underestimator;

// Symbolic work shared across all subdomains of one verification run.
struct Context {
  const ProblemModel* model = nullptr;
  CandidateBarrier barrier;  // l_tilde resolved (0 while accumulating with w_max = 0)
  VerifierConfig cfg;
  bool accumulate_l = false;

  CompiledExpr h_c;
  CompiledExpr margin_c;  // (x, u)
  std::shared_ptr<const Prepared> margin_x;        // wrt states, u symbolic
  std::shared_ptr<const Prepared> margin_shift_x;  // margin - gamma0*h, wrt states
  std::shared_ptr<const Prepared> neg_margin_u;    // wrt inputs, x symbolic
  std::shared_ptr<const Prepared> neg_h;
  std::shared_ptr<const Prepared> neg_gradsq;
  std::vector<std::shared_ptr<const Prepared>> safe;
};

Context make_context(const ProblemModel& model, const CandidateBarrier& barrier,
                     const VerifierConfig& cfg) {
  model.validate();
  barrier.validate(model.n);
  Context ctx;
  ctx.model = &model;
  ctx.barrier = barrier;
  ctx.cfg = cfg;
  ctx.accumulate_l = !barrier.l_tilde.has_value();
  if (ctx.accumulate_l) ctx.barrier.l_tilde = 0.0;

  const Expr margin = robust_margin_expr(*ctx.model, ctx.barrier);
  const Expr shift = margin - Expr::constant(ctx.barrier.gamma0) * ctx.barrier.h;
  ctx.h_c = CompiledExpr(barrier.h);
  ctx.margin_c = CompiledExpr(margin);
  ctx.margin_x = relax::prepare(margin, false, model.n);
  ctx.margin_shift_x = relax::prepare(shift, false, model.n);
  if (model.m > 0) ctx.neg_margin_u = relax::prepare(-margin, true, model.m);
  ctx.neg_h = relax::prepare(-barrier.h, false, model.n);
  ctx.neg_gradsq = relax::prepare(-grad_norm_sq(barrier.h, model.n), false, model.n);
  for (const Expr& s : model.safe_fns) ctx.safe.push_back(relax::prepare(s, false, model.n));
  return ctx;
}

// ---------------------------------------------------------------------------
// Step II: maximize the margin over U at a fixed state.

constexpr std::size_t kBestInputNodeCap = 50'000;

BestInputResult best_input_ctx(const Context& ctx, std::span<const double> x, double tol) {
  const ProblemModel& model = *ctx.model;
  BestInputResult best;
  if (model.m == 0) {
    best.value = ctx.margin_c.eval(x, {});
    return best;
  }
  const std::vector<double> xv(x.begin(), x.end());

  struct Node {
    double ub;
    std::size_t seq;
    Box box;
    bool operator<(const Node& o) const {  // max-heap: larger ub first, then older
      return ub != o.ub ? ub < o.ub : seq > o.seq;
    }
  };
  std::priority_queue<Node> open;
  std::size_t seq = 0;

  best.u_star = model.U.midpoint();
  best.value = ctx.margin_c.eval(x, best.u_star);

  auto push_node = [&](Box box) {
    const Underestimator u = relax::underestimator_on(ctx.neg_margin_u, box, xv);
    const relax::MinResult r = relax::minimize_convex_over_box(u, ctx.cfg.convex_tol);
    const double cand = ctx.margin_c.eval(x, r.argmin);
    if (cand > best.value) {
      best.value = cand;
      best.u_star = r.argmin;
    }
    open.push(Node{-r.lower_bound, seq++, std::move(box)});
  };
  push_node(model.U);

  std::size_t processed = 0;
  while (!open.empty()) {
    Node top = open.top();
    open.pop();
    if (top.ub <= best.value + tol) break;  // certified: global max <= value + tol
    if (++processed > kBestInputNodeCap)
      throw BudgetError("best_input: node cap exceeded");
    if (top.box.sq_diag() == 0.0) continue;  // point box fully evaluated
    auto [a, b] = top.box.bisect(top.box.widest_dim());
    push_node(std::move(a));
    push_node(std::move(b));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Step III cases.

struct ClassifyResult {
  SubdomainCase c = SubdomainCase::C;
  double lip_bound = std::numeric_limits<double>::infinity();
};

ClassifyResult classify_ctx(const Context& ctx, const Box& box, std::span<const double> u_star) {
  ClassifyResult res;
  try {
    const Underestimator hminus = relax::underestimator_on(ctx.neg_h, box);
    if (relax::feasibility_case_b(hminus, ctx.cfg.convex_tol)) {
      res.c = SubdomainCase::B;
      res.lip_bound = -std::numeric_limits<double>::infinity();
      return res;
    }
    res.lip_bound = relax::lipschitz_bound_prepared(ctx.neg_gradsq, box, ctx.cfg.convex_tol);
    if (!ctx.accumulate_l && res.lip_bound > *ctx.barrier.l_tilde) return res;  // Case C

    const std::vector<double> uv(u_star.begin(), u_star.end());
    const Underestimator direct = relax::underestimator_on(ctx.margin_x, box, uv);
    if (relax::minimize_convex_over_box(direct, ctx.cfg.convex_tol).lower_bound >= 0.0) {
      res.c = SubdomainCase::A;
      return res;
    }
    // Sound alternative: dropping gamma0*h(x) >= 0 (valid for x in C)
    // certifies the constraint on the C part of the box even when the
    // margin itself dips negative just outside C.
    const Underestimator shifted = relax::underestimator_on(ctx.margin_shift_x, box, uv);
    if (relax::minimize_convex_over_box(shifted, ctx.cfg.convex_tol).lower_bound >= 0.0) {
      res.c = SubdomainCase::A;
      return res;
    }
  } catch (const DomainError&) {
    // enclosure failure on this box: subdivide
  }
  res.c = SubdomainCase::C;
  return res;
}

// ---------------------------------------------------------------------------
// Worklist engine.

struct WorkItem {
  Box box;
  std::size_t depth = 0;
};

enum class Action { Approve, Split, Stop };

struct StepResult {
  Action action = Action::Split;
  Counterexample ce;  // meaningful for Stop
};

PartitionRecord g_partition;

// Runs the subdivision loop; returns the stopping counterexample if any.
// Throws BudgetError when max_subdomains is exhausted. `process` must not
// throw.
template <typename ProcessFn>
std::optional<Counterexample> run_worklist(Box root, const VerifierConfig& cfg,
                                           std::size_t& processed, std::size_t& max_depth,
                                           ProcessFn&& process, PartitionRecord* rec) {
  std::deque<WorkItem> work;
  work.push_back({std::move(root), 0});

  if (cfg.workers <= 1) {
    while (!work.empty()) {
      WorkItem item = cfg.worklist_order == WorklistOrder::FIFO ? std::move(work.front())
                                                                : std::move(work.back());
      if (cfg.worklist_order == WorklistOrder::FIFO)
        work.pop_front();
      else
        work.pop_back();
      if (processed >= cfg.max_subdomains) throw BudgetError("verifier: max_subdomains exceeded");
      ++processed;
      max_depth = std::max(max_depth, item.depth);
      const StepResult sr = process(item.box, item.depth);
      switch (sr.action) {
        case Action::Approve:
          if (rec) rec->approved.push_back(item.box);
          break;
        case Action::Split: {
          auto [a, b] = item.box.bisect(item.box.widest_dim());
          work.push_back({std::move(a), item.depth + 1});
          work.push_back({std::move(b), item.depth + 1});
          break;
        }
        case Action::Stop:
          if (rec) {
            rec->leaves.push_back(item.box);
            for (auto& w : work) rec->leaves.push_back(std::move(w.box));
          }
          return sr.ce;
      }
    }
    return std::nullopt;
  }

  // Multi-worker: shared deque, first Stop wins. Counterexamples may
  // differ from the single-worker run; stats mark the run as
  // nondeterministic.
  std::mutex mu;
  std::condition_variable cv;
  std::optional<Counterexample> found;
  bool stop = false, budget_hit = false;
  int active = 0;

  auto worker = [&] {
    std::unique_lock lk(mu);
    for (;;) {
      cv.wait(lk, [&] { return stop || !work.empty() || active == 0; });
      if (stop) return;
      if (work.empty()) {
        if (active == 0) {
          cv.notify_all();
          return;
        }
        continue;
      }
      WorkItem item = std::move(work.front());
      work.pop_front();
      if (processed >= cfg.max_subdomains) {
        stop = budget_hit = true;
        cv.notify_all();
        return;
      }
      ++processed;
      max_depth = std::max(max_depth, item.depth);
      ++active;
      lk.unlock();
      const StepResult sr = process(item.box, item.depth);
      lk.lock();
      --active;
      switch (sr.action) {
        case Action::Approve:
          break;
        case Action::Split: {
          auto [a, b] = item.box.bisect(item.box.widest_dim());
          work.push_back({std::move(a), item.depth + 1});
          work.push_back({std::move(b), item.depth + 1});
          break;
        }
        case Action::Stop:
          if (!found) found = sr.ce;
          stop = true;
          break;
      }
      cv.notify_all();
      if (stop) return;
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(cfg.workers);
  for (int i = 0; i < cfg.workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (found) return found;
  if (budget_hit) throw BudgetError("verifier: max_subdomains exceeded");
  return std::nullopt;
}

// Sound global upper bound of max ||grad h|| over C intersect X, used
// when no Lipschitz budget is provided and w_max > 0 (the margin needs
// the constant before the main pass can run).
double bound_lipschitz_over_c(const Context& ctx, const Box& root) {
  struct Leaf {
    double bound;
    std::size_t seq;
    Box box;
    bool operator<(const Leaf& o) const {
      return bound != o.bound ? bound < o.bound : seq > o.seq;
    }
  };
  std::priority_queue<Leaf> open;
  std::size_t seq = 0;
  double settled = 0.0;  // max over boxes no longer refined

  auto push_box = [&](Box b) {
    try {
      const Underestimator hminus = relax::underestimator_on(ctx.neg_h, b);
      if (relax::feasibility_case_b(hminus, ctx.cfg.convex_tol)) return;  // outside C
      const double bd = relax::lipschitz_bound_prepared(ctx.neg_gradsq, b, ctx.cfg.convex_tol);
      open.push(Leaf{bd, seq++, std::move(b)});
    } catch (const DomainError&) {
      open.push(Leaf{std::numeric_limits<double>::infinity(), seq++, std::move(b)});
    }
  };
  push_box(root);

  constexpr std::size_t kPrepassCap = 20'000;
  std::size_t splits = 0;
  while (!open.empty()) {
    const Leaf top = open.top();
    // Refine while the loosest box dominates the settled bound by > 1%.
    if (top.bound <= settled * 1.01 + 1e-12 || splits >= kPrepassCap ||
        top.box.sq_diag() <= ctx.cfg.epsilon) {
      settled = update_lipschitz(settled, top.bound);
      open.pop();
      continue;
    }
    open.pop();
    ++splits;
    auto [a, b] = top.box.bisect(top.box.widest_dim());
    push_box(std::move(a));
    push_box(std::move(b));
  }
  return settled;
}

std::optional<Counterexample> safety_pass(const Context& ctx, std::size_t& processed,
                                          VerifyStats& stats, PartitionRecord* rec) {
  const ProblemModel& model = *ctx.model;
  for (std::size_t si = 0; si < ctx.safe.size(); ++si) {
    auto process = [&](const Box& box, std::size_t) -> StepResult {
      const std::vector<double> xbar = box.midpoint();
      double h_mid = 0.0, s_mid = 0.0;
      bool mid_ok = true;
      try {
        h_mid = ctx.h_c.eval(xbar);
        s_mid = ctx.safe[si]->f_c.eval(xbar);
      } catch (const DomainError&) {
        mid_ok = false;
      }
      if (mid_ok && h_mid >= 0.0 && s_mid < 0.0) {
        Counterexample ce;
        ce.state = xbar;
        ce.kind = CounterexampleKind::Safety;
        ce.certainty = Certainty::Definite;
        ce.h_value = h_mid;
        ce.margin_value = s_mid;
        ce.safe_fn_index = static_cast<int>(si);
        return {Action::Stop, std::move(ce)};
      }
      try {
        const Underestimator hminus = relax::underestimator_on(ctx.neg_h, box);
        if (relax::feasibility_case_b(hminus, ctx.cfg.convex_tol)) return {Action::Approve, {}};
        const Underestimator s_under = relax::underestimator_on(ctx.safe[si], box);
        if (relax::minimize_convex_over_box(s_under, ctx.cfg.convex_tol).lower_bound >= 0.0)
          return {Action::Approve, {}};
      } catch (const DomainError&) {
        // fall through to subdivision
      }
      if (box.sq_diag() <= ctx.cfg.epsilon) {
        Counterexample ce;
        ce.state = xbar;
        ce.kind = CounterexampleKind::Safety;
        ce.certainty = Certainty::Potential;
        ce.h_value = mid_ok ? h_mid : 0.0;
        ce.margin_value = mid_ok ? s_mid : 0.0;
        ce.safe_fn_index = static_cast<int>(si);
        return {Action::Stop, std::move(ce)};
      }
      return {Action::Split, {}};
    };
    auto ce = run_worklist(model.X, ctx.cfg, processed, stats.max_depth, process,
                           si + 1 == ctx.safe.size() ? rec : nullptr);
    stats.subdomains_safety = processed;
    if (ce) return ce;
  }
  return std::nullopt;
}

struct RdtcbfPass {
  std::optional<Counterexample> ce;
  double accumulated_l = 0.0;
};

RdtcbfPass rdtcbf_pass(Context& ctx, std::size_t& processed, VerifyStats& stats,
                       PartitionRecord* rec) {
  RdtcbfPass out;
  std::mutex acc_mu;

  auto process = [&](const Box& box, std::size_t) -> StepResult {
    const std::vector<double> xbar = box.midpoint();

    // Step II at the midpoint.
    bool have_u = false;
    BestInputResult bi;
    try {
      bi = best_input_ctx(ctx, xbar, ctx.cfg.global_opt_tol);
      have_u = true;
    } catch (const BudgetError&) {
      have_u = false;
    } catch (const DomainError&) {
      have_u = false;
    }

    if (have_u) {
      double h_mid = 0.0;
      bool h_ok = true;
      try {
        h_mid = ctx.h_c.eval(xbar);
      } catch (const DomainError&) {
        h_ok = false;
      }
      if (h_ok && bi.value < 0.0 && h_mid >= 0.0) {
        Counterexample ce;
        ce.state = xbar;
        ce.kind = CounterexampleKind::RDTCBF;
        // An inexact Step II can miss by up to the tolerance; only a
        // strictly larger failure is a certified counterexample.
        ce.certainty = bi.value < -ctx.cfg.global_opt_tol ? Certainty::Definite
                                                          : Certainty::Potential;
        ce.h_value = h_mid;
        ce.margin_value = bi.value;
        return {Action::Stop, std::move(ce)};
      }

      const ClassifyResult cls = classify_ctx(ctx, box, bi.u_star);
      if (cls.c == SubdomainCase::A || cls.c == SubdomainCase::B) {
        {
          std::lock_guard lk(acc_mu);
          if (cls.c == SubdomainCase::A) {
            ++stats.case_a;
            if (std::isfinite(cls.lip_bound))
              out.accumulated_l = update_lipschitz(out.accumulated_l, cls.lip_bound);
          } else {
            ++stats.case_b;
          }
        }
        return {Action::Approve, {}};
      }
      std::lock_guard lk(acc_mu);
      ++stats.case_c;
    }

    if (box.sq_diag() <= ctx.cfg.epsilon) {
      Counterexample ce;
      ce.state = xbar;
      ce.kind = CounterexampleKind::RDTCBF;
      ce.certainty = Certainty::Potential;
      try {
        ce.h_value = ctx.h_c.eval(xbar);
      } catch (const DomainError&) {
        ce.h_value = std::numeric_limits<double>::quiet_NaN();
      }
      ce.margin_value = have_u ? bi.value : std::numeric_limits<double>::quiet_NaN();
      return {Action::Stop, std::move(ce)};
    }
    return {Action::Split, {}};
  };

  out.ce = run_worklist(ctx.model->X, ctx.cfg, processed, stats.max_depth, process, rec);
  return out;
}

}  // namespace

SubdomainCase classify_subdomain(const ProblemModel& model, const CandidateBarrier& barrier,
                                 const Box& box, std::span<const double> u_star,
                                 const VerifierConfig& cfg) {
  const Context ctx = make_context(model, barrier, cfg);
  return classify_ctx(ctx, box, u_star).c;
}

BestInputResult best_input(const ProblemModel& model, const CandidateBarrier& barrier,
                           std::span<const double> x, double tol) {
  VerifierConfig cfg;
  cfg.global_opt_tol = tol;
  const Context ctx = make_context(model, barrier, cfg);
  return best_input_ctx(ctx, x, tol);
}

const PartitionRecord& last_partition() { return g_partition; }

VerificationOutcome verify_rdtcbf(const ProblemModel& model, const CandidateBarrier& barrier,
                                  const VerifierConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  VerificationOutcome out;
  out.stats.workers = std::max(1, cfg.workers);
  out.stats.deterministic = cfg.workers <= 1;

  CandidateBarrier resolved = barrier;
  bool accumulated = false;
  if (!barrier.l_tilde && model.w_max > 0.0) {
    // Remark-style accumulation is circular when the margin needs the
    // constant; bound it first, then verify with it fixed.
    VerifierConfig pre = cfg;
    Context pre_ctx = make_context(model, barrier, pre);
    resolved.l_tilde = bound_lipschitz_over_c(pre_ctx, model.X);
    accumulated = true;
  }

  Context ctx = make_context(model, resolved, cfg);
  PartitionRecord* rec = cfg.record_partition && cfg.workers <= 1 ? &g_partition : nullptr;
  if (rec) *rec = {};

  std::size_t processed = 0;
  try {
    RdtcbfPass pass = rdtcbf_pass(ctx, processed, out.stats, rec);
    out.stats.subdomains_rdtcbf = processed;
    out.stats.l_tilde_used =
        ctx.accumulate_l ? pass.accumulated_l : *ctx.barrier.l_tilde;
    out.stats.l_tilde_accumulated = ctx.accumulate_l || accumulated;
    if (pass.ce) {
      out.status = VerifyStatus::Falsified;
      out.counterexample = std::move(pass.ce);
    } else {
      out.status = VerifyStatus::Verified;
    }
  } catch (const BudgetError&) {
    out.status = VerifyStatus::InconclusiveBudget;
    out.stats.subdomains_rdtcbf = processed;
    out.stats.l_tilde_used = ctx.barrier.l_tilde.value_or(0.0);
  }
  out.stats.rdtcbf_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::optional<Counterexample> verify_safety(const ProblemModel& model,
                                            const CandidateBarrier& barrier,
                                            const VerifierConfig& cfg, VerifyStats* stats) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx = make_context(model, barrier, cfg);
  PartitionRecord* rec = cfg.record_partition && cfg.workers <= 1 ? &g_partition : nullptr;
  if (rec) *rec = {};
  VerifyStats local;
  VerifyStats& st = stats ? *stats : local;
  std::size_t processed = 0;
  auto ce = safety_pass(ctx, processed, st, rec);
  st.subdomains_safety = processed;
  st.safety_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return ce;
}

VerificationOutcome verify_all(const ProblemModel& model, const CandidateBarrier& barrier,
                               const VerifierConfig& cfg) {
  VerificationOutcome out;
  out.stats.workers = std::max(1, cfg.workers);
  out.stats.deterministic = cfg.workers <= 1;
  try {
    VerifyStats safety_stats;
    auto ce = verify_safety(model, barrier, cfg, &safety_stats);
    out.stats.subdomains_safety = safety_stats.subdomains_safety;
    out.stats.max_depth = safety_stats.max_depth;
    out.stats.safety_ms = safety_stats.safety_ms;
    if (ce) {
      out.status = VerifyStatus::Falsified;
      out.counterexample = std::move(ce);
      return out;
    }
  } catch (const BudgetError&) {
    out.status = VerifyStatus::InconclusiveBudget;
    return out;
  }

  VerificationOutcome r = verify_rdtcbf(model, barrier, cfg);
  r.stats.subdomains_safety = out.stats.subdomains_safety;
  r.stats.safety_ms = out.stats.safety_ms;
  r.stats.max_depth = std::max(r.stats.max_depth, out.stats.max_depth);
  return r;
}

}  // namespace cbf
