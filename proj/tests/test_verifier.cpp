#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cbf/verifier.hpp"
#include "support/oracles.hpp"

using namespace cbf;

namespace {

// 1-D integrator x+ = x + u over a disk safe set.
ProblemModel integrator_model(double u_lo, double u_hi) {
  ProblemModel model;
  model.n = 1;
  model.m = 1;
  model.f.push_back(parse_expr("x1 + u1", 1, 1));
  model.w_max = 0.0;
  model.U = Box({u_lo}, {u_hi});
  model.safe_fns.push_back(parse_expr("2.25 - x1^2", 1, 0));
  model.X = Box({-1.6}, {1.6});
  return model;
}

CandidateBarrier parabola_barrier(double gamma0) {
  CandidateBarrier b;
  b.h = parse_expr("1 - x1^2", 1, 0);
  b.gamma0 = gamma0;
  b.l_tilde = 4.0;
  return b;
}

ProblemModel static_model_2d() {
  ProblemModel model;
  model.n = 2;
  model.m = 0;
  model.f.push_back(Expr::state(0));
  model.f.push_back(Expr::state(1));
  model.w_max = 0.0;
  model.U = Box();
  model.safe_fns.push_back(parse_expr("4 - x1^2 - x2^2", 2, 0));
  model.X = Box({-2.1, -2.1}, {2.1, 2.1});
  return model;
}

double box_volume(const Box& b) {
  double v = 1.0;
  for (std::size_t i = 0; i < b.dim(); ++i) v *= b.width(i);
  return v;
}

double overlap_volume(const Box& a, const Box& b) {
  double v = 1.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
    v *= std::max(0.0, std::min(a.ub[i], b.ub[i]) - std::max(a.lb[i], b.lb[i]));
  return v;
}

}  // namespace

TEST_CASE("midpoint") {
  CHECK(midpoint(Box({0.0, -1.0}, {2.0, 1.0})) == std::vector<double>{1.0, 0.0});
  CHECK(midpoint(Box({0.7}, {0.7})) == std::vector<double>{0.7});
  CHECK(midpoint(Box({-1.5, -1.5}, {1.5, 1.5})) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("robust_margin: telescoping and plug-in values") {
  // identity dynamics, gamma0 = 1, w = 0: margin telescopes to h(x)
  ProblemModel st = static_model_2d();
  CandidateBarrier b;
  b.h = parse_expr("1 - x1^2 - 0.5*x2^2", 2, 0);
  b.gamma0 = 1.0;
  b.l_tilde = 0.0;
  for (double a : {-0.9, 0.0, 0.4})
    CHECK(robust_margin(st, b, std::vector<double>{a, 0.2}, {}) ==
          doctest::Approx(b.h.eval(std::vector<double>{a, 0.2})));

  // polynomial case study at the origin with l_tilde = 5:
  // f(0,0,(0,0)) = (0,0), so the margin is 0.9*1 - 5*0.04
  const auto model = oracle::poly_system_model();
  const auto ref = oracle::poly_reference_barrier(5.0);
  CHECK(model.step(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}) ==
        std::vector<double>{0.0, 0.0});
  CHECK(robust_margin(model, ref, std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}) ==
        doctest::Approx(0.9 - 5.0 * 0.04));

  // static system, w = 0: margin is gamma0 * h(x)
  b.gamma0 = 0.6;
  for (double a : {-0.5, 0.3})
    CHECK(robust_margin(st, b, std::vector<double>{a, -0.1}, {}) ==
          doctest::Approx(0.6 * b.h.eval(std::vector<double>{a, -0.1})));
}

TEST_CASE("best_input: affine margin peaks at a vertex") {
  ProblemModel model;
  model.n = 1;
  model.m = 1;
  model.f.push_back(parse_expr("x1 + u1", 1, 1));
  model.w_max = 0.0;
  model.U = Box({-1.5}, {1.5});
  model.safe_fns.push_back(parse_expr("4 - x1^2", 1, 0));
  model.X = Box({-2.0}, {2.0});
  CandidateBarrier b;
  b.h = parse_expr("x1", 1, 0);  // margin = u1 + gamma0*x1, affine in u
  b.gamma0 = 0.5;
  b.l_tilde = 1.0;
  const auto r = best_input(model, b, std::vector<double>{0.2}, 1e-8);
  CHECK(r.u_star[0] == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(r.value == doctest::Approx(1.5 + 0.5 * 0.2).epsilon(1e-6));
}

TEST_CASE("best_input: singleton input box") {
  ProblemModel model = integrator_model(0.3, 0.3);
  const CandidateBarrier b = parabola_barrier(1.0);
  const auto r = best_input(model, b, std::vector<double>{0.1}, 1e-8);
  CHECK(r.u_star[0] == 0.3);
  CHECK(r.value == doctest::Approx(robust_margin(model, b, std::vector<double>{0.1},
                                                 std::vector<double>{0.3})));
}

TEST_CASE("best_input: matches a dense input grid on the polynomial case") {
  const auto model = oracle::poly_system_model();
  const auto ref = oracle::poly_reference_barrier(5.0);
  const std::vector<double> x{0.0, 0.0};
  const auto r = best_input(model, ref, x, 1e-6);
  const double grid = oracle::max_margin_at_state(model, ref, x, 101);
  CHECK(r.value >= grid - 1e-9);       // exact evaluations dominate grid points
  CHECK(r.value <= grid + 2e-2);       // within tolerance + grid modulus
}

TEST_CASE("classify_subdomain: the three cases") {
  VerifierConfig cfg;

  // (B) h = -1: every box is outside C
  {
    ProblemModel model = integrator_model(-1.0, 1.0);
    CandidateBarrier b;
    b.h = parse_expr("0*x1 - 1", 1, 0);
    b.gamma0 = 1.0;
    b.l_tilde = 1.0;
    CHECK(classify_subdomain(model, b, Box({-0.5}, {0.5}), std::vector<double>{0.0}, cfg) ==
          SubdomainCase::B);
  }

  // (A) static dynamics, concave h, gamma0 = 1: boxes inside C approve
  {
    ProblemModel model = static_model_2d();
    CandidateBarrier b;
    b.h = parse_expr("1 - x1^2 - x2^2", 2, 0);
    b.gamma0 = 1.0;
    b.l_tilde = 5.0;
    const Box inside({-0.3, -0.3}, {0.3, 0.3});
    // grid check: h >= 0 on the whole box
    const auto g = oracle::grid_max_over_superlevel(-b.h, parse_expr("0*x1 + 1", 2, 0), inside, 41);
    CHECK(g.value <= 0.0);
    CHECK(classify_subdomain(model, b, inside, {}, cfg) == SubdomainCase::A);
  }

  // (C) box straddling the boundary of C with outward drift
  {
    ProblemModel model;
    model.n = 2;
    model.m = 1;
    model.f.push_back(parse_expr("x1 + 0.5 + 0*u1", 2, 1));
    model.f.push_back(parse_expr("x2", 2, 1));
    model.w_max = 0.0;
    model.U = Box({-1.0}, {1.0});
    model.safe_fns.push_back(parse_expr("3 - x1^2 - x2^2", 2, 0));
    model.X = Box({-1.8, -1.8}, {1.8, 1.8});
    const auto ref = oracle::poly_reference_barrier(5.0);
    const Box straddle({1.1, -0.15}, {1.4, 0.15});
    // the grid oracle sees both signs of h on this box
    const auto above =
        oracle::grid_max_over_superlevel(ref.h, parse_expr("0*x1 + 1", 2, 0), straddle, 41);
    const auto below =
        oracle::grid_max_over_superlevel(-ref.h, parse_expr("0*x1 + 1", 2, 0), straddle, 41);
    CHECK(above.value > 0.0);
    CHECK(below.value > 0.0);
    CHECK(classify_subdomain(model, ref, straddle, std::vector<double>{0.0}, cfg) ==
          SubdomainCase::C);
  }
}

TEST_CASE("verify_rdtcbf: empty C verifies through case B") {
  ProblemModel model = integrator_model(-1.0, 1.0);
  CandidateBarrier b;
  b.h = parse_expr("0*x1 - 1", 1, 0);
  b.gamma0 = 1.0;
  b.l_tilde = 1.0;
  VerifierConfig cfg;
  const auto out = verify_rdtcbf(model, b, cfg);
  CHECK(out.status == VerifyStatus::Verified);
  CHECK(!out.counterexample);
  CHECK(out.stats.case_b >= 1);
}

TEST_CASE("verify_rdtcbf: 1-D integrator with symmetric inputs verifies") {
  ProblemModel model = integrator_model(-1.0, 1.0);
  const CandidateBarrier b = parabola_barrier(1.0);
  // grid oracle: every state in C admits a nonnegative margin
  const auto oracle_worst = oracle::worst_margin_on_grids(model, b, 401, 101);
  CHECK(oracle_worst.found);
  CHECK(oracle_worst.value >= -1e-9);
  VerifierConfig cfg;
  const auto out = verify_rdtcbf(model, b, cfg);
  CHECK(out.status == VerifyStatus::Verified);
}

TEST_CASE("verify_rdtcbf: strictly outward inputs falsify near the boundary") {
  // With u_min > 0 every admissible input pushes x = 1 out of C.
  ProblemModel model = integrator_model(0.05, 0.1);
  const CandidateBarrier b = parabola_barrier(0.5);
  const auto oracle_worst = oracle::worst_margin_on_grids(model, b, 401, 101);
  CHECK(oracle_worst.found);
  CHECK(oracle_worst.value < -1e-3);
  CHECK(oracle_worst.state[0] > 0.9);

  VerifierConfig cfg;
  const auto out = verify_rdtcbf(model, b, cfg);
  REQUIRE(out.status == VerifyStatus::Falsified);
  REQUIRE(out.counterexample.has_value());
  const auto& ce = *out.counterexample;
  CHECK(ce.kind == CounterexampleKind::RDTCBF);
  CHECK(std::fabs(ce.state[0] - 1.0) < 0.25);
  CHECK(ce.h_value >= 0.0);
  // definite counterexamples re-check against a dense input grid
  if (ce.certainty == Certainty::Definite) {
    CHECK(oracle::max_margin_at_state(model, b, ce.state, 2001) < 0.0);
  }
}

TEST_CASE("verify_rdtcbf: monotone termination with identity dynamics") {
  // w_max = 0, f = identity, gamma0 = 1: the constraint degenerates to
  // h >= 0 on C, so any compact-C barrier must verify.
  ProblemModel model = static_model_2d();
  for (const char* htxt : {"1 - x1^2 - x2^2", "1 - x1^4 - x2^4 - x1^2*x2^2",
                           "0.5 - x1^2 - x1*x2 - x2^2 + 0.1*x1"}) {
    CandidateBarrier b;
    b.h = parse_expr(htxt, 2, 0);
    b.gamma0 = 1.0;
    b.l_tilde = std::nullopt;  // accumulate
    VerifierConfig cfg;
    const auto out = verify_rdtcbf(model, b, cfg);
    CHECK(out.status == VerifyStatus::Verified);
  }
}

TEST_CASE("update_lipschitz and the accumulated bound") {
  CHECK(update_lipschitz(0.0, 2.5) == 2.5);
  CHECK(update_lipschitz(3.0, 1.0) == 3.0);

  // Accumulation over the approved partition dominates the grid maximum
  // of ||grad h|| over C.
  ProblemModel model = static_model_2d();
  CandidateBarrier b;
  b.h = parse_expr("1 - x1^2 - x2^2", 2, 0);
  b.gamma0 = 1.0;
  b.l_tilde = std::nullopt;
  VerifierConfig cfg;
  const auto out = verify_rdtcbf(model, b, cfg);
  REQUIRE(out.status == VerifyStatus::Verified);
  CHECK(out.stats.l_tilde_accumulated);
  const auto grid = oracle::grid_max_grad_norm(b.h, model.X, 801);
  CHECK(out.stats.l_tilde_used >= grid.value - 1e-9);
}

TEST_CASE("verify_safety: pinned fixtures") {
  VerifierConfig cfg;

  // empty C: containment is vacuous
  {
    ProblemModel model = static_model_2d();
    CandidateBarrier b;
    b.h = parse_expr("0*x1 - 1", 2, 0);
    b.gamma0 = 1.0;
    b.l_tilde = 1.0;
    CHECK(!verify_safety(model, b, cfg).has_value());
  }

  // published polynomial pair: ellipse contained in the disk of radius sqrt(3)
  {
    const auto model = oracle::poly_system_model();
    const auto ref = oracle::poly_reference_barrier(5.0);
    const auto grid = oracle::grid_max_over_superlevel(parse_expr("x1^2 + x2^2", 2, 0), ref.h,
                                                       model.X, 401);
    CHECK(grid.found);
    CHECK(grid.value < 3.0);
    CHECK(!verify_safety(model, ref, cfg).has_value());
  }

  // band-shaped C escapes the disk: counterexample with |x1| <= 2
  {
    ProblemModel model = static_model_2d();
    model.safe_fns.clear();
    model.safe_fns.push_back(parse_expr("3 - x1^2 - x2^2", 2, 0));
    CandidateBarrier b;
    b.h = parse_expr("4 - x1^2", 2, 0);
    b.gamma0 = 1.0;
    b.l_tilde = 5.0;
    const auto ce = verify_safety(model, b, cfg);
    REQUIRE(ce.has_value());
    CHECK(ce->kind == CounterexampleKind::Safety);
    CHECK(std::fabs(ce->state[0]) <= 2.0 + 1e-9);
    CHECK(b.h.eval(ce->state) >= 0.0);
    CHECK(model.safe_fns[0].eval(ce->state) < 0.0);
  }
}

TEST_CASE("verify_all: dispatch order and kinds") {
  VerifierConfig cfg;

  {
    ProblemModel model = static_model_2d();
    CandidateBarrier b;
    b.h = parse_expr("0*x1 - 1", 2, 0);
    b.gamma0 = 1.0;
    b.l_tilde = 1.0;
    CHECK(verify_all(model, b, cfg).status == VerifyStatus::Verified);
  }

  {
    ProblemModel model = static_model_2d();
    model.safe_fns.clear();
    model.safe_fns.push_back(parse_expr("3 - x1^2 - x2^2", 2, 0));
    CandidateBarrier b;
    b.h = parse_expr("4 - x1^2", 2, 0);
    b.gamma0 = 1.0;
    b.l_tilde = 5.0;
    const auto out = verify_all(model, b, cfg);
    REQUIRE(out.status == VerifyStatus::Falsified);
    CHECK(out.counterexample->kind == CounterexampleKind::Safety);
  }

  {
    ProblemModel model = integrator_model(0.05, 0.1);
    const CandidateBarrier b = parabola_barrier(0.5);
    const auto out = verify_all(model, b, cfg);
    REQUIRE(out.status == VerifyStatus::Falsified);
    CHECK(out.counterexample->kind == CounterexampleKind::RDTCBF);
  }
}

TEST_CASE("partition integrity: approved plus pending boxes tile X") {
  // Falsified run: approved + leaves must still tile the root box.
  ProblemModel model = integrator_model(0.05, 0.1);
  const CandidateBarrier b = parabola_barrier(0.5);
  VerifierConfig cfg;
  cfg.record_partition = true;
  const auto out = verify_rdtcbf(model, b, cfg);
  REQUIRE(out.status == VerifyStatus::Falsified);
  const auto& rec = last_partition();
  std::vector<Box> all = rec.approved;
  all.insert(all.end(), rec.leaves.begin(), rec.leaves.end());
  REQUIRE(!all.empty());
  double vol = 0.0;
  for (const auto& bx : all) vol += box_volume(bx);
  CHECK(vol == doctest::Approx(box_volume(model.X)).epsilon(1e-9));
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      CHECK(overlap_volume(all[i], all[j]) == doctest::Approx(0.0));

  // Verified run: approved boxes alone tile X.
  ProblemModel model2 = integrator_model(-1.0, 1.0);
  const auto out2 = verify_rdtcbf(model2, parabola_barrier(1.0), cfg);
  REQUIRE(out2.status == VerifyStatus::Verified);
  const auto& rec2 = last_partition();
  CHECK(rec2.leaves.empty());
  double vol2 = 0.0;
  for (const auto& bx : rec2.approved) vol2 += box_volume(bx);
  CHECK(vol2 == doctest::Approx(box_volume(model2.X)).epsilon(1e-9));
}

TEST_CASE("determinism: identical runs give identical outcomes") {
  ProblemModel model = integrator_model(0.05, 0.1);
  const CandidateBarrier b = parabola_barrier(0.5);
  VerifierConfig cfg;
  const auto a1 = verify_rdtcbf(model, b, cfg);
  const auto a2 = verify_rdtcbf(model, b, cfg);
  CHECK(a1.status == a2.status);
  REQUIRE(a1.counterexample.has_value());
  REQUIRE(a2.counterexample.has_value());
  CHECK(a1.counterexample->state == a2.counterexample->state);
  CHECK(a1.counterexample->certainty == a2.counterexample->certainty);
  CHECK(a1.stats.subdomains_rdtcbf == a2.stats.subdomains_rdtcbf);
  CHECK(a1.stats.case_a == a2.stats.case_a);
  CHECK(a1.stats.case_b == a2.stats.case_b);
  CHECK(a1.stats.case_c == a2.stats.case_c);
  CHECK(a1.stats.max_depth == a2.stats.max_depth);
}

TEST_CASE("soundness sample: randomized instances against the grid oracle") {
  // Acceptance runs 20 instances; this keeps five in the unit suite.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = oracle::make_random_instance(seed);
    const auto worst = oracle::worst_margin_on_grids(inst.model, inst.barrier, 401, 101, 1e-3);
    VerifierConfig cfg;
    cfg.max_subdomains = 400'000;
    const auto out = verify_rdtcbf(inst.model, inst.barrier, cfg);
    INFO("seed ", seed, " oracle worst ", worst.value, " status ",
         static_cast<int>(out.status));
    if (worst.found && worst.value < -1e-3) {
      CHECK(out.status != VerifyStatus::Verified);
    }
    if (out.status == VerifyStatus::Falsified &&
        out.counterexample->certainty == Certainty::Definite) {
      CHECK(out.counterexample->h_value >= 0.0);
      CHECK(oracle::max_margin_at_state(inst.model, inst.barrier, out.counterexample->state,
                                        501) < 0.0);
    }
  }
}
