#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cbf/relax.hpp"
#include "cbf/rng.hpp"
#include "support/oracles.hpp"

using namespace cbf;

namespace {

std::vector<double> random_point(const Box& box, Rng& rng) {
  std::vector<double> x(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) x[i] = rng.uniform(box.lb[i], box.ub[i]);
  return x;
}

std::vector<std::vector<double>> hessian_at(const Expr& e, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> H(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      H[i][j] = e.diff(VarRef::state(i)).diff(VarRef::state(j)).eval(x);
  return H;
}

struct Fixture {
  Expr e;
  Box box;
};

std::vector<Fixture> property_fixtures() {
  return {
      {parse_expr("-x1^2", 1, 0), Box({-1.0}, {1.0})},
      {parse_expr("sin(x1)", 1, 0), Box({0.0}, {std::numbers::pi})},
      {parse_expr("x1*x2", 2, 0), Box({-1.0, -1.0}, {1.0, 1.0})},
      {parse_expr("sin(2*x1)*cos(x2) - x1^2*x2^2", 2, 0), Box({-1.5, -1.0}, {1.0, 2.0})},
      {-oracle::poly_reference_barrier().h, Box({-1.8, -1.8}, {1.8, 1.8})},
      {parse_expr("exp(0.5*x1) - (x1 + x2)^3 + x2^4", 2, 0), Box({-1.0, -1.0}, {1.0, 1.0})},
  };
}

}  // namespace

TEST_CASE("gerschgorin_alpha: pinned coefficients") {
  const auto a1 = relax::gerschgorin_alpha(parse_expr("-x1^2", 1, 0), Box({-1.0}, {1.0}));
  REQUIRE(a1.alpha.size() == 1);
  CHECK(a1.alpha[0] == doctest::Approx(1.0));

  const auto a2 = relax::gerschgorin_alpha(parse_expr("x1^2", 1, 0), Box({0.0}, {2.0}));
  CHECK(a2.alpha[0] == 0.0);

  const auto a3 =
      relax::gerschgorin_alpha(parse_expr("x1*x2", 2, 0), Box({0.0, 0.0}, {1.0, 1.0}));
  CHECK(a3.alpha[0] == doctest::Approx(0.5));
  CHECK(a3.alpha[1] == doctest::Approx(0.5));
}

TEST_CASE("gerschgorin_alpha: zero-width dimensions are frozen") {
  const auto a = relax::gerschgorin_alpha(parse_expr("x1*x2 - x2^2", 2, 0),
                                          Box({0.5, -1.0}, {0.5, 1.0}));
  CHECK(a.alpha[0] == 0.0);
  // With x1 frozen the x2 row sees no off-diagonal coupling.
  CHECK(a.alpha[1] == doctest::Approx(1.0));
}

TEST_CASE("build_underestimator: pinned values") {
  // -x1^2 + (-1 - x)(1 - x) = -1 identically
  const auto u1 = relax::build_underestimator(parse_expr("-x1^2", 1, 0), Box({-1.0}, {1.0}));
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> x{rng.uniform(-1.0, 1.0)};
    CHECK(u1.value(x) == doctest::Approx(-1.0).epsilon(1e-12));
  }

  // already convex: alpha = 0, underestimator equals the base
  const auto u2 = relax::build_underestimator(parse_expr("x1^2 + 3*x2^2 + x1", 2, 0),
                                              Box({-2.0, -1.0}, {1.0, 1.0}));
  CHECK(u2.alpha.alpha[0] == 0.0);
  CHECK(u2.alpha.alpha[1] == 0.0);

  // vertex tightness for sin on [0, pi]
  const auto u3 = relax::build_underestimator(parse_expr("sin(x1)", 1, 0),
                                              Box({0.0}, {std::numbers::pi}));
  CHECK(u3.value(std::vector<double>{0.0}) == doctest::Approx(0.0));
  CHECK(u3.value(std::vector<double>{std::numbers::pi}) ==
        doctest::Approx(std::sin(std::numbers::pi)));
}

TEST_CASE("underestimation property: 1e4 random points per fixture") {
  Rng rng(3);
  for (const auto& [e, box] : property_fixtures()) {
    const auto u = relax::build_underestimator(e, box);
    for (int k = 0; k < 10'000; ++k) {
      const auto x = random_point(box, rng);
      CHECK(u.value(x) <= e.eval(x) + 1e-12);
    }
  }
}

TEST_CASE("vertex tightness is exact at every vertex") {
  for (const auto& [e, box] : property_fixtures()) {
    const auto u = relax::build_underestimator(e, box);
    for (const auto& v : box.vertices()) CHECK(u.value(v) == e.eval(v));
  }
}

TEST_CASE("convexity certificate: perturbed Hessian stays PSD") {
  Rng rng(4);
  for (const auto& [e, box] : property_fixtures()) {
    const auto u = relax::build_underestimator(e, box);
    for (int k = 0; k < 1'000; ++k) {
      const auto x = random_point(box, rng);
      auto H = hessian_at(e, x);
      for (std::size_t i = 0; i < H.size(); ++i) H[i][i] += 2.0 * u.alpha.alpha[i];
      CHECK(oracle::sym_eig_min(H) >= -1e-9);
    }
  }
}

TEST_CASE("refinement: halving every dimension never raises alpha") {
  for (const auto& [e, box] : property_fixtures()) {
    const auto parent = relax::gerschgorin_alpha(e, box);
    const auto mid = box.midpoint();
    const std::size_t n = box.dim();
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      Box child = box;
      for (std::size_t i = 0; i < n; ++i) {
        if ((mask >> i) & 1)
          child.lb[i] = mid[i];
        else
          child.ub[i] = mid[i];
      }
      const auto sub = relax::gerschgorin_alpha(e, child);
      for (std::size_t i = 0; i < n; ++i) CHECK(sub.alpha[i] <= parent.alpha[i] + 1e-12);
    }
  }
}

TEST_CASE("minimize_convex_over_box: pinned solutions") {
  // constant -1 underestimator
  const auto u1 = relax::build_underestimator(parse_expr("-x1^2", 1, 0), Box({-1.0}, {1.0}));
  const auto r1 = relax::minimize_convex_over_box(u1, 1e-9);
  CHECK(r1.converged);
  CHECK(r1.lower_bound == doctest::Approx(-1.0).epsilon(1e-9));

  // interior minimum
  const auto u2 = relax::build_underestimator(parse_expr("x1^2 + x2^2", 2, 0),
                                              Box({-1.0, -1.0}, {1.0, 1.0}));
  const auto r2 = relax::minimize_convex_over_box(u2, 1e-10);
  CHECK(r2.converged);
  CHECK(r2.lower_bound == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(std::fabs(r2.argmin[0]) < 1e-4);
  CHECK(std::fabs(r2.argmin[1]) < 1e-4);

  // boundary minimum
  const auto u3 = relax::build_underestimator(parse_expr("x1", 1, 0), Box({2.0}, {3.0}));
  const auto r3 = relax::minimize_convex_over_box(u3, 1e-10);
  CHECK(r3.converged);
  CHECK(r3.lower_bound == doctest::Approx(2.0));
  CHECK(r3.argmin[0] == doctest::Approx(2.0));
}

TEST_CASE("minimize_convex_over_box: lower bound is sound on fixtures") {
  Rng rng(5);
  for (const auto& [e, box] : property_fixtures()) {
    const auto u = relax::build_underestimator(e, box);
    const auto r = relax::minimize_convex_over_box(u, 1e-9);
    for (int k = 0; k < 2'000; ++k) {
      const auto x = random_point(box, rng);
      CHECK(r.lower_bound <= u.value(x) + 1e-9);
      CHECK(r.lower_bound <= e.eval(x) + 1e-9);  // transitively under the base
    }
  }
}

TEST_CASE("lipschitz_bound: dominates the grid maximum") {
  // h = 1 - x1^2: max |grad h| over C = [-1,1] is 2
  const Expr h1 = parse_expr("1 - x1^2", 1, 0);
  const Box b1({-1.5}, {1.5});
  const auto hm1 = relax::build_underestimator(-h1, b1);
  const double bound1 = relax::lipschitz_bound(h1, b1, hm1);
  const auto grid1 = oracle::grid_max_grad_norm(h1, b1, 2001);
  CHECK(grid1.value == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(bound1 >= grid1.value - 1e-9);

  // constant barrier: zero gradient, tight bound
  const Expr h2 = parse_expr("1 + 0*x1", 1, 0);
  const auto hm2 = relax::build_underestimator(-h2, b1);
  const double bound2 = relax::lipschitz_bound(h2, b1, hm2);
  CHECK(bound2 >= 0.0);
  CHECK(bound2 <= 1e-6);

  // published polynomial barrier over its domain
  const Expr h3 = oracle::poly_reference_barrier().h;
  const Box b3({-1.8, -1.8}, {1.8, 1.8});
  const auto hm3 = relax::build_underestimator(-h3, b3);
  const double bound3 = relax::lipschitz_bound(h3, b3, hm3);
  const auto grid3 = oracle::grid_max_grad_norm(h3, b3, 401);
  CHECK(bound3 >= grid3.value - 1e-9);
}

TEST_CASE("lipschitz_bound: signals boxes entirely outside C") {
  const Expr h = oracle::poly_reference_barrier().h;
  const Box outside({1.5, 1.5}, {1.7, 1.7});
  // grid confirmation that h < 0 on the whole box
  const auto grid =
      oracle::grid_max_over_superlevel(h, parse_expr("0*x1 + 1", 2, 0), outside, 101);
  CHECK(grid.found);
  CHECK(grid.value < 0.0);
  const auto hm = relax::build_underestimator(-h, outside);
  const double bound = relax::lipschitz_bound(h, outside, hm);
  CHECK(bound == -std::numeric_limits<double>::infinity());
}

TEST_CASE("feasibility_case_b: pinned decisions") {
  const Box box({-1.0, -1.0}, {1.0, 1.0});
  const Expr minus_one = parse_expr("0*x1 - 1", 2, 0);
  const auto u1 = relax::build_underestimator(-minus_one, box);
  CHECK(relax::feasibility_case_b(u1, 1e-9));

  const Expr plus_one = parse_expr("0*x1 + 1", 2, 0);
  const auto u2 = relax::build_underestimator(-plus_one, box);
  CHECK_FALSE(relax::feasibility_case_b(u2, 1e-9));

  const Expr h = oracle::poly_reference_barrier().h;
  const auto u3 = relax::build_underestimator(-h, Box({1.5, 1.5}, {1.7, 1.7}));
  CHECK(relax::feasibility_case_b(u3, 1e-9));
  const auto u4 = relax::build_underestimator(-h, Box({-0.1, -0.1}, {0.1, 0.1}));
  CHECK_FALSE(relax::feasibility_case_b(u4, 1e-9));  // box inside C
}
