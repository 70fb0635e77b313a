#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbf/model.hpp"
#include "cbf/verifier.hpp"

// Independent reference computations for the test suites. Everything in
// here deliberately avoids the library's relaxation/branch-and-bound
// path: grids, finite differences and dense scans only.
namespace oracle {

// Central finite difference of f at x along coordinate i.
double central_diff(const std::function<double(const std::vector<double>&)>& f,
                    std::vector<double> x, std::size_t i, double step = 1e-5);

// Dense grid over the box; res points per axis.
std::vector<double> grid_axis(double lo, double hi, int res);

struct GridMax {
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> arg;
  bool found = false;
};

// max of g over grid points of box where h >= threshold.
GridMax grid_max_over_superlevel(const cbf::Expr& g, const cbf::Expr& h, const cbf::Box& box,
                                 int res, double threshold = 0.0);

// max of ||grad h|| over grid points with h >= threshold.
GridMax grid_max_grad_norm(const cbf::Expr& h, const cbf::Box& box, int res,
                           double threshold = 0.0);

struct WorstMargin {
  double value = std::numeric_limits<double>::infinity();  // min over states of max over inputs
  std::vector<double> state;
  double h_at_state = 0.0;
  bool found = false;  // false when no grid state clears the h threshold
};

// min over {x grid : h(x) >= h_threshold} of max over the U grid of the
// robust margin. Exact grid semantics; inputs that enter the margin
// quadratically use the parabola-on-a-grid shortcut (max attained at an
// endpoint or adjacent to the vertex), everything else is a full scan.
WorstMargin worst_margin_on_grids(const cbf::ProblemModel& model,
                                  const cbf::CandidateBarrier& barrier, int res_x, int res_u,
                                  double h_threshold = 0.0, bool force_full_scan = false);

// max over the U grid of the margin at one fixed state (full scan).
double max_margin_at_state(const cbf::ProblemModel& model, const cbf::CandidateBarrier& barrier,
                           const std::vector<double>& x, int res_u);

// Smallest eigenvalue of a small symmetric matrix (cyclic Jacobi).
double sym_eig_min(std::vector<std::vector<double>> a);

// --- shared fixtures -------------------------------------------------------

// Disturbed two-state polynomial system (forward Euler, Ts = 0.1) with
// box inputs and a disk safe set.
cbf::ProblemModel poly_system_model();
// Its published degree-2 barrier with gamma0 = 0.9.
cbf::CandidateBarrier poly_reference_barrier(std::optional<double> l_tilde = std::nullopt);

// Cart-pole restricted to (angle, angular velocity), Ts = 0.01.
cbf::ProblemModel cartpole_proj_model();
cbf::CandidateBarrier cartpole_reference_barrier(std::optional<double> l_tilde = std::nullopt);

// Randomized small instance for the soundness suite: control-affine
// polynomial dynamics, concave quadratic barrier, w_max in {0, 0.05}.
struct RandomInstance {
  cbf::ProblemModel model;
  cbf::CandidateBarrier barrier;
};
RandomInstance make_random_instance(std::uint64_t seed);

// --- process helpers -------------------------------------------------------

int run_cli(const std::vector<std::string>& args);  // returns exit code
std::string read_file(const std::string& path);
std::string bin_path();       // barrier-forge binary (compile definition / env)
std::string fixtures_dir();

}  // namespace oracle
