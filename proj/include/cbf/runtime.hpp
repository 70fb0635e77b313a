#pragma once

#include "cbf/model.hpp"
#include "cbf/relax.hpp"

namespace cbf {

class InfeasibleStateError : public std::runtime_error {
 public:
  explicit InfeasibleStateError(const std::string& what) : std::runtime_error(what) {}
};

// State-feedback nominal controller: one expression per input channel.
struct NominalController {
  std::vector<Expr> exprs;

  static NominalController zero(int m);
  static NominalController constant(const std::vector<double>& u);
  std::vector<double> eval(std::span<const double> x) const;
};

// Online filter: min ||u - u_nom||^2 over U subject to the robust
// barrier constraint, solved globally by branch-and-bound (the
// constraint is nonconvex in u in general). Construction does the
// symbolic work once; apply() is called per control step.
class SafetyFilter {
 public:
  SafetyFilter(const ProblemModel& model, const CandidateBarrier& barrier);

  // Returns u_nom bit-for-bit whenever it is admissible and feasible.
  std::vector<double> apply(std::span<const double> x, std::span<const double> u_nom,
                            double tol = 1e-6) const;

  double margin(std::span<const double> x, std::span<const double> u) const;

 private:
  const ProblemModel* model_;
  CompiledExpr margin_c_;
  std::shared_ptr<const relax::Prepared> neg_margin_u_;
};

std::vector<double> safe_control(const ProblemModel& model, const CandidateBarrier& barrier,
                                 std::span<const double> x, std::span<const double> u_nom,
                                 double tol = 1e-6);

enum class DisturbanceMode { UniformBall, Boundary, WorstAxis };

// ||w|| <= w_max always; uniform_ball is uniform over the ball, boundary
// uniform over the sphere, worst_axis full magnitude along a
// seed-deterministic axis and sign.
std::vector<double> sample_disturbance(double w_max, DisturbanceMode mode, std::size_t dim,
                                       std::uint64_t seed);

struct RolloutStep {
  std::vector<double> x;
  std::vector<double> u_nom;
  std::vector<double> u;
  std::vector<double> w;
  double h = 0.0;
  double margin = 0.0;
};

struct RolloutRecord {
  std::vector<RolloutStep> steps;
  double min_h = 0.0;            // over every visited state incl. the last
  double final_h = 0.0;
  std::size_t h_violations = 0;  // states with h < 0
  std::size_t infeasible_count = 0;
  bool completed = true;         // false when the filter ran out of inputs
};

// Closed loop x+ = f(x, filter(x, pi_nom(x))) + w. Requires h(x0) >= 0.
// A filter infeasibility is recorded and ends the rollout.
RolloutRecord simulate(const ProblemModel& model, const CandidateBarrier& barrier,
                       const NominalController& controller, const std::vector<double>& x0,
                       int steps, DisturbanceMode mode, std::uint64_t seed, double tol = 1e-6);

}  // namespace cbf
