#pragma once

#include <memory>

#include "cbf/model.hpp"
#include "cbf/relax.hpp"

namespace cbf {

// Raised when an inner global optimization runs out of nodes; the
// branch-and-bound caller treats the subdomain conservatively.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

std::vector<double> midpoint(const Box& box);

// F_u(x, u) = h(f(x,u)) - h(x) + gamma0*h(x) - l_tilde*w_max.
double robust_margin(const ProblemModel& model, const CandidateBarrier& barrier,
                     std::span<const double> x, std::span<const double> u);

struct BestInputResult {
  std::vector<double> u_star;
  double value = 0.0;  // exact margin at u_star; global max <= value + tol
};

// Maximizes the robust margin over U at a fixed state by branch-and-bound
// with convex underestimators of the negated margin.
BestInputResult best_input(const ProblemModel& model, const CandidateBarrier& barrier,
                           std::span<const double> x, double tol);

double update_lipschitz(double running, double box_bound);

// H(x,u) - l_tilde*w_max as a single expression with symbolic inputs;
// l_tilde falls back to 0 when the barrier carries none.
Expr robust_margin_expr(const ProblemModel& model, const CandidateBarrier& barrier);

enum class SubdomainCase { A, B, C };

SubdomainCase classify_subdomain(const ProblemModel& model, const CandidateBarrier& barrier,
                                 const Box& box, std::span<const double> u_star,
                                 const VerifierConfig& cfg);

VerificationOutcome verify_rdtcbf(const ProblemModel& model, const CandidateBarrier& barrier,
                                  const VerifierConfig& cfg);

// Sound check of C subseteq S; returns a counterexample if one is found.
std::optional<Counterexample> verify_safety(const ProblemModel& model,
                                            const CandidateBarrier& barrier,
                                            const VerifierConfig& cfg, VerifyStats* stats = nullptr);

// Safety first, then the R-DTCBF constraint.
VerificationOutcome verify_all(const ProblemModel& model, const CandidateBarrier& barrier,
                               const VerifierConfig& cfg);

// Debug surface for the partition-integrity tests: approved and
// epsilon-leaf boxes collected during the last single-worker run.
struct PartitionRecord {
  std::vector<Box> approved;
  std::vector<Box> leaves;  // boxes still pending when the run stopped
};
const PartitionRecord& last_partition();

}  // namespace cbf
