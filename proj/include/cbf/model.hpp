#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cbf/expr.hpp"
#include "cbf/interval.hpp"

namespace cbf {

// Discrete-time system x+ = f(x, u) + w with ||w|| <= w_max, box input
// constraints, safe set {x : s_i(x) >= 0 for all i}, and a bounding box
// X containing the safe set.
struct ProblemModel {
  int n = 0;
  int m = 0;
  std::vector<Expr> f;         // length n
  double w_max = 0.0;
  Box U;                       // input box, dim m
  std::vector<Expr> safe_fns;  // s_i, state-only
  Box X;                       // state box, dim n

  void validate() const;
  // f(x, u), no disturbance.
  std::vector<double> step(std::span<const double> x, std::span<const double> u) const;
  bool in_safe_set(std::span<const double> x) const;
};

// Candidate pair: polynomial-backed h (state-only expression), linear
// class-K gamma(r) = gamma0 * r, and a candidate Lipschitz budget for h
// on its zero-superlevel set. l_tilde = nullopt requests the
// accumulation of Remark-style bounds inside the verifier.
struct CandidateBarrier {
  Expr h;
  double gamma0 = 1.0;
  std::optional<double> l_tilde;

  void validate(int n) const;
};

enum class CounterexampleKind { Safety, RDTCBF };
enum class Certainty { Definite, Potential };

struct Counterexample {
  std::vector<double> state;
  CounterexampleKind kind = CounterexampleKind::RDTCBF;
  Certainty certainty = Certainty::Definite;
  double h_value = 0.0;       // h at the state, recorded for the report
  double margin_value = 0.0;  // best input margin (RDTCBF) or s_i value (Safety)
  int safe_fn_index = -1;     // which s_i failed (Safety only)
};

enum class VerifyStatus { Verified, Falsified, InconclusiveBudget };

struct VerifyStats {
  std::size_t subdomains_safety = 0;
  std::size_t subdomains_rdtcbf = 0;
  std::size_t case_a = 0;
  std::size_t case_b = 0;
  std::size_t case_c = 0;
  std::size_t max_depth = 0;
  double l_tilde_used = 0.0;
  bool l_tilde_accumulated = false;  // true when no budget was provided
  int workers = 1;
  bool deterministic = true;
  double safety_ms = 0.0;
  double rdtcbf_ms = 0.0;
};

struct VerificationOutcome {
  VerifyStatus status = VerifyStatus::Verified;
  std::optional<Counterexample> counterexample;
  VerifyStats stats;

  bool verified() const { return status == VerifyStatus::Verified; }
};

enum class WorklistOrder { FIFO, LIFO };

struct VerifierConfig {
  double epsilon = 1e-4;        // subdomain size threshold, sum of squared widths
  double global_opt_tol = 1e-6; // Step-II branch-and-bound gap
  double convex_tol = 1e-9;     // projected-gradient gap
  std::size_t max_subdomains = 2'000'000;
  WorklistOrder worklist_order = WorklistOrder::FIFO;
  int workers = 1;
  bool record_partition = false;  // debug: collect approved/leaf boxes
};

}  // namespace cbf
