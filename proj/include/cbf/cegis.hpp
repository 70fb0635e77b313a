#pragma once

#include <functional>

#include "cbf/trainer.hpp"
#include "cbf/verifier.hpp"

namespace cbf {

struct CegisConfig {
  double epsilon_init = 1e-4;
  double epsilon_floor = 1e-8;
  double budget_seconds = 3600.0;
  int count_safe = 1200;
  int count_unsafe = 600;
  double duplicate_tol = 1e-9;  // counterexamples closer than this stall
};

struct CegisIteration {
  int index = 0;
  double epsilon = 0.0;
  std::optional<Counterexample> counterexample;
  bool duplicate = false;  // rejected as a stall, epsilon halved instead
  int train_epochs = 0;
  int train_restarts = 0;
};

enum class CegisStatus { Verified, BudgetExhausted, Stalled, TrainingFailed };

struct CegisResult {
  CegisStatus status = CegisStatus::BudgetExhausted;
  TrainResult trained;
  CandidateBarrier barrier;  // materialized candidate; valid pair when Verified
  SampleSets samples;
  std::vector<CegisIteration> history;
  double final_epsilon = 0.0;
  int iterations = 0;
  VerifyStats last_verify_stats;
};

// Invoked after every verification with the current state; used by the
// CLI to write per-iteration checkpoints.
using CheckpointSink =
    std::function<void(int iteration, const TrainResult&, const SampleSets&,
                       const std::vector<CegisIteration>&)>;

// train -> verify loop: safety counterexamples grow Xu, R-DTCBF ones grow
// Xs, retraining warm-starts from the previous parameters, epsilon halves
// after a Potential counterexample.
CegisResult run_cegis(const ProblemModel& model, int degree, const GammaParam& gamma_bounds,
                      const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                      const VerifierConfig& verify_cfg, const CegisConfig& cegis_cfg,
                      std::uint64_t seed,
                      const std::vector<std::vector<double>>& anchors = {},
                      const CheckpointSink& sink = nullptr);

}  // namespace cbf
