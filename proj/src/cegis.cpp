#include "cbf/cegis.hpp"

#include <chrono>
#include <cmath>

namespace cbf {

namespace {

bool near_duplicate(const std::vector<CegisIteration>& history, const Counterexample& ce,
                    double tol) {
  for (const CegisIteration& it : history) {
    if (!it.counterexample) continue;
    const auto& prev = it.counterexample->state;
    if (prev.size() != ce.state.size()) continue;
    double d2 = 0.0;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const double d = prev[i] - ce.state[i];
      d2 += d * d;
    }
    if (std::sqrt(d2) <= tol) return true;
  }
  return false;
}

}  // namespace

CegisResult run_cegis(const ProblemModel& model, int degree, const GammaParam& gamma_bounds,
                      const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                      const VerifierConfig& verify_cfg, const CegisConfig& cegis_cfg,
                      std::uint64_t seed, const std::vector<std::vector<double>>& anchors,
                      const CheckpointSink& sink) {
  model.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto remaining = [&] {
    return cegis_cfg.budget_seconds -
           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  CegisResult result;
  result.final_epsilon = cegis_cfg.epsilon_init;
  result.samples = sample_initial(model, cegis_cfg.count_safe, cegis_cfg.count_unsafe,
                                  derive_seed(seed, "cegis"));
  if (!anchors.empty()) {
    for (const auto& a : anchors) {
      if (!model.in_safe_set(a)) throw DomainError("anchor state outside the safe set");
      result.samples.xi.push_back({a, Provenance::Random});
    }
  } else {
    // Default anchor: the accepted safe sample closest to the domain
    // midpoint (keeps C nonempty around the operating region).
    const std::vector<double> mid = model.X.midpoint();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < result.samples.xs.size(); ++i) {
      double d2 = 0.0;
      for (int k = 0; k < model.n; ++k) {
        const double d = result.samples.xs[i].x[k] - mid[k];
        d2 += d * d;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = i;
      }
    }
    result.samples.xi.push_back(result.samples.xs[best]);
  }

  double epsilon = cegis_cfg.epsilon_init;
  std::optional<TrainResult> warm;
  bool last_was_duplicate = false;

  for (int iter = 0;; ++iter) {
    if (remaining() <= 0.0) {
      result.status = CegisStatus::BudgetExhausted;
      result.iterations = iter;
      return result;
    }

    TrainConfig tc = train_cfg;
    tc.budget_seconds = std::min(tc.budget_seconds, std::max(1.0, remaining()));
    try {
      result.trained = train(model, result.samples, degree, gamma_bounds, loss_cfg, tc,
                             derive_seed(seed, "cegis/train/" + std::to_string(iter)), warm);
    } catch (const TrainingBudgetError&) {
      result.status = remaining() <= 0.0 ? CegisStatus::BudgetExhausted
                                         : CegisStatus::TrainingFailed;
      result.iterations = iter;
      return result;
    }
    warm = result.trained;

    result.barrier.h = result.trained.h.to_expr();
    result.barrier.gamma0 = result.trained.gamma.gamma0;
    result.barrier.l_tilde = loss_cfg.l_tilde;

    VerifierConfig vc = verify_cfg;
    vc.epsilon = epsilon;
    const VerificationOutcome outcome = verify_all(model, result.barrier, vc);
    result.last_verify_stats = outcome.stats;

    CegisIteration record;
    record.index = iter;
    record.epsilon = epsilon;
    record.train_epochs = result.trained.epochs;
    record.train_restarts = result.trained.restarts;
    record.counterexample = outcome.counterexample;

    if (outcome.status == VerifyStatus::Verified) {
      result.history.push_back(std::move(record));
      if (sink) sink(iter, result.trained, result.samples, result.history);
      result.status = CegisStatus::Verified;
      result.iterations = iter + 1;
      result.final_epsilon = epsilon;
      return result;
    }
    if (outcome.status == VerifyStatus::InconclusiveBudget) {
      result.history.push_back(std::move(record));
      if (sink) sink(iter, result.trained, result.samples, result.history);
      result.status = CegisStatus::BudgetExhausted;
      result.iterations = iter + 1;
      result.final_epsilon = epsilon;
      return result;
    }

    const Counterexample& ce = *outcome.counterexample;
    if (near_duplicate(result.history, ce, cegis_cfg.duplicate_tol)) {
      record.duplicate = true;
      const bool at_floor = epsilon <= cegis_cfg.epsilon_floor;
      result.history.push_back(std::move(record));
      if (sink) sink(iter, result.trained, result.samples, result.history);
      if (at_floor || last_was_duplicate) {
        result.status = CegisStatus::Stalled;
        result.iterations = iter + 1;
        result.final_epsilon = epsilon;
        return result;
      }
      last_was_duplicate = true;
      epsilon = std::max(0.5 * epsilon, cegis_cfg.epsilon_floor);
      continue;
    }
    last_was_duplicate = false;

    if (ce.kind == CounterexampleKind::Safety)
      result.samples.xu.push_back({ce.state, Provenance::Counterexample});
    else
      result.samples.xs.push_back({ce.state, Provenance::Counterexample});
    if (ce.certainty == Certainty::Potential)
      epsilon = std::max(0.5 * epsilon, cegis_cfg.epsilon_floor);

    result.history.push_back(std::move(record));
    if (sink) sink(iter, result.trained, result.samples, result.history);
  }
}

}  // namespace cbf
