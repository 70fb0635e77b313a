#include "cbf/report.hpp"

#include <json.hpp>

namespace cbf {

namespace {

using ordered_json = nlohmann::ordered_json;

const char* status_name(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::Verified:
      return "verified";
    case VerifyStatus::Falsified:
      return "falsified";
    case VerifyStatus::InconclusiveBudget:
      return "inconclusive-budget";
  }
  return "unknown";
}

ordered_json counterexample_to_json(const Counterexample& ce) {
  ordered_json o;
  o["state"] = ce.state;
  o["kind"] = ce.kind == CounterexampleKind::Safety ? "safety" : "rdtcbf";
  o["certainty"] = ce.certainty == Certainty::Definite ? "definite" : "potential";
  o["h_value"] = ce.h_value;
  o["margin_value"] = ce.margin_value;
  if (ce.safe_fn_index >= 0) o["safe_fn_index"] = ce.safe_fn_index;
  return o;
}

}  // namespace

std::string verify_report_to_json(const VerificationOutcome& outcome, double epsilon,
                                  bool include_timing) {
  ordered_json j;
  j["status"] = status_name(outcome.status);
  j["counterexample"] =
      outcome.counterexample ? counterexample_to_json(*outcome.counterexample) : ordered_json();
  j["epsilon"] = epsilon;
  j["l_tilde_used"] = outcome.stats.l_tilde_used;
  j["l_tilde_accumulated"] = outcome.stats.l_tilde_accumulated;
  ordered_json sub;
  sub["safety"] = outcome.stats.subdomains_safety;
  sub["rdtcbf"] = outcome.stats.subdomains_rdtcbf;
  sub["case_a"] = outcome.stats.case_a;
  sub["case_b"] = outcome.stats.case_b;
  sub["case_c"] = outcome.stats.case_c;
  sub["max_depth"] = outcome.stats.max_depth;
  j["subdomains"] = std::move(sub);
  j["workers"] = outcome.stats.workers;
  j["deterministic"] = outcome.stats.deterministic;
  if (include_timing) {
    ordered_json t;
    t["safety_ms"] = outcome.stats.safety_ms;
    t["rdtcbf_ms"] = outcome.stats.rdtcbf_ms;
    j["timing"] = std::move(t);
  }
  return j.dump(2) + "\n";
}

std::string synthesis_report_to_json(const CegisResult& result, std::uint64_t seed) {
  ordered_json j;
  switch (result.status) {
    case CegisStatus::Verified:
      j["status"] = "verified";
      break;
    case CegisStatus::BudgetExhausted:
      j["status"] = "budget-exhausted";
      break;
    case CegisStatus::Stalled:
      j["status"] = "stalled";
      break;
    case CegisStatus::TrainingFailed:
      j["status"] = "training-failed";
      break;
  }
  j["seed"] = seed;
  j["iterations"] = result.iterations;
  j["final_epsilon"] = result.final_epsilon;
  j["gamma0"] = result.trained.gamma.gamma0;
  ordered_json hist = ordered_json::array();
  for (const CegisIteration& it : result.history) {
    ordered_json o;
    o["iteration"] = it.index;
    o["epsilon"] = it.epsilon;
    o["train_epochs"] = it.train_epochs;
    o["train_restarts"] = it.train_restarts;
    o["duplicate"] = it.duplicate;
    o["counterexample"] =
        it.counterexample ? counterexample_to_json(*it.counterexample) : ordered_json();
    hist.push_back(std::move(o));
  }
  j["history"] = std::move(hist);
  ordered_json sub;
  sub["safety"] = result.last_verify_stats.subdomains_safety;
  sub["rdtcbf"] = result.last_verify_stats.subdomains_rdtcbf;
  sub["max_depth"] = result.last_verify_stats.max_depth;
  j["last_verification"] = std::move(sub);
  j["samples"] = {{"xs", result.samples.xs.size()},
                  {"xu", result.samples.xu.size()},
                  {"xi", result.samples.xi.size()}};
  return j.dump(2) + "\n";
}

}  // namespace cbf
