#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cbf/artifact.hpp"
#include "cbf/cegis.hpp"
#include "cbf/problem_file.hpp"
#include "cbf/report.hpp"
#include "cbf/runtime.hpp"

namespace py = pybind11;
using namespace cbf;

namespace {

VarRef parse_var(const std::string& name) {
  if (name.size() < 2 || (name[0] != 'x' && name[0] != 'u'))
    throw DomainError("variable must look like x1 or u2");
  const int idx = std::stoi(name.substr(1));
  if (idx < 1) throw DomainError("variable indices are 1-based");
  return name[0] == 'x' ? VarRef::state(idx - 1) : VarRef::input(idx - 1);
}

py::dict counterexample_dict(const std::optional<Counterexample>& ce) {
  py::dict d;
  if (!ce) return d;
  d["state"] = ce->state;
  d["kind"] = ce->kind == CounterexampleKind::Safety ? "safety" : "rdtcbf";
  d["certainty"] = ce->certainty == Certainty::Definite ? "definite" : "potential";
  d["h_value"] = ce->h_value;
  d["margin_value"] = ce->margin_value;
  return d;
}

py::dict outcome_dict(const VerificationOutcome& out) {
  py::dict d;
  switch (out.status) {
    case VerifyStatus::Verified:
      d["status"] = "verified";
      break;
    case VerifyStatus::Falsified:
      d["status"] = "falsified";
      break;
    case VerifyStatus::InconclusiveBudget:
      d["status"] = "inconclusive-budget";
      break;
  }
  d["counterexample"] = counterexample_dict(out.counterexample);
  d["l_tilde_used"] = out.stats.l_tilde_used;
  d["subdomains_safety"] = out.stats.subdomains_safety;
  d["subdomains_rdtcbf"] = out.stats.subdomains_rdtcbf;
  return d;
}

CandidateBarrier barrier_from_json_text(const std::string& artifact_json) {
  return barrier_from_artifact(artifact_from_json(artifact_json));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust discrete-time control barrier functions: synthesis, sound "
            "verification and safe-control filtering.";

  py::register_exception<DomainError>(m, "DomainError");
  py::register_exception<ParseError>(m, "ExprParseError");
  py::register_exception<ProblemFileError>(m, "ProblemFileError");
  py::register_exception<InfeasibleStateError>(m, "InfeasibleStateError");

  py::class_<Expr>(m, "Expr")
      .def("__call__",
           [](const Expr& e, const std::vector<double>& x, const std::vector<double>& u) {
             return e.eval(x, u);
           },
           py::arg("x"), py::arg("u") = std::vector<double>{})
      .def("diff", [](const Expr& e, const std::string& var) { return e.diff(parse_var(var)); })
      .def("__str__", &Expr::to_string)
      .def("same_as", &Expr::same_as);

  m.def("parse_expr", &parse_expr, py::arg("text"), py::arg("n_states"), py::arg("n_inputs"));

  py::class_<ProblemSpec>(m, "Problem")
      .def_property_readonly("n", [](const ProblemSpec& s) { return s.model.n; })
      .def_property_readonly("m", [](const ProblemSpec& s) { return s.model.m; })
      .def_property_readonly("w_max", [](const ProblemSpec& s) { return s.model.w_max; })
      .def_property_readonly("seed", [](const ProblemSpec& s) { return s.seed; });

  m.def("load_problem", &parse_problem_text, py::arg("text"),
        "Parse a problem description from its text form.");
  m.def("load_problem_file", &load_problem_file, py::arg("path"));

  m.def(
      "verify",
      [](const ProblemSpec& spec, const std::string& artifact_json,
         std::optional<double> epsilon, int workers) {
        VerifierConfig cfg = spec.verify_cfg;
        if (epsilon) cfg.epsilon = *epsilon;
        cfg.workers = workers;
        const CandidateBarrier b = barrier_from_json_text(artifact_json);
        return outcome_dict(verify_all(spec.model, b, cfg));
      },
      py::arg("problem"), py::arg("artifact_json"), py::arg("epsilon") = std::nullopt,
      py::arg("workers") = 1);

  m.def(
      "verify_pair",
      [](const ProblemSpec& spec, const std::string& h_text, double gamma0,
         std::optional<double> l_tilde, std::optional<double> epsilon) {
        CandidateBarrier b;
        b.h = parse_expr(h_text, spec.model.n, 0);
        b.gamma0 = gamma0;
        b.l_tilde = l_tilde;
        VerifierConfig cfg = spec.verify_cfg;
        if (epsilon) cfg.epsilon = *epsilon;
        return outcome_dict(verify_all(spec.model, b, cfg));
      },
      py::arg("problem"), py::arg("h"), py::arg("gamma0"), py::arg("l_tilde") = std::nullopt,
      py::arg("epsilon") = std::nullopt,
      "Verify a barrier given as an expression string with gamma(r) = gamma0*r.");

  m.def(
      "synthesize",
      [](const ProblemSpec& spec_in, std::optional<std::uint64_t> seed,
         std::optional<double> budget_seconds) {
        ProblemSpec spec = spec_in;
        if (seed) spec.seed = *seed;
        if (budget_seconds) spec.cegis_cfg.budget_seconds = *budget_seconds;
        const CegisResult r =
            run_cegis(spec.model, spec.degree, spec.gamma_bounds, spec.loss_cfg, spec.train_cfg,
                      spec.verify_cfg, spec.cegis_cfg, spec.seed, spec.anchors);
        py::dict d;
        switch (r.status) {
          case CegisStatus::Verified:
            d["status"] = "verified";
            break;
          case CegisStatus::BudgetExhausted:
            d["status"] = "budget-exhausted";
            break;
          case CegisStatus::Stalled:
            d["status"] = "stalled";
            break;
          case CegisStatus::TrainingFailed:
            d["status"] = "training-failed";
            break;
        }
        d["iterations"] = r.iterations;
        d["gamma0"] = r.trained.gamma.gamma0;
        if (r.status == CegisStatus::Verified) {
          d["h"] = r.barrier.h.to_string();
          d["artifact_json"] = artifact_to_json(artifact_from_cegis(r, spec.seed, spec.loss_cfg));
        }
        return d;
      },
      py::arg("problem"), py::arg("seed") = std::nullopt,
      py::arg("budget_seconds") = std::nullopt,
      "Counterexample-guided synthesis; returns the verified artifact JSON on success.");

  m.def(
      "safe_control",
      [](const ProblemSpec& spec, const std::string& artifact_json, const std::vector<double>& x,
         const std::vector<double>& u_nom, double tol) {
        const CandidateBarrier b = barrier_from_json_text(artifact_json);
        return safe_control(spec.model, b, x, u_nom, tol);
      },
      py::arg("problem"), py::arg("artifact_json"), py::arg("x"), py::arg("u_nom"),
      py::arg("tol") = 1e-6);

  m.def(
      "simulate",
      [](const ProblemSpec& spec, const std::string& artifact_json,
         std::optional<std::uint64_t> seed, std::optional<int> steps) {
        const CandidateBarrier b = barrier_from_json_text(artifact_json);
        NominalController controller;
        controller.exprs = spec.nominal;
        const RolloutRecord rec =
            simulate(spec.model, b, controller, spec.x0, steps.value_or(spec.sim_steps),
                     spec.sim_mode, seed.value_or(spec.seed), spec.sim_tol);
        py::dict d;
        d["steps"] = rec.steps.size();
        d["min_h"] = rec.min_h;
        d["h_violations"] = rec.h_violations;
        d["infeasibilities"] = rec.infeasible_count;
        d["completed"] = rec.completed;
        return d;
      },
      py::arg("problem"), py::arg("artifact_json"), py::arg("seed") = std::nullopt,
      py::arg("steps") = std::nullopt);
}
