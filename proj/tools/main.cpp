#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cbf/artifact.hpp"
#include "cbf/cegis.hpp"
#include "cbf/contour.hpp"
#include "cbf/problem_file.hpp"
#include "cbf/report.hpp"
#include "cbf/runtime.hpp"

namespace fs = std::filesystem;
using namespace cbf;

namespace {

int resolve_workers(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("BARRIER_FORGE_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write '" + path.string() + "'");
  out << content;
}

std::string format_state(const std::vector<double>& x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(x[i]);
  }
  return s + ")";
}

int cmd_synthesize(const std::string& problem_path, const std::string& out_dir,
                   std::optional<std::uint64_t> seed, std::optional<double> epsilon,
                   std::optional<double> budget, int workers) {
  ProblemSpec spec = load_problem_file(problem_path);
  if (seed) spec.seed = *seed;
  if (epsilon) spec.cegis_cfg.epsilon_init = *epsilon;
  if (budget) spec.cegis_cfg.budget_seconds = *budget;
  spec.verify_cfg.workers = workers;

  fs::create_directories(fs::path(out_dir) / "checkpoints");

  CheckpointSink sink = [&](int iter, const TrainResult& trained, const SampleSets& samples,
                            const std::vector<CegisIteration>& history) {
    Artifact ck;
    ck.seed = spec.seed;
    ck.h = trained.h;
    ck.gamma = trained.gamma;
    ck.l_tilde = spec.loss_cfg.l_tilde;
    ck.net = trained.net;
    ck.loss_cfg = spec.loss_cfg;
    ck.samples = samples;
    char name[32];
    std::snprintf(name, sizeof name, "iter_%03d.json", iter);
    save_artifact((fs::path(out_dir) / "checkpoints" / name).string(), ck);

    std::string log = "iteration,kind,certainty,state\n";
    for (const CegisIteration& it : history) {
      if (!it.counterexample) continue;
      const Counterexample& ce = *it.counterexample;
      log += std::to_string(it.index) + "," +
             (ce.kind == CounterexampleKind::Safety ? "safety" : "rdtcbf") + "," +
             (ce.certainty == Certainty::Definite ? "definite" : "potential") + ",\"" +
             format_state(ce.state) + "\"\n";
    }
    write_file(fs::path(out_dir) / "checkpoints" / "counterexamples.csv", log);
  };

  const auto t0 = std::chrono::steady_clock::now();
  CegisResult result =
      run_cegis(spec.model, spec.degree, spec.gamma_bounds, spec.loss_cfg, spec.train_cfg,
                spec.verify_cfg, spec.cegis_cfg, spec.seed, spec.anchors, sink);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_file(fs::path(out_dir) / "report.json", synthesis_report_to_json(result, spec.seed));
  if (result.status == CegisStatus::Verified) {
    const Artifact a = artifact_from_cegis(result, spec.seed, spec.loss_cfg);
    save_artifact((fs::path(out_dir) / "artifact.json").string(), a);
    std::cerr << "verified after " << result.iterations << " iteration(s), " << secs << " s\n";
    return 0;
  }
  std::cerr << "synthesis did not verify (" << result.iterations << " iteration(s), " << secs
            << " s)\n";
  return 2;
}

int cmd_verify(const std::string& problem_path, const std::string& artifact_path,
               const std::string& out_dir, std::optional<double> epsilon, int workers) {
  ProblemSpec spec = load_problem_file(problem_path);
  const Artifact a = load_artifact(artifact_path);
  const CandidateBarrier barrier = barrier_from_artifact(a);
  VerifierConfig cfg = spec.verify_cfg;
  if (epsilon) cfg.epsilon = *epsilon;
  cfg.workers = workers;

  const VerificationOutcome outcome = verify_all(spec.model, barrier, cfg);
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "verify_report.json",
             verify_report_to_json(outcome, cfg.epsilon, /*include_timing=*/true));
  switch (outcome.status) {
    case VerifyStatus::Verified:
      std::cerr << "verified\n";
      return 0;
    case VerifyStatus::Falsified:
      std::cerr << "falsified at " << format_state(outcome.counterexample->state) << "\n";
      return 3;
    case VerifyStatus::InconclusiveBudget:
      std::cerr << "inconclusive: subdomain budget exhausted\n";
      return 4;
  }
  return 1;
}

int cmd_simulate(const std::string& problem_path, const std::string& artifact_path,
                 const std::string& out_dir, std::optional<std::uint64_t> seed) {
  ProblemSpec spec = load_problem_file(problem_path);
  const Artifact a = load_artifact(artifact_path);
  const CandidateBarrier barrier = barrier_from_artifact(a);
  if (seed) spec.seed = *seed;

  NominalController controller;
  controller.exprs = spec.nominal;

  fs::create_directories(out_dir);
  std::size_t violations = 0, infeasible = 0;
  double min_h = std::numeric_limits<double>::infinity();
  double max_violation = 0.0;

  for (int s = 0; s < spec.sim_seeds; ++s) {
    const std::uint64_t rollout_seed = derive_seed(spec.seed, "rollout/" + std::to_string(s));
    const RolloutRecord rec = simulate(spec.model, barrier, controller, spec.x0, spec.sim_steps,
                                       spec.sim_mode, rollout_seed, spec.sim_tol);
    violations += rec.h_violations;
    infeasible += rec.infeasible_count;
    min_h = std::min(min_h, rec.min_h);
    if (rec.min_h < 0.0) max_violation = std::max(max_violation, -rec.min_h);

    std::string csv = "step";
    for (int i = 1; i <= spec.model.n; ++i) csv += ",x" + std::to_string(i);
    for (int i = 1; i <= spec.model.m; ++i) csv += ",u_nom" + std::to_string(i);
    for (int i = 1; i <= spec.model.m; ++i) csv += ",u" + std::to_string(i);
    for (int i = 1; i <= spec.model.n; ++i) csv += ",w" + std::to_string(i);
    csv += ",h,margin\n";
    char buf[32];
    for (std::size_t t = 0; t < rec.steps.size(); ++t) {
      const RolloutStep& st = rec.steps[t];
      csv += std::to_string(t);
      auto append = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        csv += buf;
      };
      for (double v : st.x) append(v);
      for (double v : st.u_nom) append(v);
      for (double v : st.u) append(v);
      for (double v : st.w) append(v);
      append(st.h);
      append(st.margin);
      csv += "\n";
    }
    write_file(fs::path(out_dir) / ("rollout_" + std::to_string(s) + ".csv"), csv);
  }

  std::string summary = "{\n  \"seeds\": " + std::to_string(spec.sim_seeds) +
                        ",\n  \"steps\": " + std::to_string(spec.sim_steps) +
                        ",\n  \"min_h\": " + std::to_string(min_h) +
                        ",\n  \"max_violation\": " + std::to_string(max_violation) +
                        ",\n  \"h_violations\": " + std::to_string(violations) +
                        ",\n  \"infeasibilities\": " + std::to_string(infeasible) + "\n}\n";
  write_file(fs::path(out_dir) / "summary.json", summary);

  if (violations == 0 && infeasible == 0) return 0;
  std::cerr << violations << " violation(s), " << infeasible << " infeasibilit(ies)\n";
  return 1;
}

int cmd_export_plot(const std::string& problem_path, const std::string& artifact_path,
                    const std::string& out_dir, int grid, const std::string& slice) {
  ProblemSpec spec = load_problem_file(problem_path);
  const Artifact a = load_artifact(artifact_path);
  const CandidateBarrier barrier = barrier_from_artifact(a);

  int di = 0, dj = 1;
  if (spec.model.n != 2) {
    if (slice.empty()) {
      std::cerr << "problem has " << spec.model.n << " states; --slice i,j is required\n";
      return 1;
    }
  }
  if (!slice.empty()) {
    if (std::sscanf(slice.c_str(), "%d,%d", &di, &dj) != 2 || di < 1 || dj < 1 ||
        di > spec.model.n || dj > spec.model.n || di == dj) {
      std::cerr << "--slice needs two distinct 1-based state indices i,j\n";
      return 1;
    }
    --di;
    --dj;
  }

  fs::create_directories(out_dir);
  auto write_points = [&](const std::string& name, const std::vector<std::vector<double>>& pts) {
    std::string csv;
    for (int i = 1; i <= spec.model.n; ++i) csv += (i > 1 ? "," : "") + ("x" + std::to_string(i));
    csv += "\n";
    char buf[32];
    for (const auto& p : pts) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof buf, i ? ",%.17g" : "%.17g", p[i]);
        csv += buf;
      }
      csv += "\n";
    }
    write_file(fs::path(out_dir) / name, csv);
  };

  write_points("contour_c.csv", zero_contour(barrier.h, spec.model.X, di, dj, grid));
  for (std::size_t i = 0; i < spec.model.safe_fns.size(); ++i)
    write_points("contour_s" + std::to_string(i + 1) + ".csv",
                 zero_contour(spec.model.safe_fns[i], spec.model.X, di, dj, grid));

  std::string csv = "set,tag";
  for (int i = 1; i <= spec.model.n; ++i) csv += ",x" + std::to_string(i);
  csv += "\n";
  char buf[32];
  auto dump_set = [&](const char* name, const std::vector<Sample>& set) {
    for (const Sample& s : set) {
      csv += name;
      csv += s.tag == Provenance::Random ? ",random" : ",counterexample";
      for (double v : s.x) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        csv += buf;
      }
      csv += "\n";
    }
  };
  dump_set("xs", a.samples.xs);
  dump_set("xu", a.samples.xu);
  dump_set("xi", a.samples.xi);
  write_file(fs::path(out_dir) / "samples.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"barrier-forge: synthesis, sound verification and deployment of robust "
               "discrete-time control barrier functions"};
  app.require_subcommand(1);

  std::string problem, artifact, out = ".", slice;
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
  double epsilon_flag = 0.0, budget_flag = 0.0;
  bool epsilon_set = false, budget_set = false;
  int workers_flag = 0, grid = 401;

  auto add_common = [&](CLI::App* cmd, bool with_artifact) {
    cmd->add_option("problem", problem, "problem file")->required();
    if (with_artifact) cmd->add_option("artifact", artifact, "artifact JSON")->required();
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--workers", workers_flag, "verifier worker threads");
  };

  CLI::App* syn = app.add_subcommand("synthesize", "train + verify loop, write a verified artifact");
  add_common(syn, false);
  syn->add_option("--seed", seed_flag, "top-level seed")->each([&](const std::string&) {
    seed_set = true;
  });
  syn->add_option("--epsilon", epsilon_flag, "initial subdomain-size threshold")
      ->each([&](const std::string&) { epsilon_set = true; });
  syn->add_option("--budget-seconds", budget_flag, "wall-clock budget")
      ->each([&](const std::string&) { budget_set = true; });

  CLI::App* ver = app.add_subcommand("verify", "verify a stored pair against a problem");
  add_common(ver, true);
  ver->add_option("--epsilon", epsilon_flag, "subdomain-size threshold")
      ->each([&](const std::string&) { epsilon_set = true; });

  CLI::App* sim = app.add_subcommand("simulate", "closed-loop rollouts with the safety filter");
  add_common(sim, true);
  sim->add_option("--seed", seed_flag, "top-level seed")->each([&](const std::string&) {
    seed_set = true;
  });

  CLI::App* plot = app.add_subcommand("export-plot", "contour and sample CSVs for plotting");
  add_common(plot, true);
  plot->add_option("--grid", grid, "grid resolution per axis");
  plot->add_option("--slice", slice, "two 1-based state indices i,j for >2-D problems");

  CLI11_PARSE(app, argc, argv);

  try {
    const int workers = resolve_workers(workers_flag);
    if (syn->parsed())
      return cmd_synthesize(problem, out,
                            seed_set ? std::optional<std::uint64_t>(seed_flag) : std::nullopt,
                            epsilon_set ? std::optional<double>(epsilon_flag) : std::nullopt,
                            budget_set ? std::optional<double>(budget_flag) : std::nullopt,
                            workers);
    if (ver->parsed())
      return cmd_verify(problem, artifact, out,
                        epsilon_set ? std::optional<double>(epsilon_flag) : std::nullopt, workers);
    if (sim->parsed())
      return cmd_simulate(problem, artifact, out,
                          seed_set ? std::optional<std::uint64_t>(seed_flag) : std::nullopt);
    if (plot->parsed()) return cmd_export_plot(problem, artifact, out, grid, slice);
  } catch (const ProblemFileError& e) {
    std::cerr << "problem file error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "expression error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
