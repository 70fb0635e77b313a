#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cbf/artifact.hpp"
#include "cbf/problem_file.hpp"
#include "support/oracles.hpp"

using namespace cbf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "barrier_forge_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

std::string onedim_problem() { return oracle::read_file(oracle::fixtures_dir() + "/onedim.prob"); }

Artifact band_artifact() {
  Artifact a;
  a.seed = 0;
  a.h = PolyBarrierParam::make(2, 2);
  a.h.theta = {4.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  // monomial order: 1, x2, x1, x2^2, x1*x2, x1^2
  a.h.theta[5] = -1.0;
  a.gamma = GammaParam{1.0, 0.7, 1.0};
  a.l_tilde = 5.0;
  a.net = PolicyNet::make(2, {4}, Box({-1.5, -1.5}, {1.5, 1.5}));
  a.loss_cfg.l_tilde = 5.0;
  return a;
}

}  // namespace

TEST_CASE("problem files: malformed inputs are rejected with locations") {
  CHECK_THROWS_AS(parse_problem_text("[model]\nstates = 2\nbogus_key = 1\n"), ProblemFileError);
  try {
    parse_problem_text("[model]\nstates = 1\ninputs = 0\nf1 = \"x1 + \"\n");
    FAIL("expected ProblemFileError");
  } catch (const ProblemFileError& e) {
    CHECK(e.line_no == 4);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_problem_text("[nosuch]\nk = 1\n"), ProblemFileError);
  CHECK_THROWS_AS(parse_problem_text("k = 1\n"), ProblemFileError);
  // undeclared variable in an expression
  CHECK_THROWS_AS(
      parse_problem_text("[model]\nstates = 1\ninputs = 0\nf1 = \"x2\"\nx_min = -1\nx_max = 1\n"
                         "[safe_set]\ns1 = \"1 - x1^2\"\n"),
      ProblemFileError);
}

TEST_CASE("problem files: the shipped fixtures parse") {
  const auto spec = parse_problem_text(onedim_problem());
  CHECK(spec.model.n == 1);
  CHECK(spec.model.m == 1);
  CHECK(spec.model.w_max == doctest::Approx(0.02));
  CHECK(spec.anchors.size() == 3);
  CHECK(spec.sim_steps == 200);
  const auto poly = load_problem_file(oracle::fixtures_dir() + "/polynomial.prob");
  CHECK(poly.model.n == 2);
  CHECK(poly.train_cfg.policy_lr_scale == doctest::Approx(10.0));
  const auto cart = load_problem_file(oracle::fixtures_dir() + "/cartpole.prob");
  CHECK(cart.gamma_bounds.gamma0_max == doctest::Approx(1.0));
}

TEST_CASE("artifact round trip is bit-identical") {
  const fs::path dir = scratch("artifact_roundtrip");
  Artifact a = band_artifact();
  a.seed = 42;
  a.samples.xs.push_back({{0.25, -0.5}, Provenance::Random});
  a.samples.xu.push_back({{1.9, 0.1}, Provenance::Counterexample});
  const std::string once = artifact_to_json(a);
  save_artifact((dir / "a.json").string(), a);
  const Artifact b = load_artifact((dir / "a.json").string());
  CHECK(artifact_to_json(b) == once);
  CHECK(b.h.theta == a.h.theta);
  CHECK(b.net.W == a.net.W);
  CHECK(b.samples.xu[0].tag == Provenance::Counterexample);
}

TEST_CASE("cmd_synthesize: exit codes and deterministic outputs") {
  const fs::path dir = scratch("synthesize");
  const std::string problem = oracle::fixtures_dir() + "/onedim.prob";

  const int code = oracle::run_cli({"synthesize", problem, "--out", (dir / "run1").string(),
                                    "--seed", "1"});
  REQUIRE(code == 0);
  CHECK(fs::exists(dir / "run1" / "artifact.json"));
  CHECK(fs::exists(dir / "run1" / "report.json"));
  CHECK(fs::exists(dir / "run1" / "checkpoints" / "iter_000.json"));
  const std::string report = oracle::read_file((dir / "run1" / "report.json").string());
  CHECK(report.find("\"status\": \"verified\"") != std::string::npos);

  // byte-identical outputs under the same seed (single worker)
  const int code2 = oracle::run_cli({"synthesize", problem, "--out", (dir / "run2").string(),
                                     "--seed", "1"});
  REQUIRE(code2 == 0);
  CHECK(oracle::read_file((dir / "run1" / "artifact.json").string()) ==
        oracle::read_file((dir / "run2" / "artifact.json").string()));
  CHECK(oracle::read_file((dir / "run1" / "report.json").string()) ==
        oracle::read_file((dir / "run2" / "report.json").string()));

  // a different seed changes the sampled sets
  const int code3 = oracle::run_cli({"synthesize", problem, "--out", (dir / "run3").string(),
                                     "--seed", "2"});
  REQUIRE(code3 == 0);
  CHECK(oracle::read_file((dir / "run1" / "artifact.json").string()) !=
        oracle::read_file((dir / "run3" / "artifact.json").string()));

  // zero budget: exit 2
  CHECK(oracle::run_cli({"synthesize", problem, "--out", (dir / "run4").string(),
                         "--budget-seconds", "0"}) == 2);

  // malformed input: exit 1
  write(dir / "bad.prob", "[model]\nstates = 1\ninputs = 0\nf1 = \"x1 +\"\n");
  CHECK(oracle::run_cli({"synthesize", (dir / "bad.prob").string(), "--out",
                         (dir / "run5").string()}) == 1);
}

TEST_CASE("cmd_verify: exit codes for all outcomes") {
  const fs::path dir = scratch("verify");
  const std::string poly_problem = oracle::fixtures_dir() + "/polynomial.prob";

  // the published pair verifies (exit 0); the budget must cover the
  // gradient-norm maximum on the boundary shell that epsilon-sized
  // straddling boxes still see (about 2.73 at the default epsilon)
  Artifact good;
  good.seed = 0;
  good.h = PolyBarrierParam::make(2, 2);
  good.h.theta = {1.0, 0.11, 0.62, -1.19, -1.02, -1.14};
  good.gamma = GammaParam{0.9, 0.7, 0.9};
  good.l_tilde = 2.75;
  good.net = PolicyNet::make(2, {4}, Box({-1.5, -1.5}, {1.5, 1.5}));
  good.loss_cfg.l_tilde = 2.75;
  save_artifact((dir / "good.json").string(), good);
  CHECK(oracle::run_cli({"verify", poly_problem, (dir / "good.json").string(), "--out",
                         (dir / "vgood").string()}) == 0);
  const std::string report = oracle::read_file((dir / "vgood" / "verify_report.json").string());
  CHECK(report.find("\"status\": \"verified\"") != std::string::npos);
  CHECK(report.find("\"timing\"") != std::string::npos);

  // band-shaped C violates safety (exit 3)
  save_artifact((dir / "band.json").string(), band_artifact());
  CHECK(oracle::run_cli({"verify", poly_problem, (dir / "band.json").string(), "--out",
                         (dir / "vband").string()}) == 3);
  const std::string band_report =
      oracle::read_file((dir / "vband" / "verify_report.json").string());
  CHECK(band_report.find("\"kind\": \"safety\"") != std::string::npos);

  // tiny subdomain budget: inconclusive (exit 4)
  std::string limited = oracle::read_file(poly_problem);
  limited += "\n[verify]\nmax_subdomains = 2\n";
  write(dir / "limited.prob", limited);
  CHECK(oracle::run_cli({"verify", (dir / "limited.prob").string(),
                         (dir / "good.json").string(), "--out", (dir / "vlim").string()}) == 4);

  // missing artifact: input error
  CHECK(oracle::run_cli({"verify", poly_problem, (dir / "nosuch.json").string(), "--out",
                         (dir / "vmiss").string()}) == 1);
}

TEST_CASE("cmd_simulate: clean rollouts exit 0, bad x0 exits 1") {
  const fs::path dir = scratch("simulate");
  const std::string problem = oracle::fixtures_dir() + "/onedim.prob";
  const int syn = oracle::run_cli({"synthesize", problem, "--out", (dir / "syn").string(),
                                   "--seed", "1"});
  REQUIRE(syn == 0);

  CHECK(oracle::run_cli({"simulate", problem, (dir / "syn" / "artifact.json").string(), "--out",
                         (dir / "sim").string()}) == 0);
  CHECK(fs::exists(dir / "sim" / "rollout_0.csv"));
  CHECK(fs::exists(dir / "sim" / "summary.json"));
  const std::string summary = oracle::read_file((dir / "sim" / "summary.json").string());
  CHECK(summary.find("\"h_violations\": 0") != std::string::npos);
  CHECK(summary.find("\"infeasibilities\": 0") != std::string::npos);

  // x0 outside C: precondition error
  std::string shifted = onedim_problem();
  const auto pos = shifted.find("x0 = 0");
  REQUIRE(pos != std::string::npos);
  shifted.replace(pos, 6, "x0 = -1.55");
  write(dir / "badx0.prob", shifted);
  CHECK(oracle::run_cli({"simulate", (dir / "badx0.prob").string(),
                         (dir / "syn" / "artifact.json").string(), "--out",
                         (dir / "sim2").string()}) == 1);
}

TEST_CASE("cmd_export_plot: contours, samples, slice handling") {
  const fs::path dir = scratch("plot");
  const std::string poly_problem = oracle::fixtures_dir() + "/polynomial.prob";

  Artifact ref;
  ref.seed = 0;
  ref.h = PolyBarrierParam::make(2, 2);
  ref.h.theta = {1.0, 0.11, 0.62, -1.19, -1.02, -1.14};
  ref.gamma = GammaParam{0.9, 0.7, 0.9};
  ref.l_tilde = 2.71;
  ref.net = PolicyNet::make(2, {4}, Box({-1.5, -1.5}, {1.5, 1.5}));
  ref.samples.xs.push_back({{0.1, 0.2}, Provenance::Random});
  ref.samples.xs.push_back({{-0.4, 0.3}, Provenance::Counterexample});
  save_artifact((dir / "ref.json").string(), ref);

  REQUIRE(oracle::run_cli({"export-plot", poly_problem, (dir / "ref.json").string(), "--out",
                           (dir / "plots").string(), "--grid", "401"}) == 0);

  // every emitted boundary point satisfies |h| <= 2 * cell diagonal * l_tilde
  const Expr h = ref.h.to_expr();
  const double cell = 3.6 / 400.0;
  const double bound = 2.0 * cell * std::numbers::sqrt2 * 2.71;
  std::ifstream contour(dir / "plots" / "contour_c.csv");
  std::string line;
  std::getline(contour, line);  // header
  int points = 0;
  while (std::getline(contour, line)) {
    double a = 0.0, b = 0.0;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf", &a, &b) == 2);
    CHECK(std::fabs(h.eval(std::vector<double>{a, b})) <= bound);
    ++points;
  }
  CHECK(points > 100);
  CHECK(fs::exists(dir / "plots" / "contour_s1.csv"));
  const std::string samples = oracle::read_file((dir / "plots" / "samples.csv").string());
  CHECK(samples.find("xs,random") != std::string::npos);
  CHECK(samples.find("xs,counterexample") != std::string::npos);

  // empty zero-superlevel set: header-only contour, still exit 0
  Artifact empty = ref;
  empty.h.theta = {-1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  save_artifact((dir / "empty.json").string(), empty);
  REQUIRE(oracle::run_cli({"export-plot", poly_problem, (dir / "empty.json").string(), "--out",
                           (dir / "plots_empty").string()}) == 0);
  std::ifstream ec(dir / "plots_empty" / "contour_c.csv");
  int lines = 0;
  while (std::getline(ec, line)) ++lines;
  CHECK(lines == 1);

  // >2-D problems need --slice
  write(dir / "three.prob",
        "[model]\nstates = 3\ninputs = 1\nf1 = \"x1 + 0.1*u1\"\nf2 = \"x2\"\nf3 = \"x3\"\n"
        "u_min = -1\nu_max = 1\nx_min = -1 -1 -1\nx_max = 1 1 1\n"
        "[safe_set]\ns1 = \"1 - x1^2 - x2^2 - x3^2\"\n");
  Artifact three;
  three.seed = 0;
  three.h = PolyBarrierParam::make(3, 2);
  three.h.theta.assign(three.h.monomials.size(), 0.0);
  three.h.theta[0] = 0.5;
  three.gamma = GammaParam{0.9, 0.7, 1.0};
  three.l_tilde = 2.0;
  three.net = PolicyNet::make(3, {4}, Box({-1.0}, {1.0}));
  save_artifact((dir / "three.json").string(), three);
  CHECK(oracle::run_cli({"export-plot", (dir / "three.prob").string(),
                         (dir / "three.json").string(), "--out",
                         (dir / "plots3").string()}) == 1);
  CHECK(oracle::run_cli({"export-plot", (dir / "three.prob").string(),
                         (dir / "three.json").string(), "--out", (dir / "plots3").string(),
                         "--slice", "1,2"}) == 0);
}
