#pragma once

#include <string>

#include "cbf/cegis.hpp"
#include "cbf/runtime.hpp"

namespace cbf {

class ProblemFileError : public std::runtime_error {
 public:
  ProblemFileError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_no(line) {}
  int line_no;
};

// Full run specification parsed from the sectioned key-value format
// (sections: model / safe_set / train / verify / cegis / simulate).
struct ProblemSpec {
  ProblemModel model;

  int degree = 2;
  GammaParam gamma_bounds;
  LossConfig loss_cfg;
  TrainConfig train_cfg;
  VerifierConfig verify_cfg;
  CegisConfig cegis_cfg;
  std::vector<std::vector<double>> anchors;
  std::uint64_t seed = 1;

  std::vector<Expr> nominal;  // per input channel, state-only; zeros by default
  std::vector<double> x0;
  int sim_steps = 500;
  int sim_seeds = 1;
  DisturbanceMode sim_mode = DisturbanceMode::Boundary;
  double sim_tol = 1e-6;
};

ProblemSpec parse_problem_text(const std::string& text);
ProblemSpec load_problem_file(const std::string& path);

}  // namespace cbf
