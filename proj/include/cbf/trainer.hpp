#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cbf/model.hpp"
#include "cbf/rng.hpp"

namespace cbf {

// h(x; theta) = sum_k theta_k * prod_i x_i^{e_ki}, all monomials of
// total degree <= degree, graded ordering with the constant term first.
struct PolyBarrierParam {
  int n = 0;
  int degree = 0;
  std::vector<std::vector<int>> monomials;
  std::vector<double> theta;

  static PolyBarrierParam make(int n, int degree);

  double value(std::span<const double> x) const;
  // grad_x h
  void grad_x(std::span<const double> x, std::span<double> out) const;
  // monomial values m_k(x), the gradient of h with respect to theta
  void monomial_values(std::span<const double> x, std::span<double> out) const;
  // d m_k / d x_i for all k at fixed i
  void monomial_grad_x(std::span<const double> x, int i, std::span<double> out) const;
  Expr to_expr() const;
};

// ReLU hidden layers, shared trunk, one Hardtanh-clamped output per
// input channel. pi(x; kappa) lies in U for every x by construction.
struct PolicyNet {
  std::vector<int> sizes;  // d0 = n, hidden..., dl = m
  std::vector<std::vector<double>> W;  // W[j] is sizes[j+1] x sizes[j], row-major
  std::vector<std::vector<double>> b;
  std::vector<double> u_min, u_max;

  static PolicyNet make(int n, const std::vector<int>& hidden, const Box& U);
  void init_params(Rng& rng);  // scaled-uniform fan-in

  std::vector<double> forward(std::span<const double> x) const;

  struct Cache {
    std::vector<std::vector<double>> acts;  // acts[0] = x, acts[j] post-activation
    std::vector<double> pre_out;            // pre-Hardtanh output
  };
  std::vector<double> forward_cached(std::span<const double> x, Cache& cache) const;
  // Accumulates dL/dW, dL/db given dL/du; kink derivative convention: 0.
  void backward(const Cache& cache, std::span<const double> dl_du, std::vector<std::vector<double>>& gW,
                std::vector<std::vector<double>>& gb) const;

  std::size_t param_count() const;
};

struct GammaParam {
  double gamma0 = 0.8;
  double gamma0_min = 0.7;
  double gamma0_max = 0.9;
};

enum class Provenance { Random, Counterexample };

struct Sample {
  std::vector<double> x;
  Provenance tag = Provenance::Random;
};

struct SampleSets {
  std::vector<Sample> xs;  // inside S
  std::vector<Sample> xu;  // outside S
  std::vector<Sample> xi;  // initial-state anchors, inside S
};

struct LossConfig {
  double alpha[5] = {1.0, 10.0, 1.0, 10.0, 1.0};
  double eta = 1e-2;    // L1 activation margin
  double c1 = 100.0;    // Gamma gate steepness
  double c2 = 0.4;      // Gamma gate offset, < 1/2
  double delta = 1e-2;  // L4 margin
  double l_tilde = 4.0; // Lipschitz budget during training
  double w_max = 0.0;   // copied from the model

  // Gate zero crossing: Gamma(z) < 0 iff z > -zeta.
  double zeta() const;
};

struct TrainConfig {
  int batch_size = 256;
  int max_epoch = 500;
  double mu = 1e-3;
  bool cosine_decay = true;
  double lr_floor_frac = 0.1;  // cosine decays to mu * this, not to zero
  double momentum = 0.9;
  double policy_lr_scale = 1.0;  // compensates weak input Jacobians
  bool average_batch = false;    // paper-style batch sums by default
  double grad_clip = 10.0;
  int max_restarts = 20;
  double budget_seconds = 600.0;
  std::vector<int> hidden = {16, 16};
};

double gamma_gate(double z, const LossConfig& cfg);

double loss_l1(const std::vector<Sample>& xs, const PolyBarrierParam& h, const LossConfig& cfg);
double loss_l2(const std::vector<Sample>& xs, const PolyBarrierParam& h, double gamma0,
               const PolicyNet& net, const ProblemModel& model, const LossConfig& cfg);
double loss_l3(const std::vector<Sample>& xi, const PolyBarrierParam& h);
double loss_l4(const std::vector<Sample>& xu, const PolyBarrierParam& h, const LossConfig& cfg);
double loss_l5(double gamma0, const GammaParam& bounds);
double total_loss(const SampleSets& sets, const PolyBarrierParam& h, const GammaParam& gamma,
                  const PolicyNet& net, const ProblemModel& model, const LossConfig& cfg);

struct ParamGrad {
  std::vector<double> theta;
  double gamma0 = 0.0;
  std::vector<std::vector<double>> W;
  std::vector<std::vector<double>> b;
};

// Reverse-mode gradient of the weighted loss over (theta, gamma0, kappa).
// Per-term sums are scaled by 1/|set| when `average` is set (the training
// loop uses averages for step-size stability; finite-difference tests use
// the verbatim sums).
ParamGrad grad_total_loss(const SampleSets& sets, const PolyBarrierParam& h,
                          const GammaParam& gamma, const PolicyNet& net,
                          const ProblemModel& model, const LossConfig& cfg, bool average = false);

struct TrainResult {
  PolyBarrierParam h;
  GammaParam gamma;
  PolicyNet net;
  int epochs = 0;
  int restarts = 0;
  bool converged = false;  // reached exact zero loss on the full sets
};

class TrainingBudgetError : public std::runtime_error {
 public:
  explicit TrainingBudgetError(const std::string& what) : std::runtime_error(what) {}
};

// Algorithm: shuffle, batch, plain gradient steps; returns at exact zero
// full-set loss; reinitializes and restarts when max_epoch is exhausted;
// converts the unbounded outer loop into TrainingBudgetError via the
// wall-clock / restart caps. Warm start: when `init` is given, the first
// attempt starts from it instead of Initialize().
TrainResult train(const ProblemModel& model, SampleSets& sets, int degree,
                  const GammaParam& gamma_bounds, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, std::uint64_t seed,
                  const std::optional<TrainResult>& init = {});

// Rejection sampling, uniform over X: all s_i >= 0 goes to Xs, any
// s_i < 0 goes to Xu, until both counts are met.
SampleSets sample_initial(const ProblemModel& model, int count_safe, int count_unsafe,
                          std::uint64_t seed);

class SamplingStarvationError : public std::runtime_error {
 public:
  explicit SamplingStarvationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cbf
