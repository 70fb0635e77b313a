#include "cbf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "cbf/compiled.hpp"

namespace cbf {

double LossConfig::zeta() const {
  if (!(c2 > 0.0 && c2 < 0.5)) throw DomainError("gate offset c2 must lie in (0, 1/2)");
  return std::log((1.0 - c2) / c2) / c1;
}

double gamma_gate(double z, const LossConfig& cfg) {
  return -1.0 / (1.0 + std::exp(-cfg.c1 * z)) + cfg.c2;
}

namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }

double gate_slope(double z, const LossConfig& cfg) {
  const double s = 1.0 / (1.0 + std::exp(-cfg.c1 * z));
  return -cfg.c1 * s * (1.0 - s);
}

// Compiled dynamics and input Jacobian, built once per training run.
struct Work {
  std::vector<CompiledExpr> f;
  std::vector<std::vector<CompiledExpr>> dfdu;

  explicit Work(const ProblemModel& model) {
    for (int i = 0; i < model.n; ++i) {
      f.emplace_back(model.f[i]);
      std::vector<CompiledExpr> row;
      for (int j = 0; j < model.m; ++j)
        row.emplace_back(model.f[i].diff(VarRef::input(j)));
      dfdu.push_back(std::move(row));
    }
  }
};

struct L2Terms {
  double value = 0.0;  // Gamma(h(x)) * (H - l*w) before the outer ReLU
  double gamma = 0.0;
  double margin = 0.0;
  double hx = 0.0;
  std::vector<double> y;
  std::vector<double> u;
};

L2Terms l2_terms(std::span<const double> x, const PolyBarrierParam& h, double gamma0,
                 const PolicyNet& net, const Work& work, const LossConfig& cfg,
                 PolicyNet::Cache* cache) {
  L2Terms t;
  t.hx = h.value(x);
  PolicyNet::Cache local;
  t.u = cache ? net.forward_cached(x, *cache) : net.forward_cached(x, local);
  t.y.resize(work.f.size());
  for (std::size_t i = 0; i < work.f.size(); ++i) t.y[i] = work.f[i].eval(x, t.u);
  const double hy = h.value(t.y);
  t.margin = hy - t.hx + gamma0 * t.hx - cfg.l_tilde * cfg.w_max;
  t.gamma = gamma_gate(t.hx, cfg);
  t.value = t.gamma * t.margin;
  return t;
}

}  // namespace

double loss_l1(const std::vector<Sample>& xs, const PolyBarrierParam& h, const LossConfig& cfg) {
  std::vector<double> g(h.n);
  double total = 0.0;
  for (const Sample& s : xs) {
    const double a = relu(h.value(s.x) + cfg.eta);
    if (a == 0.0) continue;
    h.grad_x(s.x, g);
    double norm2 = 0.0;
    for (double v : g) norm2 += v * v;
    total += relu(a * (std::sqrt(norm2) - cfg.l_tilde));
  }
  return total;
}

double loss_l2(const std::vector<Sample>& xs, const PolyBarrierParam& h, double gamma0,
               const PolicyNet& net, const ProblemModel& model, const LossConfig& cfg) {
  const Work work(model);
  double total = 0.0;
  for (const Sample& s : xs)
    total += relu(l2_terms(s.x, h, gamma0, net, work, cfg, nullptr).value);
  return total;
}

double loss_l3(const std::vector<Sample>& xi, const PolyBarrierParam& h) {
  double total = 0.0;
  for (const Sample& s : xi) total += relu(-h.value(s.x));
  return total;
}

double loss_l4(const std::vector<Sample>& xu, const PolyBarrierParam& h, const LossConfig& cfg) {
  double total = 0.0;
  for (const Sample& s : xu) total += relu(h.value(s.x) + cfg.delta);
  return total;
}

double loss_l5(double gamma0, const GammaParam& bounds) {
  return relu(-gamma0 + bounds.gamma0_min) + relu(gamma0 - bounds.gamma0_max);
}

double total_loss(const SampleSets& sets, const PolyBarrierParam& h, const GammaParam& gamma,
                  const PolicyNet& net, const ProblemModel& model, const LossConfig& cfg) {
  return cfg.alpha[0] * loss_l1(sets.xs, h, cfg) +
         cfg.alpha[1] * loss_l2(sets.xs, h, gamma.gamma0, net, model, cfg) +
         cfg.alpha[2] * loss_l3(sets.xi, h) + cfg.alpha[3] * loss_l4(sets.xu, h, cfg) +
         cfg.alpha[4] * loss_l5(gamma.gamma0, gamma);
}

namespace {

ParamGrad zero_grad(const PolyBarrierParam& h, const PolicyNet& net) {
  ParamGrad g;
  g.theta.assign(h.theta.size(), 0.0);
  for (std::size_t j = 0; j < net.W.size(); ++j) {
    g.W.emplace_back(net.W[j].size(), 0.0);
    g.b.emplace_back(net.b[j].size(), 0.0);
  }
  return g;
}

void accumulate_grad(ParamGrad& out, const std::vector<Sample>& xs, const std::vector<Sample>& xu,
                     const std::vector<Sample>& xi, const PolyBarrierParam& h,
                     const GammaParam& gamma, const PolicyNet& net, const Work& work,
                     const LossConfig& cfg, bool average) {
  const std::size_t nk = h.theta.size();
  std::vector<double> mono_x(nk), mono_y(nk), gx(h.n), gy(h.n), mono_dxi(nk);

  const double s_scale = cfg.alpha[0] * (average && !xs.empty() ? 1.0 / xs.size() : 1.0);
  const double l2_scale = cfg.alpha[1] * (average && !xs.empty() ? 1.0 / xs.size() : 1.0);
  const double i_scale = cfg.alpha[2] * (average && !xi.empty() ? 1.0 / xi.size() : 1.0);
  const double u_scale = cfg.alpha[3] * (average && !xu.empty() ? 1.0 / xu.size() : 1.0);

  for (const Sample& s : xs) {
    // L1
    const double hx = h.value(s.x);
    const double a = relu(hx + cfg.eta);
    if (a > 0.0) {
      h.grad_x(s.x, gx);
      double norm2 = 0.0;
      for (double v : gx) norm2 += v * v;
      const double gnorm = std::sqrt(norm2);
      const double prod = a * (gnorm - cfg.l_tilde);
      if (prod > 0.0 && gnorm > 0.0) {
        h.monomial_values(s.x, mono_x);
        std::vector<double> dnorm(nk, 0.0);
        for (int i = 0; i < h.n; ++i) {
          h.monomial_grad_x(s.x, i, mono_dxi);
          for (std::size_t k = 0; k < nk; ++k) dnorm[k] += gx[i] * mono_dxi[k];
        }
        for (std::size_t k = 0; k < nk; ++k)
          out.theta[k] += s_scale * (mono_x[k] * (gnorm - cfg.l_tilde) + a * dnorm[k] / gnorm);
      }
    }

    // L2
    PolicyNet::Cache cache;
    const L2Terms t = l2_terms(s.x, h, gamma.gamma0, net, work, cfg, &cache);
    if (t.value > 0.0) {
      h.monomial_values(s.x, mono_x);
      h.monomial_values(t.y, mono_y);
      const double gs = gate_slope(t.hx, cfg);
      for (std::size_t k = 0; k < nk; ++k) {
        const double dmargin = mono_y[k] - mono_x[k] + gamma.gamma0 * mono_x[k];
        out.theta[k] += l2_scale * (gs * mono_x[k] * t.margin + t.gamma * dmargin);
      }
      out.gamma0 += l2_scale * t.gamma * t.hx;
      // dL/du = Gamma * (grad_y h)^T Jf_u, backpropagated through pi.
      h.grad_x(t.y, gy);
      std::vector<double> dl_du(net.u_min.size(), 0.0);
      for (std::size_t j = 0; j < dl_du.size(); ++j) {
        double acc = 0.0;
        for (int i = 0; i < h.n; ++i)
          acc += gy[i] * work.dfdu[i][j].eval(s.x, t.u);
        dl_du[j] = l2_scale * t.gamma * acc;
      }
      net.backward(cache, dl_du, out.W, out.b);
    }
  }

  // L3
  for (const Sample& s : xi) {
    if (-h.value(s.x) > 0.0) {
      h.monomial_values(s.x, mono_x);
      for (std::size_t k = 0; k < nk; ++k) out.theta[k] -= i_scale * mono_x[k];
    }
  }

  // L4
  for (const Sample& s : xu) {
    if (h.value(s.x) + cfg.delta > 0.0) {
      h.monomial_values(s.x, mono_x);
      for (std::size_t k = 0; k < nk; ++k) out.theta[k] += u_scale * mono_x[k];
    }
  }

  // L5
  if (gamma.gamma0 < gamma.gamma0_min) out.gamma0 -= cfg.alpha[4];
  if (gamma.gamma0 > gamma.gamma0_max) out.gamma0 += cfg.alpha[4];
}

double grad_norm(const ParamGrad& g) {
  double n2 = g.gamma0 * g.gamma0;
  for (double v : g.theta) n2 += v * v;
  for (const auto& layer : g.W)
    for (double v : layer) n2 += v * v;
  for (const auto& layer : g.b)
    for (double v : layer) n2 += v * v;
  return std::sqrt(n2);
}

void scale_grad(ParamGrad& g, double s) {
  g.gamma0 *= s;
  for (double& v : g.theta) v *= s;
  for (auto& layer : g.W)
    for (double& v : layer) v *= s;
  for (auto& layer : g.b)
    for (double& v : layer) v *= s;
}

}  // namespace

ParamGrad grad_total_loss(const SampleSets& sets, const PolyBarrierParam& h,
                          const GammaParam& gamma, const PolicyNet& net,
                          const ProblemModel& model, const LossConfig& cfg, bool average) {
  const Work work(model);
  ParamGrad g = zero_grad(h, net);
  accumulate_grad(g, sets.xs, sets.xu, sets.xi, h, gamma, net, work, cfg, average);
  return g;
}

SampleSets sample_initial(const ProblemModel& model, int count_safe, int count_unsafe,
                          std::uint64_t seed) {
  model.validate();
  SampleSets sets;
  Rng rng(derive_seed(seed, "samples/initial"));
  const std::size_t needed = static_cast<std::size_t>(count_safe) + count_unsafe;
  const std::size_t cap = needed * 10'000 + 100'000;
  std::size_t draws = 0;
  std::vector<double> x(model.n);
  while (sets.xs.size() < static_cast<std::size_t>(count_safe) ||
         sets.xu.size() < static_cast<std::size_t>(count_unsafe)) {
    if (++draws > cap)
      throw SamplingStarvationError("rejection sampling acceptance rate below 1e-4");
    for (int i = 0; i < model.n; ++i) x[i] = rng.uniform(model.X.lb[i], model.X.ub[i]);
    const bool safe = model.in_safe_set(x);
    if (safe && sets.xs.size() < static_cast<std::size_t>(count_safe))
      sets.xs.push_back({x, Provenance::Random});
    else if (!safe && sets.xu.size() < static_cast<std::size_t>(count_unsafe))
      sets.xu.push_back({x, Provenance::Random});
  }
  return sets;
}

TrainResult train(const ProblemModel& model, SampleSets& sets, int degree,
                  const GammaParam& gamma_bounds, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, std::uint64_t seed,
                  const std::optional<TrainResult>& init) {
  if (sets.xs.empty()) throw DomainError("training needs a nonempty safe sample set");
  model.validate();
  const Work work(model);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  TrainResult result;
  for (int restart = 0; restart <= train_cfg.max_restarts; ++restart) {
    PolyBarrierParam h = PolyBarrierParam::make(model.n, degree);
    GammaParam gamma = gamma_bounds;
    PolicyNet net = PolicyNet::make(model.n, train_cfg.hidden, model.U);
    Rng rng(derive_seed(seed, "train/restart/" + std::to_string(restart)));

    if (restart == 0 && init) {
      h = init->h;
      gamma = init->gamma;
      gamma.gamma0_min = gamma_bounds.gamma0_min;
      gamma.gamma0_max = gamma_bounds.gamma0_max;
      net = init->net;
    } else {
      for (std::size_t k = 0; k < h.theta.size(); ++k) h.theta[k] = rng.uniform(-0.1, 0.1);
      h.theta[0] = 1.0;  // constant term: bias C nonempty at the start
      net.init_params(rng);
      gamma.gamma0 = 0.5 * (gamma_bounds.gamma0_min + gamma_bounds.gamma0_max);
    }

    std::vector<std::size_t> perm_s(sets.xs.size()), perm_u(sets.xu.size());
    for (std::size_t i = 0; i < perm_s.size(); ++i) perm_s[i] = i;
    for (std::size_t i = 0; i < perm_u.size(); ++i) perm_u[i] = i;

    const int bs = std::max(1, train_cfg.batch_size);
    const int n_sb = static_cast<int>((sets.xs.size() + bs - 1) / bs);
    const int n_ub = sets.xu.empty() ? 0 : static_cast<int>((sets.xu.size() + bs - 1) / bs);
    const int n_batches = std::max(n_sb, std::max(n_ub, 1));

    ParamGrad vel = zero_grad(h, net);
    for (int epoch = 1; epoch <= train_cfg.max_epoch; ++epoch) {
      if (elapsed() > train_cfg.budget_seconds)
        throw TrainingBudgetError("training wall-clock budget exhausted");
      rng.shuffle_indices(perm_s);
      rng.shuffle_indices(perm_u);

      const double frac = std::clamp(train_cfg.lr_floor_frac, 0.0, 1.0);
      const double lr =
          train_cfg.cosine_decay
              ? train_cfg.mu * (frac + (1.0 - frac) * 0.5 *
                                           (1.0 + std::cos(std::numbers::pi * (epoch - 1) /
                                                           train_cfg.max_epoch)))
              : train_cfg.mu;

      for (int bi = 0; bi < n_batches; ++bi) {
        std::vector<Sample> batch_s, batch_u;
        if (n_sb > 0) {
          const int slot = bi % n_sb;
          for (int k = slot * bs; k < std::min<int>((slot + 1) * bs, sets.xs.size()); ++k)
            batch_s.push_back(sets.xs[perm_s[k]]);
        }
        if (n_ub > 0) {
          const int slot = bi % n_ub;
          for (int k = slot * bs; k < std::min<int>((slot + 1) * bs, sets.xu.size()); ++k)
            batch_u.push_back(sets.xu[perm_u[k]]);
        }
        ParamGrad g = zero_grad(h, net);
        accumulate_grad(g, batch_s, batch_u, sets.xi, h, gamma, net, work, loss_cfg,
                        train_cfg.average_batch);
        const double gn = grad_norm(g);
        if (gn > train_cfg.grad_clip) scale_grad(g, train_cfg.grad_clip / gn);

        const double mom = train_cfg.momentum;
        auto step_vec = [&](std::vector<double>& p, std::vector<double>& v,
                            const std::vector<double>& grad) {
          for (std::size_t k = 0; k < p.size(); ++k) {
            v[k] = mom * v[k] + grad[k];
            p[k] -= lr * v[k];
          }
        };
        step_vec(h.theta, vel.theta, g.theta);
        vel.gamma0 = mom * vel.gamma0 + g.gamma0;
        gamma.gamma0 -= lr * vel.gamma0;
        const double plr = lr * train_cfg.policy_lr_scale;
        auto step_policy = [&](std::vector<double>& p, std::vector<double>& v,
                               const std::vector<double>& grad) {
          for (std::size_t k = 0; k < p.size(); ++k) {
            v[k] = mom * v[k] + grad[k];
            p[k] -= plr * v[k];
          }
        };
        for (std::size_t j = 0; j < net.W.size(); ++j) {
          step_policy(net.W[j], vel.W[j], g.W[j]);
          step_policy(net.b[j], vel.b[j], g.b[j]);
        }
      }

      if (total_loss(sets, h, gamma, net, model, loss_cfg) == 0.0) {
        result.h = std::move(h);
        result.gamma = gamma;
        result.net = std::move(net);
        result.epochs = epoch;
        result.restarts = restart;
        result.converged = true;
        return result;
      }
    }
  }
  throw TrainingBudgetError("training restart budget exhausted without zero loss");
}

}  // namespace cbf
