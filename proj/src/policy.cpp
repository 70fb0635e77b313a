#include <cmath>

#include "cbf/trainer.hpp"

namespace cbf {

PolicyNet PolicyNet::make(int n, const std::vector<int>& hidden, const Box& U) {
  PolicyNet net;
  net.sizes.push_back(n);
  for (int hsz : hidden) {
    if (hsz <= 0) throw DomainError("hidden layer size must be positive");
    net.sizes.push_back(hsz);
  }
  net.sizes.push_back(static_cast<int>(U.dim()));
  net.u_min = U.lb;
  net.u_max = U.ub;
  for (std::size_t j = 0; j + 1 < net.sizes.size(); ++j) {
    net.W.emplace_back(static_cast<std::size_t>(net.sizes[j + 1]) * net.sizes[j], 0.0);
    net.b.emplace_back(net.sizes[j + 1], 0.0);
  }
  return net;
}

void PolicyNet::init_params(Rng& rng) {
  for (std::size_t j = 0; j < W.size(); ++j) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[j]));
    for (double& w : W[j]) w = rng.uniform(-bound, bound);
    for (double& v : b[j]) v = rng.uniform(-bound, bound);
  }
}

std::vector<double> PolicyNet::forward(std::span<const double> x) const {
  Cache cache;
  return forward_cached(x, cache);
}

std::vector<double> PolicyNet::forward_cached(std::span<const double> x, Cache& cache) const {
  cache.acts.assign(1, std::vector<double>(x.begin(), x.end()));
  const std::size_t layers = W.size();
  for (std::size_t j = 0; j < layers; ++j) {
    const std::vector<double>& in = cache.acts.back();
    std::vector<double> out(sizes[j + 1]);
    for (int r = 0; r < sizes[j + 1]; ++r) {
      double acc = b[j][r];
      const double* row = &W[j][static_cast<std::size_t>(r) * sizes[j]];
      for (int c = 0; c < sizes[j]; ++c) acc += row[c] * in[c];
      out[r] = acc;
    }
    if (j + 1 < layers) {
      for (double& v : out) v = v > 0.0 ? v : 0.0;  // ReLU
      cache.acts.push_back(std::move(out));
    } else {
      cache.pre_out = out;
      std::vector<double> clamped(out.size());
      for (std::size_t i = 0; i < out.size(); ++i)
        clamped[i] = std::min(std::max(out[i], u_min[i]), u_max[i]);
      return clamped;
    }
  }
  // no hidden layers handled above; unreachable for valid nets
  throw DomainError("policy net without layers");
}

void PolicyNet::backward(const Cache& cache, std::span<const double> dl_du,
                         std::vector<std::vector<double>>& gW,
                         std::vector<std::vector<double>>& gb) const {
  const std::size_t layers = W.size();
  // Hardtanh: derivative 1 strictly inside the clamp, 0 outside and at
  // the kinks.
  std::vector<double> delta(cache.pre_out.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const bool interior = cache.pre_out[i] > u_min[i] && cache.pre_out[i] < u_max[i];
    delta[i] = interior ? dl_du[i] : 0.0;
  }
  for (std::size_t jj = layers; jj-- > 0;) {
    const std::vector<double>& in = cache.acts[jj];
    for (int r = 0; r < sizes[jj + 1]; ++r) {
      gb[jj][r] += delta[r];
      double* grow = &gW[jj][static_cast<std::size_t>(r) * sizes[jj]];
      for (int c = 0; c < sizes[jj]; ++c) grow[c] += delta[r] * in[c];
    }
    if (jj == 0) break;
    std::vector<double> prev(sizes[jj], 0.0);
    for (int c = 0; c < sizes[jj]; ++c) {
      if (cache.acts[jj][c] <= 0.0) continue;  // ReLU kink convention: 0
      double acc = 0.0;
      for (int r = 0; r < sizes[jj + 1]; ++r)
        acc += delta[r] * W[jj][static_cast<std::size_t>(r) * sizes[jj] + c];
      prev[c] = acc;
    }
    delta = std::move(prev);
  }
}

std::size_t PolicyNet::param_count() const {
  std::size_t c = 0;
  for (std::size_t j = 0; j < W.size(); ++j) c += W[j].size() + b[j].size();
  return c;
}

}  // namespace cbf
