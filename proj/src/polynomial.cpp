#include <algorithm>
#include <cmath>

#include "cbf/trainer.hpp"

namespace cbf {

namespace {

void enumerate_monomials(int n, int degree, std::vector<int>& current, int pos, int remaining,
                         std::vector<std::vector<int>>& out) {
  if (pos == n) {
    out.push_back(current);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    current[pos] = e;
    enumerate_monomials(n, degree, current, pos + 1, remaining - e, out);
  }
  current[pos] = 0;
}

}  // namespace

PolyBarrierParam PolyBarrierParam::make(int n, int degree) {
  if (n <= 0 || degree < 1) throw DomainError("polynomial barrier needs n >= 1, degree >= 1");
  PolyBarrierParam p;
  p.n = n;
  p.degree = degree;
  std::vector<int> current(n, 0);
  enumerate_monomials(n, degree, current, 0, degree, p.monomials);
  // Graded order, constant term first; ties broken lexicographically.
  std::stable_sort(p.monomials.begin(), p.monomials.end(),
                   [](const std::vector<int>& a, const std::vector<int>& b) {
                     int da = 0, db = 0;
                     for (int v : a) da += v;
                     for (int v : b) db += v;
                     if (da != db) return da < db;
                     return a < b;
                   });
  p.theta.assign(p.monomials.size(), 0.0);
  return p;
}

namespace {

double monomial_eval(const std::vector<int>& e, std::span<const double> x) {
  double v = 1.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (int k = 0; k < e[i]; ++k) v *= x[i];
  }
  return v;
}

}  // namespace

double PolyBarrierParam::value(std::span<const double> x) const {
  double v = 0.0;
  for (std::size_t k = 0; k < monomials.size(); ++k) v += theta[k] * monomial_eval(monomials[k], x);
  return v;
}

void PolyBarrierParam::grad_x(std::span<const double> x, std::span<double> out) const {
  for (int i = 0; i < n; ++i) out[i] = 0.0;
  for (std::size_t k = 0; k < monomials.size(); ++k) {
    const std::vector<int>& e = monomials[k];
    for (int i = 0; i < n; ++i) {
      if (e[i] == 0) continue;
      double v = static_cast<double>(e[i]) * theta[k];
      for (int j = 0; j < n; ++j) {
        const int p = j == i ? e[j] - 1 : e[j];
        for (int q = 0; q < p; ++q) v *= x[j];
      }
      out[i] += v;
    }
  }
}

void PolyBarrierParam::monomial_values(std::span<const double> x, std::span<double> out) const {
  for (std::size_t k = 0; k < monomials.size(); ++k) out[k] = monomial_eval(monomials[k], x);
}

void PolyBarrierParam::monomial_grad_x(std::span<const double> x, int i, std::span<double> out) const {
  for (std::size_t k = 0; k < monomials.size(); ++k) {
    const std::vector<int>& e = monomials[k];
    if (e[i] == 0) {
      out[k] = 0.0;
      continue;
    }
    double v = static_cast<double>(e[i]);
    for (int j = 0; j < n; ++j) {
      const int p = j == i ? e[j] - 1 : e[j];
      for (int q = 0; q < p; ++q) v *= x[j];
    }
    out[k] = v;
  }
}

Expr PolyBarrierParam::to_expr() const {
  Expr acc = Expr::constant(0.0);
  for (std::size_t k = 0; k < monomials.size(); ++k) {
    if (theta[k] == 0.0) continue;
    Expr term = Expr::constant(theta[k]);
    for (int i = 0; i < n; ++i)
      if (monomials[k][i] > 0) term = term * pow_int(Expr::state(i), monomials[k][i]);
    acc = acc + term;
  }
  return acc;
}

}  // namespace cbf
