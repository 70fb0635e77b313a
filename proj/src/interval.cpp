#include "cbf/interval.hpp"

#include <numbers>

namespace cbf {

Interval pow_int(Interval a, int k) {
  if (k < 0) throw DomainError("negative integer power");
  if (k == 0) return Interval::point(1.0);
  if (k == 1) return a;
  if (k % 2 == 1) return {std::pow(a.lo, k), std::pow(a.hi, k)};
  // even power
  const double m = a.mag();
  if (a.lo <= 0.0 && a.hi >= 0.0) return {0.0, std::pow(m, k)};
  const double mn = std::min(std::fabs(a.lo), std::fabs(a.hi));
  return {std::pow(mn, k), std::pow(m, k)};
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// True if c + 2k*pi falls inside [lo, hi] for some integer k.
bool crosses(double lo, double hi, double c) {
  const double k0 = std::ceil((lo - c) / kTwoPi);
  return c + k0 * kTwoPi <= hi;
}

}  // namespace

Interval sin_iv(Interval a) {
  if (a.width() >= kTwoPi) return {-1.0, 1.0};
  const double slo = std::sin(a.lo), shi = std::sin(a.hi);
  double lo = std::min(slo, shi), hi = std::max(slo, shi);
  if (crosses(a.lo, a.hi, std::numbers::pi / 2.0)) hi = 1.0;
  if (crosses(a.lo, a.hi, -std::numbers::pi / 2.0)) lo = -1.0;
  return {lo, hi};
}

Interval cos_iv(Interval a) {
  if (a.width() >= kTwoPi) return {-1.0, 1.0};
  const double clo = std::cos(a.lo), chi = std::cos(a.hi);
  double lo = std::min(clo, chi), hi = std::max(clo, chi);
  if (crosses(a.lo, a.hi, 0.0)) hi = 1.0;
  if (crosses(a.lo, a.hi, std::numbers::pi)) lo = -1.0;
  return {lo, hi};
}

Box::Box(std::vector<double> lo, std::vector<double> hi) : lb(std::move(lo)), ub(std::move(hi)) {
  if (lb.size() != ub.size()) throw DomainError("box bound dimensions differ");
  for (std::size_t i = 0; i < lb.size(); ++i)
    if (!(lb[i] <= ub[i])) throw DomainError("box bounds out of order at dim " + std::to_string(i));
}

std::vector<double> Box::midpoint() const {
  std::vector<double> m(dim());
  for (std::size_t i = 0; i < dim(); ++i) m[i] = 0.5 * (lb[i] + ub[i]);
  return m;
}

bool Box::contains(const std::vector<double>& x, double tol) const {
  if (x.size() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i)
    if (x[i] < lb[i] - tol || x[i] > ub[i] + tol) return false;
  return true;
}

double Box::sq_diag() const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) s += width(i) * width(i);
  return s;
}

std::size_t Box::widest_dim() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dim(); ++i)
    if (width(i) > width(best)) best = i;
  return best;
}

std::pair<Box, Box> Box::bisect(std::size_t d) const {
  Box left = *this, right = *this;
  const double m = 0.5 * (lb[d] + ub[d]);
  left.ub[d] = m;
  right.lb[d] = m;
  return {left, right};
}

std::vector<std::vector<double>> Box::vertices() const {
  const std::size_t n = dim();
  std::vector<std::vector<double>> out;
  out.reserve(std::size_t{1} << n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? ub[i] : lb[i];
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace cbf
