#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbf {

// Thrown when an evaluation leaves the domain of an operation
// (division by zero, sqrt of a negative, interval denominator
// straddling zero).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Closed interval [lo, hi]. Plain double arithmetic, no outward
// rounding; enclosure statements elsewhere carry a documented 1e-12
// slack instead.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double a, double b) : lo(a), hi(b) {
    if (!(lo <= hi)) throw DomainError("interval bounds out of order");
  }
  static Interval point(double v) { return Interval(v, v); }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  // Largest absolute value attained on the interval.
  double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

inline Interval operator+(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }
inline Interval operator-(Interval a, Interval b) { return {a.lo - b.hi, a.hi - b.lo}; }
inline Interval operator-(Interval a) { return {-a.hi, -a.lo}; }

inline Interval operator*(Interval a, Interval b) {
  const double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return {std::min(std::min(p1, p2), std::min(p3, p4)),
          std::max(std::max(p1, p2), std::max(p3, p4))};
}

inline Interval operator/(Interval a, Interval b) {
  if (b.lo <= 0.0 && b.hi >= 0.0) throw DomainError("interval division: denominator contains 0");
  return a * Interval{1.0 / b.hi, 1.0 / b.lo};
}

// x^k with the tight power rule; even powers pin the lower bound at 0
// when the interval straddles zero (x*x on [-1,1] would give [-1,1]).
Interval pow_int(Interval a, int k);

Interval sin_iv(Interval a);
Interval cos_iv(Interval a);
inline Interval exp_iv(Interval a) { return {std::exp(a.lo), std::exp(a.hi)}; }

inline Interval sqrt_iv(Interval a) {
  if (a.lo < 0.0) throw DomainError("interval sqrt of negative range");
  return {std::sqrt(a.lo), std::sqrt(a.hi)};
}

inline Interval hull(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

// Axis-aligned box: per-dimension closed bounds.
struct Box {
  std::vector<double> lb;
  std::vector<double> ub;

  Box() = default;
  Box(std::vector<double> lo, std::vector<double> hi);
  static Box point(const std::vector<double>& x) { return Box(x, x); }

  std::size_t dim() const { return lb.size(); }
  double width(std::size_t i) const { return ub[i] - lb[i]; }
  std::vector<double> midpoint() const;
  Interval interval(std::size_t i) const { return {lb[i], ub[i]}; }
  bool contains(const std::vector<double>& x, double tol = 0.0) const;
  // Sum of squared widths, the subdomain size of the stopping rule.
  double sq_diag() const;
  // Index of the widest dimension; ties resolve to the lowest index.
  std::size_t widest_dim() const;
  std::pair<Box, Box> bisect(std::size_t d) const;
  // All 2^dim vertices in lexicographic bit order (dim capped by caller).
  std::vector<std::vector<double>> vertices() const;
};

}  // namespace cbf
