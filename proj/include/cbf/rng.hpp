#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace cbf {

// SplitMix64 stream. Self-contained so results are reproducible across
// platforms and standard libraries (std distributions are not pinned by
// the standard). All randomness in the toolkit flows from one top-level
// seed, fanned out through derive() with fixed labels.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform over the closed unit ball in dim dimensions.
  std::vector<double> unit_ball(std::size_t dim) {
    std::vector<double> v = unit_sphere(dim);
    const double r = std::pow(uniform01(), 1.0 / static_cast<double>(dim));
    for (double& c : v) c *= r;
    return v;
  }

  // Uniform over the unit sphere surface.
  std::vector<double> unit_sphere(std::size_t dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& c : v) {
        c = normal();
        norm2 += c * c;
      }
    } while (norm2 == 0.0);
    const double scale = 1.0 / std::sqrt(norm2);
    for (double& c : v) c *= scale;
    return v;
  }

  void shuffle_indices(std::vector<std::size_t>& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[below(i)]);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable label-based seed derivation (FNV-1a over the label, mixed with
// the parent seed).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : label) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  Rng mixer(seed ^ h);
  return mixer.next_u64();
}

}  // namespace cbf
