#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace psm {

// Counter-based generator: the n-th output is a pure function of (key, n).
// split() derives an independent key, so parallel consumers can draw from
// disjoint streams without sharing state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key = 0) : key_(mix(key ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + kGamma * ++counter_); }

  Rng split(std::uint64_t stream) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(stream + 0x9e3779b97f4a7c15ULL));
    return child;
  }

  std::uint64_t counter() const { return counter_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this); }

  // Standard normal via Box-Muller; both variates of a pair are used.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::Matrix<double, 2, Eigen::Dynamic> normal2(Eigen::Index n) {
    Eigen::Matrix<double, 2, Eigen::Dynamic> out(2, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      out(0, j) = normal();
      out(1, j) = normal();
    }
    return out;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace psm
