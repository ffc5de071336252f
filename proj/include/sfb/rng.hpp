#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sfb {

/// Seeded RNG with hand-rolled distributions. Everything downstream of a seed
/// must be reproducible byte-for-byte, so no std::*_distribution is used
/// anywhere (their output sequences are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix(seed)) {}

  /// Independent substream for (seed, index), e.g. one per worker or per draw site.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix(seed ^ mix(index + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t bits() { return gen_(); }

  /// Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

  /// Standard normal via Box-Muller (first component only; stateless).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential() {  // rate 1
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(u);
  }

  Eigen::VectorXd gaussian_vector(int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  /// Flat Dirichlet row via normalized Exp(1) draws.
  Eigen::VectorXd dirichlet(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = exponential();
    return v / v.sum();
  }

  /// Uniform over the solid unit d-ball: uniform direction, radius u^(1/d).
  Eigen::VectorXd ball_uniform(int d) {
    Eigen::VectorXd dir = sphere_uniform(d);
    const double r = std::pow(uniform(), 1.0 / static_cast<double>(d));
    return r * dir;
  }

  /// Uniform over the unit sphere surface.
  Eigen::VectorXd sphere_uniform(int d) {
    Eigen::VectorXd g = gaussian_vector(d);
    double n = g.norm();
    while (n < 1e-12) {  // astronomically unlikely; regenerate rather than divide by ~0
      g = gaussian_vector(d);
      n = g.norm();
    }
    return g / n;
  }

  /// Inverse-CDF draw from an explicit probability vector (assumed normalized).
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;  // guard against rounding at the tail
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {  // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace sfb
