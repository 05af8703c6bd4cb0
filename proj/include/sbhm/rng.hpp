#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sbhm {

/// Seeded RNG with generator-independent normal draws. All randomness in the
/// library flows through this class so that results are reproducible
/// bit-for-bit for a given seed, independent of the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on (0,1].
  double uniform() {
    return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Bernoulli(p).
  bool bernoulli(double p) { return uniform() <= p; }

 private:
  static constexpr double two_pi = 6.283185307179586476925286766559;
  std::mt19937_64 gen_;
};

/// splitmix64 finalizer; used to derive independent per-stream seeds from a
/// replicate seed without correlated low bits.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sbhm
