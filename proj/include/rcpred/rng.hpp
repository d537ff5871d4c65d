#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rcpred/error.hpp"

namespace rcpred {

// Project-wide PRNG. All randomness flows through Rng instances constructed
// from explicit 64-bit seeds. The raw stream is std::mt19937_64 (whose output
// sequence is fixed by the standard); the distributions on top are implemented
// here instead of with std::*_distribution so that streams are identical
// across standard libraries:
//   uniform01  -> top 53 bits of one draw, in [0, 1)
//   normal     -> Box-Muller (two draws per variate, cosine branch)
//   below(n)   -> unbiased bounded integer via rejection sampling
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal. Uses 1-u so the log argument lies in (0, 1].
  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform integer in [0, n). Rejection keeps it exactly uniform.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    std::uint64_t x = next_u64();
    while (x < threshold) x = next_u64();
    return x % n;
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rcpred
