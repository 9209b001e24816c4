#ifndef TUBO_RNG_HPP
#define TUBO_RNG_HPP

#include <cstdint>
#include <string_view>

namespace tubo {

/// Small self-contained splitmix64 generator. Used everywhere instead of
/// <random> distributions so that results are bit-reproducible across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double u01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal();

  /// Exponential with the given rate (inverse-CDF).
  double exponential(double rate = 1.0);

  /// Uniform integer in [0, n). n must be > 0.
  uint32_t bounded(uint32_t n) { return uint32_t(next_u64() % n); }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Derives a child seed from a root seed, a component name and an index.
/// All randomness in the project flows from one root seed through this.
uint64_t derive_seed(uint64_t root, std::string_view component, uint64_t index = 0);

}  // namespace tubo

#endif  // TUBO_RNG_HPP
