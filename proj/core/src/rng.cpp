#include "tubo/rng.hpp"

#include <cmath>

namespace tubo {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u in (0,1] so the log is finite.
  const double u = 1.0 - u01();
  const double v = u01();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * M_PI * v;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::exponential(double rate) {
  const double u = 1.0 - u01();
  return -std::log(u) / rate;
}

uint64_t derive_seed(uint64_t root, std::string_view component, uint64_t index) {
  // FNV-1a over (root, component, index), finalized by one splitmix step.
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ull;
    }
  };
  mix(root);
  for (char c : component) {
    h ^= uint8_t(c);
    h *= 0x100000001b3ull;
  }
  mix(index);
  uint64_t z = h + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace tubo
