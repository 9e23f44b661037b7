#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace neustrom {

/// Deterministic, platform-independent random source (splitmix64 core).
///
/// The standard <random> distributions are implementation-defined, so every
/// draw here is built from raw 64-bit outputs to keep runs byte-reproducible
/// across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64 in all
    // uses, and determinism matters more than a <2^-40 bias.
    return next_u64() % n;
  }

  /// Standard normal via Box-Muller (cached spare kept for the next call).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * 3.14159265358979323846 * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Seed fan-out chain: component seeds are derived from the master seed by
/// FNV-1a hashing the component label into the state. Documented contract:
/// derive_seed(s, label) == FNV64(bytes(s) || label), so a manifest's master
/// seed alone reproduces every stream.
inline uint64_t derive_seed(uint64_t master, std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint64_t byte) {
    h ^= byte;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) mix((master >> (8 * i)) & 0xff);
  for (char c : label) mix(static_cast<unsigned char>(c));
  return h;
}

/// Numbered sub-streams (trials, epochs) hang off a labeled seed.
inline uint64_t derive_seed(uint64_t master, std::string_view label, uint64_t index) {
  uint64_t h = derive_seed(master, label);
  h ^= 0x9e3779b97f4a7c15ull + index;
  h *= 0x100000001b3ull;
  return h;
}

}  // namespace neustrom
