#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace hdm {

// splitmix64; used both as a generator stage and to hash seed material.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over bytes; stable across platforms, used for seed splitting and
// content fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic generator with a fully specified algorithm so that results
// are reproducible across compilers and standard libraries. xoshiro-free:
// splitmix64 alone has full 64-bit period over its counter and is enough here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0xa0761d6478bd642fULL) {
    // Warm up so that small seeds do not produce near-zero first draws.
    next_u64();
    next_u64();
  }

  // Derive an independent stream from (seed, label), e.g. one per conversation,
  // so parallel scheduling cannot change results.
  static Rng split(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = fnv1a64(label);
    std::uint64_t s = seed;
    h ^= splitmix64(s) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return Rng(h);
  }

  static Rng split(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    return split(seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)), label);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive, rejection-free via 128-bit multiply.
  std::uint64_t uniform_u64(std::uint64_t span) {
    // span = number of values; returns in [0, span)
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * span) >> 64);
  }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform_u64(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  bool coin(double p) { return uniform() < p; }

  // Box-Muller; two uniform draws per normal, no cached state.
  double normal(double mean = 0.0, double sigma = 1.0) {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + sigma * z;
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_u64(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace hdm
