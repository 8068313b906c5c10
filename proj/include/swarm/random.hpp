// Deterministic random streams with named substream derivation.
// Every consumer of randomness (edge sampling, per-agent gradients,
// per-agent step counts, quantizer rounding) owns its own stream so
// traces are bitwise reproducible and variants stay coupled under a
// shared master seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace swarm {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Substream domains. Keep values stable: they are part of the
// reproducibility contract for a given master seed.
enum class StreamDomain : std::uint64_t {
  edge_sampling = 1,
  agent_gradient = 2,
  agent_steps = 3,
  quantizer = 4,
  objective_data = 5,
  replica = 6,
  moments = 7,
  probe_points = 8,
};

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  // Derives an independent stream identified by (master, domain, index).
  static RandomStream substream(std::uint64_t master, StreamDomain domain,
                                std::uint64_t index) {
    return RandomStream(derive_seed(master, domain, index));
  }

  static std::uint64_t derive_seed(std::uint64_t master, StreamDomain domain,
                                   std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s ^= static_cast<std::uint64_t>(domain) * 0x9e3779b97f4a7c15ull + a;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0xbf58476d1ce4e5b9ull + b;
    return splitmix64(s);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool coin() { return (engine_() & 1u) != 0; }

  // Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t mix_seed(std::uint64_t seed) {
    std::uint64_t s = seed;
    return splitmix64(s);
  }

  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace swarm
