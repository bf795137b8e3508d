#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace ccr {

// Deterministic splitmix64-based generator. The standard library engines are
// portable but its distributions are not, and every artifact this project
// writes must be byte-identical across runs and thread counts, so the few
// distributions we need are implemented here on top of the raw stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives an independent stream from a seed and an arbitrary id chain,
  // e.g. Rng::stream(master_seed, {frame_id, identity}).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = seed;
    for (std::uint64_t id : ids) s = mix(s ^ (id + 0x9e3779b97f4a7c15ull));
    return Rng(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo bias is negligible for the small n used here,
    // but keep it exact anyway.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller, fresh pair each call.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Knuth's product method; fine for the small rates used by the simulator.
  int poisson(double lambda) {
    double limit = std::exp(-lambda);
    double prod = 1.0;
    int k = 0;
    do {
      prod *= uniform();
      ++k;
    } while (prod > limit);
    return k - 1;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace ccr
