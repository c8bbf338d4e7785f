#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace steerlab {

// Deterministic splitmix64 generator. Every stochastic choice in the project
// goes through this so that results are reproducible across platforms and
// standard-library versions (std::uniform_* distributions are not pinned by
// the standard).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float next_float() { return static_cast<float>(next_double()); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller.
  float normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = static_cast<float>(r * std::sin(theta));
    have_spare_ = true;
    return static_cast<float>(r * std::cos(theta));
  }

  float normal(float mean, float stddev) { return mean + stddev * normal(); }

  // Fisher-Yates over indices [0, n).
  std::vector<size_t> permutation(size_t n) {
    std::vector<size_t> p(n);
    for (size_t i = 0; i < n; ++i) p[i] = i;
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

// Stable seed derivation: child streams never collide as long as
// (stream, index) pairs differ.
inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t index = 0) {
  Rng r(master ^ (stream * 0xd6e8feb86659fd93ull) ^ (index * 0xa5a5a5a5a5a5a5a5ull));
  r.next_u64();
  return r.next_u64();
}

}  // namespace steerlab
