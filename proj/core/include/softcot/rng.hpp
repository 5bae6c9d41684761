// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace softcot {

// All randomness in a run flows from one root seed through named substreams:
// substream(root, "rollout"), then further mixed with integer indices
// (step, prompt, sample). Mixing uses the splitmix64 finalizer, so any
// (seed, name, indices) tuple maps to an independent-looking stream that can
// be reconstructed exactly for bookkeeping.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline uint64_t substream(uint64_t root, std::string_view name) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return mix_seed(root, h);
}

inline uint64_t substream(uint64_t root, uint64_t index) {
  return mix_seed(root, index);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Box-Muller without a cached spare so draws depend only on the seed and
  // call index.
  double gaussian() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  void fill_gaussian(std::vector<double>& out, double std_dev) {
    for (double& v : out) v = std_dev * gaussian();
  }

  // Samples an index from a probability row (assumed normalized).
  int categorical(const double* probs, int n) {
    if (n < 1) throw std::invalid_argument("categorical: empty distribution");
    const double u = uniform01();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // Rounding can leave acc slightly below 1; fall back to the last
    // positive-probability index.
    for (int i = n - 1; i >= 0; --i)
      if (probs[i] > 0.0) return i;
    throw std::invalid_argument("categorical: all probabilities zero");
  }

  uint64_t uniform_int(uint64_t bound) {
    // Bounded rejection sampling, unbiased.
    if (bound == 0) throw std::invalid_argument("uniform_int: zero bound");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace softcot
