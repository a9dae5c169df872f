#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace rulemine {

/// Deterministic random source built on splitmix64. Both the engine and the
/// distributions are hand-rolled so streams reproduce across platforms and
/// standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Unbiased integer in [0, n). Requires n > 0.
  int below(int n) {
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = u64();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double real01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * real01() - 1.0;
      v = 2.0 * real01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double k = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * k;
    has_spare_ = true;
    return u * k;
  }

  /// k distinct indices uniformly sampled from [0, n), returned ascending
  /// (selection sampling, one pass).
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> out;
    if (k <= 0) return out;
    if (k >= n) {
      out.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
      return out;
    }
    out.reserve(static_cast<size_t>(k));
    int remaining = k;
    for (int i = 0; i < n && remaining > 0; ++i) {
      // select i with probability remaining / (n - i)
      if (below(n - i) < remaining) {
        out.push_back(i);
        --remaining;
      }
    }
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (int i = static_cast<int>(xs.size()) - 1; i > 0; --i) {
      std::swap(xs[static_cast<size_t>(i)], xs[static_cast<size_t>(below(i + 1))]);
    }
  }

 private:
  uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stable seed derivation for per-query / per-epoch substreams (splitmix64 rounds).
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t x = a ^ (b * 0x9e3779b97f4a7c15ULL) ^ (c * 0xbf58476d1ce4e5b9ULL);
  for (int i = 0; i < 2; ++i) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    x = x ^ (x >> 31);
  }
  return x;
}

}  // namespace rulemine
