#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace llmrank {

/// Deterministic random source. Wraps mt19937_64 but generates doubles,
/// bounded integers and shuffles itself so that results do not depend on
/// the standard library's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % bound;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

private:
  std::mt19937_64 gen_;
};

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// SplitMix64 finalizer; spreads entropy of a combined seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derives a stage seed from the pipeline seed and a stage name, so each
/// stage is independently reproducible from the single configured seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) {
  return mix_seed(root, fnv1a(stage));
}

/// Index of the first cumulative weight >= u * total. `cumulative` must be
/// non-empty, non-decreasing and end with the total mass.
std::size_t weighted_index(const std::vector<double>& cumulative, double u);

/// Draws `n` indices with replacement from the distribution given by
/// (unnormalized, non-negative) weights.
std::vector<std::size_t> weighted_draws(const std::vector<double>& weights, std::size_t n,
                                        Rng& rng);

}  // namespace llmrank
