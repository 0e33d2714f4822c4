// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace dreammap {

/// SplitMix64 finalizer. Good avalanche, cheap, stable across platforms.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  return splitmix64_next(s);
}

inline std::uint64_t hash_str(std::string_view s) {
  // FNV-1a
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Deterministic pseudo-random stream. Not cryptographic. The generator is
/// self-contained so sequences are identical across standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  /// Uniform double in [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw (Box-Muller, cached spare).
  double next_gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Force the low bit so u1 > 0 and log(u1) is finite.
    double u1 = static_cast<double>((next_u64() >> 11) | 1ULL) * 0x1.0p-53;
    double u2 = next_unit();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::next_below: n == 0");
    std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int next_index(int n) { return static_cast<int>(next_below(static_cast<std::uint64_t>(n))); }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derive an independent named substream from a root seed. Streams are keyed
/// by (root, name, counters), so evaluation order cannot change the draws a
/// consumer sees.
inline RngStream derive_stream(std::uint64_t root, std::string_view name,
                               std::uint64_t c0 = 0, std::uint64_t c1 = 0,
                               std::uint64_t c2 = 0) {
  std::uint64_t h = hash_mix(root, hash_str(name));
  h = hash_mix(h, c0);
  h = hash_mix(h, c1);
  h = hash_mix(h, c2);
  return RngStream(h);
}

/// k distinct elements drawn uniformly from pool (partial Fisher-Yates).
/// Returns the whole pool (shuffled) when k >= pool size.
inline std::vector<int> sample_distinct(std::vector<int> pool, int k, RngStream& rng) {
  const int n = static_cast<int>(pool.size());
  const int take = k < n ? k : n;
  for (int i = 0; i < take; ++i) {
    int j = i + rng.next_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace dreammap
