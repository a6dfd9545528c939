#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace dgm {

// 64-bit FNV-1a. Used for config digests, cache keys, and rng stream keys.
// The byte form carries its own name so a string literal can never bind to
// the (pointer, length) signature with the length slot swallowing the seed.
inline uint64_t fnv1a64_bytes(const void* data, size_t len,
                              uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64_bytes(s.data(), s.size(), h);
}

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline void hash_accum(uint64_t& h, std::string_view s) {
  h = fnv1a64(s, h);
  h = fnv1a64("|", h);
}
// One template instead of per-width overloads so every integer spelling of
// the same value (int, long, 13ull, ...) produces the same key.
template <typename T, std::enable_if_t<std::is_integral_v<T>, int> = 0>
inline void hash_accum(uint64_t& h, T v) {
  const uint64_t u = static_cast<uint64_t>(v);
  h = fnv1a64_bytes(&u, sizeof(u), h);
  h = fnv1a64("|", h);
}
inline void hash_accum(uint64_t& h, double v) {
  // hash the bit pattern so keys are exact, not formatted
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  hash_accum(h, bits);
}
} // namespace detail

// Combine heterogeneous parts into one stream key, e.g.
// hash64(global_seed, shape_id, "noise", severity).
template <typename... Parts>
uint64_t hash64(const Parts&... parts) {
  uint64_t h = 0xcbf29ce484222325ull;
  (detail::hash_accum(h, parts), ...);
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// Deterministic RNG stream. All sampling is hand-rolled on top of the raw
// 64-bit outputs so results do not depend on the standard library's
// distribution implementations.
class RngStream {
public:
  explicit RngStream(uint64_t seed) : state_(seed ^ 0x6a09e667f3bcc908ull) {
    // warm up so near-zero seeds decorrelate
    detail::splitmix64(state_);
    detail::splitmix64(state_);
  }

  uint64_t next_u64() { return detail::splitmix64(state_); }

  // uniform in [0, 1)
  double next_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t next_index(uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased and deterministic
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // standard normal via Box-Muller
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_real();
    double u2 = next_real();
    while (u1 <= 1e-300) u1 = next_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // k distinct indices from [0, n), Fisher-Yates over a sparse map
  std::vector<int> sample_without_replacement(int n, int k);

private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

} // namespace dgm
