#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ecgid {

/// splitmix64 step; used to derive independent seed streams from one seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a stream seed from a base seed plus a list of stream labels
/// (subject index, grid coordinates, ...). Independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> stream) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t part : stream) {
    h = splitmix64(h ^ splitmix64(part + 0x6a09e667f3bcc909ULL));
  }
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base,
                    std::initializer_list<std::uint64_t> stream = {}) {
  return Rng{derive_seed(base, stream)};
}

/// Unbiased draw from [0, n). Fixed rejection scheme so results do not depend
/// on the standard library's distribution implementation.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (one value per call; cached pair dropped
/// to keep the draw count predictable).
inline double gaussian(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
}

/// In-place Fisher-Yates shuffle driven by uniform_below.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

/// k distinct indices sampled uniformly from [0, n), in selection order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t k,
                                                           Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // Partial Fisher-Yates: only the first k positions are finalized.
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k < n ? k : n);
  return idx;
}

}  // namespace ecgid
