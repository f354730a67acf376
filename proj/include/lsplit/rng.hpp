#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace lsplit {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

// Derives an independent child seed from a base seed, a named stream and an
// index. Streams keep e.g. predictor init and split sampling decorrelated.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                                    std::uint64_t index = 0) noexcept {
  std::uint64_t h = detail::splitmix64(base ^ detail::fnv1a(stream));
  return detail::splitmix64(h + detail::splitmix64(index));
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Fisher-Yates with an explicit generator; std::shuffle's draw pattern is
// implementation-defined, this one is fixed.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  auto idx = iota_indices(n);
  shuffle_in_place(idx, rng);
  return idx;
}

}  // namespace lsplit
