#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace carf::detail {

// Counter-based randomness: values are addressed by (seed, coordinates), so
// synthetic content and noise draws are reproducible regardless of the order
// in which they are requested.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

template <typename... Ts>
constexpr std::uint64_t hash_of(std::uint64_t seed, Ts... values) {
  std::uint64_t h = splitmix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(values))), ...);
  return h;
}

inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform in (0, 1).
inline double unit_interval(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Standard normal from two hashed uniforms (Box-Muller).
inline double standard_normal(std::uint64_t h) {
  const double u1 = unit_interval(h);
  const double u2 = unit_interval(splitmix64(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace carf::detail
