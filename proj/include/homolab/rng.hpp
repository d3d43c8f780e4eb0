#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace homolab {

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden64 = 0x9E3779B97F4A7C15ULL;

/// Seed of Monte Carlo task `task_index` under `base_seed`.
///
/// seed = mix64(base_seed + G * (task_index + 1)) with G the odd 64-bit
/// golden-ratio constant. For a fixed base the map index -> seed is
/// injective (odd multiplier, bijective mixer), so seeds never collide.
/// Seeds depend only on the task index, never on the worker that runs it.
constexpr std::uint64_t seed_stream(std::uint64_t base_seed, std::uint64_t task_index) {
  return mix64(base_seed + kGolden64 * (task_index + 1));
}

/// Hash of an ordered tuple of words, used as a counter-based RNG key.
constexpr std::uint64_t hash_words(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = mix64(a + kGolden64);
  h = mix64(h ^ (b + 0x632BE59BD9B4E019ULL));
  h = mix64(h ^ (c + 0x8CB92BA72F3D8DD7ULL));
  return mix64(h ^ (d + 0xD1B54A32D192ED03ULL));
}

/// Uniform in (0, 1] from the top 53 bits of a word.
inline double unit_open_closed(std::uint64_t w) {
  return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53;
}

/// Two independent standard normals from one key (Box-Muller).
inline std::pair<double, double> normal_pair(std::uint64_t key) {
  const double u1 = unit_open_closed(mix64(key ^ 0xA0761D6478BD642FULL));
  const double u2 = unit_open_closed(mix64(key ^ 0xE7037ED1A0B428DBULL));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(t), r * std::sin(t)};
}

}  // namespace homolab
