#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace nrsl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept { return mix64(a ^ mix64(b)); }

/// Random stream purposes; fixed values so substreams stay stable across releases.
enum class StreamPurpose : std::uint64_t {
  traffic = 1,
  selection = 2,
  placement = 3,
  exceptional = 4,
  harq = 5,
  shadowing = 6,
  psfch = 7,
};

/// Independent generator for (seed, ue, purpose), insensitive to creation order.
inline Rng substream(std::uint64_t seed, std::uint64_t ue_id, StreamPurpose purpose) {
  return Rng{hash_combine(hash_combine(seed, ue_id), static_cast<std::uint64_t>(purpose))};
}

/// Uniform in (0, 1) derived from a 64-bit key.
constexpr double unit_from_key(std::uint64_t key) noexcept {
  return (static_cast<double>(mix64(key) >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard-normal sample that depends only on its key, so every
/// (seed, tx, rx, slot) tuple sees the same value whatever the evaluation order.
inline double keyed_normal(std::uint64_t key) noexcept {
  const double u1 = unit_from_key(key);
  const double u2 = unit_from_key(key ^ 0xd1b54a32d192ed03ULL);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace nrsl
