#pragma once

// Counter-based deterministic random numbers. Every draw is a pure function
// of (key, counter), so candidate i is reproducible without generating
// candidates 0..i-1 and independent streams can run in parallel.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace bon::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer; full-avalanche mix of one 64-bit word.
inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Combine two words into a well-mixed stream key.
inline constexpr std::uint64_t mix2(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + kGolden));
}

inline constexpr std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix2(mix2(a, b), c);
}

/// Stateless counter hash: word `counter` of stream `key`.
inline constexpr std::uint64_t at(std::uint64_t key, std::uint64_t counter) {
  return splitmix64(key ^ (counter * kGolden));
}

/// Map 64 random bits to a double in the open interval (0, 1).
inline double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform_at(std::uint64_t key, std::uint64_t counter) {
  return to_unit(at(key, counter));
}

/// Standard normal draw i of stream `key` (Box-Muller on counters 2i, 2i+1).
inline double normal_at(std::uint64_t key, std::uint64_t i) {
  const double u1 = to_unit(at(key, 2 * i));
  const double u2 = to_unit(at(key, 2 * i + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::vector<double> normal_vector(std::uint64_t key, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = normal_at(key, i);
  return out;
}

/// FNV-1a over raw bytes; stable content hashing for strings and buffers.
inline std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return splitmix64(h);
}

inline std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0xCBF29CE484222325ull) {
  return hash_bytes(s.data(), s.size(), seed);
}

/// Content hash of a real vector (bit-exact over IEEE-754 representations).
inline std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t seed = 0xCBF29CE484222325ull) {
  std::uint64_t h = seed;
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h = mix2(h, bits);
  }
  return h;
}

}  // namespace bon::rng
