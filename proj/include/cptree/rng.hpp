#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cptree {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a sequence of words into one key. Order-sensitive.
constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

/// Independent stream for (master, tags...). Streams with different tag
/// tuples are decorrelated through the hash.
Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

/// Maps a 64-bit word to a double in [0, 1) using the top 53 bits.
constexpr double to_unit(std::uint64_t x) noexcept {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline double uniform01(Rng& rng) { return to_unit(rng()); }

/// Exp(rate) draw; rate 0 gives +inf.
double exponential(Rng& rng, double rate);

// Stream tags, kept distinct so that no two consumers share a stream.
namespace tag {
inline constexpr std::uint64_t environment = 0x454e56;
inline constexpr std::uint64_t replica = 0x524550;
inline constexpr std::uint64_t grid = 0x475244;
inline constexpr std::uint64_t sir = 0x534952;
inline constexpr std::uint64_t xi = 0x584931;
inline constexpr std::uint64_t walk = 0x57414c;
}  // namespace tag

}  // namespace cptree
