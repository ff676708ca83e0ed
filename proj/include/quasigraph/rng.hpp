#pragma once

#include <cstdint>
#include <string_view>

namespace quasigraph {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Deterministic random stream. Streams for parallel tasks are derived from
/// (seed, task name, index), never from shared state, so results do not
/// depend on how work is scheduled.
class Substream {
 public:
  explicit constexpr Substream(std::uint64_t state) noexcept : state_(state) {}

  constexpr std::uint64_t next_u64() noexcept { return splitmix64(state_); }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    return n == 0 ? 0 : static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

inline constexpr Substream substream(std::uint64_t seed, std::string_view task, std::uint64_t index) noexcept {
  std::uint64_t s = seed ^ fnv1a(task);
  std::uint64_t mixed = splitmix64(s);
  mixed ^= index * 0xD1B54A32D192ED03ULL;
  std::uint64_t t = mixed;
  return Substream(splitmix64(t));
}

}  // namespace quasigraph
