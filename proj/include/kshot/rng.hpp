#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace kshot {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Pure function of (counter, key).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based generator addressed by (seed, stream).
///
/// Layout: key = (seed & 0xffffffff, seed >> 32); the counter of block b is
/// (b & 0xffffffff, b >> 32, stream & 0xffffffff, stream >> 32). Each block
/// yields two 64-bit words, word = lo | (hi << 32), taken in order. Derived
/// draws are specified below so any implementation can reproduce them:
///   uniform01()     = (word >> 11) * 2^-53                      in [0, 1)
///   uniform_open()  = ((word >> 11) + 0.5) * 2^-53              in (0, 1)
///   normal()        = sqrt(-2 ln u1) * cos(2 pi u2), u1 = uniform_open(),
///                     u2 = uniform01(), one normal per pair
///   below(n)        = word % n, rejecting words < (2^64 - n) % n
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t next_u64() noexcept;
  double uniform01() noexcept;
  double uniform_open() noexcept;
  double normal() noexcept;
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Partial Fisher-Yates: the first `take` entries of the result are a
  /// uniform sample without replacement of `values`, in sampled order.
  template <typename T>
  void partial_shuffle(std::vector<T>& values, std::size_t take) noexcept {
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < take && i + 1 < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(values[i], values[j]);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int used_ = 2;
};

/// Stream ids for the sub-generators of a top-level seed. Each family owns a
/// 2^32-wide block; callers add a small index (split, episode, restart).
namespace streams {
inline constexpr std::uint64_t world_weights = 1ULL << 32;
inline constexpr std::uint64_t world_features = 2ULL << 32;
inline constexpr std::uint64_t gmm_init = 3ULL << 32;
inline constexpr std::uint64_t heldout_splits = 4ULL << 32;
inline constexpr std::uint64_t hmc = 5ULL << 32;
inline constexpr std::uint64_t episodes = 6ULL << 32;
}  // namespace streams

}  // namespace kshot
