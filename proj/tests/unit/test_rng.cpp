#include "kshot/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace kshot;

using Block = std::array<std::uint32_t, 4>;

// Known-answer vectors published with the Random123 library.
TEST(Philox, KnownAnswerZero) {
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
}

TEST(Philox, KnownAnswerAllOnes) {
  EXPECT_EQ(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
}

TEST(Philox, KnownAnswerPi) {
  EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterRng, WordsFollowDocumentedLayout) {
  const std::uint64_t seed = 0x0123456789abcdefULL, stream = (7ULL << 32) + 3;
  CounterRng rng(seed, stream);
  for (std::uint64_t block = 0; block < 3; ++block) {
    const Block out = philox4x32_10({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                     static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                                    {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    EXPECT_EQ(rng.next_u64(), out[0] | (static_cast<std::uint64_t>(out[1]) << 32));
    EXPECT_EQ(rng.next_u64(), out[2] | (static_cast<std::uint64_t>(out[3]) << 32));
  }
}

TEST(CounterRng, DerivedDrawsMatchFormulas) {
  CounterRng a(5, 9), b(5, 9);
  const std::uint64_t w = b.next_u64();
  EXPECT_EQ(a.uniform01(), static_cast<double>(w >> 11) * 0x1.0p-53);
  const std::uint64_t w1 = b.next_u64(), w2 = b.next_u64();
  const double u1 = (static_cast<double>(w1 >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(w2 >> 11) * 0x1.0p-53;
  EXPECT_DOUBLE_EQ(a.normal(), std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2));
}

TEST(CounterRng, SameSeedSameSequenceDifferentStreamDiffers) {
  CounterRng a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(CounterRng, UniformRangesAndMoments) {
  CounterRng rng(1, 0);
  double sum = 0, sum_sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double o = rng.uniform_open();
    ASSERT_GT(o, 0.0);
    ASSERT_LT(o, 1.0);
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.015);
}

TEST(CounterRng, BelowIsInRangeAndRoughlyUniform) {
  CounterRng rng(3, 0);
  std::array<int, 6> counts{};
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(6);
    ASSERT_LT(v, 6u);
    ++counts[v];
  }
  // Binomial sd is about 91; 5 sd bound.
  for (int c : counts) EXPECT_NEAR(c, n / 6, 460);
}

TEST(CounterRng, PartialShuffleIsPermutation) {
  CounterRng rng(11, 4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.partial_shuffle(v, 10);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}
