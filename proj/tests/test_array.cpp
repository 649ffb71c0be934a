#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "calprune/array.hpp"
#include "calprune/rng.hpp"

using namespace calprune;

TEST(Array, ShapeAndSizeAgree) {
  const Array a = Array::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(a.rank(), 2u);
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a.rows(), 2u);
  EXPECT_EQ(a.cols(), 3u);
  EXPECT_DOUBLE_EQ(a.at(1, 2), 6.0);
  EXPECT_EQ(shape_string(a.shape()), "[2, 3]");
}

TEST(Array, SizeMismatchRejected) {
  EXPECT_THROW(Array({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Array, ScalarDefaults) {
  const Array s;
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.item(), 0.0);
  EXPECT_DOUBLE_EQ(Array::scalar(2.5).item(), 2.5);
}

TEST(Array, EmptyBatchHasZeroSize) {
  const Array a = Array::zeros({0, 4});
  EXPECT_EQ(a.size(), 0u);
  EXPECT_EQ(a.cols(), 4u);
}

TEST(Array, FiniteCheck) {
  EXPECT_TRUE(Array::vector({1, 2}).all_finite());
  EXPECT_FALSE(Array::vector({1, std::nan("")}).all_finite());
  EXPECT_FALSE(Array::vector({INFINITY}).all_finite());
}

TEST(Array, Equality) {
  EXPECT_EQ(Array::vector({1, 2}), Array::vector({1, 2}));
  EXPECT_FALSE(Array::vector({1, 2}) == Array::matrix(1, 2, {1, 2}));
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, SplitMixReferenceValue) {
  // First output of SplitMix64 from state 0.
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64(state), 0xe220a8397b1dcdafULL);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowStaysInRange) {
  Rng r(5);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) ++hist[r.below(7)];
  for (int h : hist) EXPECT_GT(h, 800);
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(11);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(5, 3), mix_seed(5, 3));
}
