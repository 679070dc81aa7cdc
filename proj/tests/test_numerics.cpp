#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "trand/numerics.hpp"

using namespace trand;

TEST(Cosine, BasicExamples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vec{1, 0}, Vec{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vec{1, 0}, Vec{1, 0}), 1.0);
  EXPECT_NEAR(cosine_similarity(Vec{1, 2}, Vec{2, 1}), 0.8, 1e-15);
}

TEST(Cosine, SymmetricAndBounded) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    Vec a(7), b(7);
    for (auto& x : a) x = rng.uniform(-5, 5);
    for (auto& x : b) x = rng.uniform(-5, 5);
    const double ab = cosine_similarity(a, b);
    EXPECT_EQ(ab, cosine_similarity(b, a));
    EXPECT_LE(std::abs(ab), 1.0 + kSimilaritySlack);
  }
}

TEST(Cosine, ZeroNormIsAnError) {
  EXPECT_THROW(cosine_similarity(Vec{0, 0}, Vec{1, 0}), DegenerateInputError);
  EXPECT_THROW(cosine_similarity(Vec{1, 0}, Vec{0, 0}), DegenerateInputError);
}

TEST(Cosine, DimensionMismatch) {
  EXPECT_THROW(cosine_similarity(Vec{1, 0}, Vec{1, 0, 0}), ParameterError);
}

TEST(L2Normalize, Examples) {
  const auto v = l2_normalize(Vec{3, 4});
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
  EXPECT_EQ(l2_normalize(Vec{1, 0, 0}), (Vec{1, 0, 0}));
  EXPECT_THROW(l2_normalize(Vec{0, 0}), DegenerateInputError);
}

TEST(L2Normalize, UnitNormOutput) {
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    Vec a(1 + rng.index(40));
    for (auto& x : a) x = rng.uniform(-1e3, 1e3);
    EXPECT_NEAR(norm(l2_normalize(a)), 1.0, 1e-12);
  }
}

TEST(ScaledSoftmax, Uniform) {
  for (double tau : {0.05, 0.1, 1.0, 7.0}) {
    const auto p = scaled_softmax(Vec{0.3, 0.3, 0.3, 0.3}, tau);
    for (double x : p) EXPECT_NEAR(x, 0.25, 1e-15);
  }
}

TEST(ScaledSoftmax, TwoEntryValue) {
  // 1 / (1 + e^-5) computed independently.
  const double hi = 1.0 / (1.0 + std::exp(-5.0));
  const auto p = scaled_softmax(Vec{1.0, 0.5}, 0.1);
  EXPECT_NEAR(p[0], 0.993307, 1e-6);
  EXPECT_NEAR(p[1], 0.006693, 1e-6);
  EXPECT_NEAR(p[0], hi, 1e-15);
}

TEST(ScaledSoftmax, EqualScoresEqualProbabilities) {
  const auto p = scaled_softmax(Vec{0.9, 0.9, 0.1}, 0.1);
  EXPECT_EQ(p[0], p[1]);
  EXPECT_GT(p[1], p[2]);
}

TEST(ScaledSoftmax, Errors) {
  EXPECT_THROW(scaled_softmax(Vec{1.0}, 0.0), ParameterError);
  EXPECT_THROW(scaled_softmax(Vec{1.0}, -1.0), ParameterError);
  EXPECT_THROW(scaled_softmax(Vec{}, 0.1), ParameterError);
}

TEST(ScaledSoftmax, SumsToOneOrderPreservingShiftInvariant) {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    Vec s(1 + rng.index(64));
    for (auto& x : s) x = rng.uniform(-1.0, 1.0);
    const double tau = rng.uniform(1e-3, 10.0);
    const auto p = scaled_softmax(s, tau);
    double sum = 0.0;
    for (double x : p) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s[i] > s[i + 1]) {
        EXPECT_GE(p[i], p[i + 1]);
      }
    }
    const double c = rng.uniform(-50.0, 50.0);
    Vec shifted = s;
    for (auto& x : shifted) x += c;
    const auto q = scaled_softmax(shifted, tau);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(PairwiseSimilarity, StandardBasis) {
  const std::vector<Vec> e = {{1, 0}, {0, 1}};
  const auto m = pairwise_similarity(e, e);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 1), 1.0);
  EXPECT_EQ(m(0, 1), 0.0);
  EXPECT_EQ(m(1, 0), 0.0);
  const std::vector<Vec> one = {{0.6, 0.8}};
  EXPECT_NEAR(pairwise_similarity(one, one)(0, 0), 1.0, 1e-15);
}

TEST(PairwiseSimilarity, MatchesPairLoopOracle) {
  Rng rng(17);
  std::vector<Vec> rows, cols;
  for (int i = 0; i < 5; ++i) rows.push_back(testutil::random_unit(9, rng));
  for (int j = 0; j < 7; ++j) cols.push_back(testutil::random_unit(9, rng));
  const auto m = pairwise_similarity(rows, cols);
  ASSERT_EQ(m.rows(), 5u);
  ASSERT_EQ(m.cols(), 7u);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 9; ++k) s += rows[i][k] * cols[j][k];
      EXPECT_LE(std::abs(m(i, j) - s), 1e-12);
    }
  }
}

TEST(PairwiseSimilarity, ExactlySymmetricOnSelf) {
  Rng rng(23);
  std::vector<Vec> v;
  for (int i = 0; i < 12; ++i) v.push_back(testutil::random_unit(5, rng));
  const auto m = pairwise_similarity(v, v);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(m(i, j), m(j, i));
  }
}

TEST(PairwiseSimilarity, DimensionMismatch) {
  const std::vector<Vec> a = {{1, 0}};
  const std::vector<Vec> b = {{1, 0, 0}};
  EXPECT_THROW(pairwise_similarity(a, b), ParameterError);
}

TEST(RngTest, EqualSeedsEqualStreams) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100000; ++i) {
    const auto x = a.next_u64();
    ASSERT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(RngTest, DrawRanges) {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.index(7), 7u);
  }
  EXPECT_THROW(rng.index(0), ParameterError);
}

TEST(RngTest, ShuffleIsAPermutation) {
  Rng rng(1);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  rng.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}
