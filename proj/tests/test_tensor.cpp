#include <gtest/gtest.h>

#include <random>

#include "skillstep/tensor.hpp"

using skillstep::Tensor;

TEST(Tensor, ZerosAndShape) {
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.rank(), 2);
  EXPECT_EQ(t.dim(0), 2);
  EXPECT_EQ(t.dim(1), 3);
  for (int i = 0; i < t.numel(); ++i) EXPECT_EQ(t.at(i), 0.0f);
}

TEST(Tensor, FromVector) {
  Tensor t = Tensor::from({1.0f, 2.0f, 3.0f});
  EXPECT_EQ(t.numel(), 3);
  EXPECT_EQ(t.at(1), 2.0f);
}

TEST(Tensor, CopySharesBufferCloneDoesNot) {
  Tensor a = Tensor::from({1.0f, 2.0f});
  Tensor shared = a;
  Tensor deep = a.clone();
  a.at(0) = 9.0f;
  EXPECT_EQ(shared.at(0), 9.0f);
  EXPECT_EQ(deep.at(0), 1.0f);
}

TEST(Tensor, BitwiseEqual) {
  Tensor a = Tensor::from({1.0f, -0.5f});
  Tensor b = a.clone();
  EXPECT_TRUE(a.bitwise_equal(b));
  b.at(1) = -0.5f + 1e-7f;
  EXPECT_FALSE(a.bitwise_equal(b));
}

TEST(Tensor, FillUniformDeterministic) {
  Tensor a({16});
  Tensor b({16});
  std::mt19937 r1(42), r2(42);
  a.fill_uniform(r1, 0.5f);
  b.fill_uniform(r2, 0.5f);
  EXPECT_TRUE(a.bitwise_equal(b));
  for (int i = 0; i < a.numel(); ++i) {
    EXPECT_LE(a.at(i), 0.5f);
    EXPECT_GE(a.at(i), -0.5f);
  }
}

TEST(Tensor, AllFinite) {
  Tensor t = Tensor::from({0.0f, 1.0f});
  EXPECT_TRUE(t.all_finite());
  t.at(0) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t.at(0) = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, SameShape) {
  EXPECT_TRUE(Tensor({2, 3}).same_shape(Tensor({2, 3})));
  EXPECT_FALSE(Tensor({2, 3}).same_shape(Tensor({3, 2})));
  EXPECT_FALSE(Tensor({6}).same_shape(Tensor({2, 3})));
}
