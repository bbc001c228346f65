#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace dynlab;
using dynlab::testing::naive_matmul;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.shape_string(), "[2x3]");
}

TEST(Tensor, RankChecks) {
  const auto v = Tensor::vector({1, 2, 3});
  EXPECT_THROW(v.rows(), DimensionError);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), DimensionError);
}

TEST(Matmul, IdentityTimesColumn) {
  const auto out = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(out, Tensor::matrix({{3}, {4}}));
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), Tensor::matrix({{11}}));
}

TEST(Matmul, RandomMatchesNaiveLoop) {
  Rng rng(5);
  const auto a = rng_normal(rng, {5, 7});
  const auto b = rng_normal(rng, {7, 3});
  const auto got = matmul(a, b);
  const auto want = naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Matmul, InnerDimensionMismatch) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Elementwise, AddSubMulScale) {
  const auto a = Tensor::matrix({{1, 2}, {3, 4}});
  const auto b = Tensor::matrix({{5, 6}, {7, 8}});
  EXPECT_EQ(add(a, b), Tensor::matrix({{6, 8}, {10, 12}}));
  EXPECT_EQ(sub(b, a), Tensor::matrix({{4, 4}, {4, 4}}));
  EXPECT_EQ(mul(a, b), Tensor::matrix({{5, 12}, {21, 32}}));
  EXPECT_EQ(scale(a, 2.0), Tensor::matrix({{2, 4}, {6, 8}}));
  EXPECT_THROW(add(a, Tensor({2, 3})), DimensionError);
}

TEST(Softmax, ZerosAreUniform) {
  const auto s = softmax(Tensor::vector({0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  const auto s = softmax(Tensor::vector({1000, 0}));
  EXPECT_TRUE(all_finite(s.data()));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_NEAR(s[1], 0.0, 1e-15);
}

TEST(Softmax, MatchesDirectFormula) {
  const auto s = softmax(Tensor::vector({1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(s[1], std::exp(2.0) / z, 1e-12);
  EXPECT_NEAR(s[2], std::exp(3.0) / z, 1e-12);
}

TEST(Softmax, RowsAreIndependent) {
  const auto s = softmax_rows(Tensor::matrix({{0, 0}, {0, std::log(3.0)}}));
  EXPECT_NEAR(s(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(s(1, 1), 0.75, 1e-15);
}

TEST(LogSumExp, StableForLargeValues) {
  const std::vector<double> z = {1000, 1000};
  EXPECT_NEAR(log_sum_exp(z), 1000 + std::log(2.0), 1e-12);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<double> v = {1, 3, 3, 2};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(GatherRows, SelectsAndValidates) {
  const auto t = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> ids = {2, 0};
  EXPECT_EQ(gather_rows(t, ids), Tensor::matrix({{5, 6}, {1, 2}}));
  const std::vector<std::size_t> bad = {3};
  EXPECT_THROW(gather_rows(t, bad), IndexError);
}

TEST(MaxRelativeError, FloorAppliesNearZero) {
  const std::vector<double> a = {1.0, 1e-20}, b = {1.0 + 1e-8, 2e-20};
  EXPECT_NEAR(max_relative_error(a, b), 1e-8, 1e-12);
  const std::vector<double> c = {2.0}, d = {1.0};
  EXPECT_DOUBLE_EQ(max_relative_error(c, d), 0.5);
}
