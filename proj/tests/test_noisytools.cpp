#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace dynlab;

namespace {
struct Case {
  std::vector<int> noisy, truth;
  std::vector<bool> mask;
};

Case make_case(Rng& rng, std::size_t n, std::size_t c) {
  Case k;
  k.truth = dynlab::testing::random_targets(rng, n, c);
  k.noisy = k.truth;
  for (std::size_t i = 0; i < n; i += 3) k.noisy[i] = static_cast<int>((k.truth[i] + 1) % static_cast<int>(c));
  for (std::size_t i = 0; i < n; ++i) k.mask.push_back(k.noisy[i] != k.truth[i]);
  return k;
}
}  // namespace

TEST(CorrectionReport, TrueOneHotLabelsCorrectEverything) {
  Rng rng(1);
  const auto k = make_case(rng, 30, 4);
  const auto rep = correction_report(SoftLabelMatrix::one_hot(k.truth, 4), k.noisy,
                                     std::span<const int>(k.truth), k.mask);
  EXPECT_EQ(rep.frac_corrected, 1.0);
  EXPECT_EQ(rep.top1_noise, 0.0);
  EXPECT_EQ(rep.noisy_count, 10u);
}

TEST(CorrectionReport, NoisyOneHotCorrectsNothing) {
  Rng rng(2);
  const auto k = make_case(rng, 30, 4);
  const auto rep = correction_report(SoftLabelMatrix::one_hot(k.noisy, 4), k.noisy,
                                     std::span<const int>(k.truth), k.mask);
  EXPECT_EQ(rep.frac_corrected, 0.0);
  EXPECT_NEAR(rep.top1_noise, 10.0 / 30.0, 1e-15);
}

// With the ascending-index tie-break, a uniform row ranks class t at t, so
// the true class is in the top 5 of 10 exactly when t < 5.
TEST(CorrectionReport, UniformLabelsTop5IsHalfInExpectation) {
  std::vector<int> truth;
  for (int t = 0; t < 10; ++t) truth.push_back(t);
  const std::vector<bool> mask(10, false);
  const SoftLabelMatrix uniform(Tensor({10, 10}, 0.1));
  const auto rep = correction_report(uniform, truth, std::span<const int>(truth), mask);
  EXPECT_EQ(rep.topk(5), 0.5);
  EXPECT_EQ(rep.topk(10), 1.0);
  EXPECT_EQ(rep.topk(1), 0.1);
  EXPECT_EQ(rep.topk(50), 1.0);
}

TEST(CorrectionReport, InvariantsOnRandomLabels) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto k = make_case(rng, 40, 6);
    const auto labels = dynlab::testing::random_labels(rng, 40, 6);
    const auto rep = correction_report(labels, k.noisy, std::span<const int>(k.truth), k.mask, 5);
    EXPECT_GE(rep.frac_corrected, 0.0);
    EXPECT_LE(rep.frac_corrected, 1.0);
    EXPECT_GE(rep.top1_noise, 0.0);
    EXPECT_LE(rep.top1_noise, 1.0);
    for (std::size_t j = 1; j < rep.topk_acc.size(); ++j) EXPECT_GE(rep.topk_acc[j], rep.topk_acc[j - 1]);
    EXPECT_NEAR(rep.topk(1) + rep.top1_noise, 1.0, 1e-12);
    std::size_t still_wrong = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      if (k.mask[i] && argmax(labels.row(i)) != static_cast<std::size_t>(k.truth[i])) ++still_wrong;
    }
    EXPECT_NEAR(rep.frac_corrected + static_cast<double>(still_wrong) / static_cast<double>(rep.noisy_count),
                1.0, 1e-12);
    const auto again = correction_report(labels, k.noisy, std::span<const int>(k.truth), k.mask, 5);
    EXPECT_EQ(again.topk_acc, rep.topk_acc);
    EXPECT_EQ(again.mean_entropy_noisy, rep.mean_entropy_noisy);
  }
}

TEST(CorrectionReport, RequiresTruth) {
  const std::vector<int> y = {0};
  const std::vector<bool> mask = {false};
  EXPECT_THROW(correction_report(SoftLabelMatrix::one_hot(y, 2), y, std::nullopt, mask), ContractError);
}

TEST(ClassRank, TiesByAscendingIndex) {
  const std::vector<double> p = {0.3, 0.3, 0.4};
  EXPECT_EQ(class_rank(p, 2), 0u);
  EXPECT_EQ(class_rank(p, 0), 1u);
  EXPECT_EQ(class_rank(p, 1), 2u);
}

TEST(EntropyWeights, OneHotAndUniform) {
  const std::vector<int> y = {1};
  EXPECT_EQ(entropy_weights(SoftLabelMatrix::one_hot(y, 3))[0], 1.0);
  EXPECT_NEAR(entropy_weights(SoftLabelMatrix(Tensor({1, 5}, 0.2)))[0], 0.0, 1e-15);
}

TEST(EntropyWeights, BinaryHandComputed) {
  const double h = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  EXPECT_NEAR(h, 0.3251, 1e-4);
  const double w = entropy_weights(SoftLabelMatrix(Tensor::matrix({{0.9, 0.1}})))[0];
  EXPECT_NEAR(w, 1.0 - h / std::log(2.0), 1e-15);
  EXPECT_NEAR(w, 0.531, 1e-3);
}

TEST(EntropyWeights, PermutationInvariant) {
  const SoftLabelMatrix a(Tensor::matrix({{0.5, 0.3, 0.2}})), b(Tensor::matrix({{0.2, 0.5, 0.3}}));
  EXPECT_NEAR(entropy_weights(a)[0], entropy_weights(b)[0], 1e-15);
}
