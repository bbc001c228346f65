#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace dynlab;
using dynlab::testing::tiny_blobs;
using dynlab::testing::tiny_loop;

TEST(Baselines, SmoothingZeroEqualsOneHot) {
  const auto data = tiny_blobs(1, 40, 0.2);
  Rng r1(1), r2(1);
  const auto a = train_onehot(make_mlp(2, {6}, 3, r1), data, tiny_loop(20));
  const auto b = train_label_smoothing(make_mlp(2, {6}, 3, r2), data, tiny_loop(20), 0.0);
  EXPECT_EQ(a.log.train_losses(), b.log.train_losses());
  EXPECT_EQ(b.log.method, "label_smoothing");
}

TEST(Baselines, ConfidencePenaltyZeroEqualsOneHot) {
  const auto data = tiny_blobs(2, 40);
  Rng r1(2), r2(2);
  const auto a = train_onehot(make_mlp(2, {6}, 3, r1), data, tiny_loop(20));
  const auto b = train_confidence_penalty(make_mlp(2, {6}, 3, r2), data, tiny_loop(20), 0.0);
  EXPECT_EQ(a.log.train_losses(), b.log.train_losses());
}

TEST(Baselines, SmoothingTargetMass) {
  const auto data = tiny_blobs(3, 40);
  Rng rng(3);
  const auto r = train_label_smoothing(make_mlp(2, {6}, 3, rng), data, tiny_loop(10), 0.1);
  for (double m : r.log.last_evaluated()->target_mass) EXPECT_NEAR(m, 0.9, 1e-15);
}

TEST(Baselines, StaticOneHotRowsEqualOneHot) {
  const auto data = tiny_blobs(4, 40);
  Rng r1(4), r2(4);
  const auto rows = SoftLabelMatrix::one_hot(data.targets, data.classes);
  const auto a = train_onehot(make_mlp(2, {6}, 3, r1), data, tiny_loop(20));
  const auto b = train_static_labels(make_mlp(2, {6}, 3, r2), data, rows, tiny_loop(20));
  EXPECT_EQ(a.log.train_losses(), b.log.train_losses());
}

TEST(Baselines, PairedRunsSeeSameBatches) {
  // Same seed: identical init and first batch, so step-0 losses differ only
  // through the label rows.
  const auto data = tiny_blobs(5, 40);
  Rng r1(5), r2(5);
  const auto a = train_onehot(make_mlp(2, {6}, 3, r1), data, tiny_loop(1));
  const auto b = train_label_smoothing(make_mlp(2, {6}, 3, r2), data, tiny_loop(1), 0.2);
  EXPECT_NE(a.log.records[0].train_loss, b.log.records[0].train_loss);
  Rng r3(5);
  const auto c = train_onehot(make_mlp(2, {6}, 3, r3), data, tiny_loop(1));
  EXPECT_EQ(a.log.records[0].train_loss, c.log.records[0].train_loss);
}

TEST(Baselines, Validation) {
  const auto data = tiny_blobs();
  Rng rng(6);
  const auto net = make_mlp(2, {4}, 3, rng);
  EXPECT_THROW(train_label_smoothing(net, data, tiny_loop(1), 1.0), ArgumentError);
  EXPECT_THROW(train_label_smoothing(net, data, tiny_loop(1), -0.1), ArgumentError);
  EXPECT_THROW(train_confidence_penalty(net, data, tiny_loop(1), -1.0), ArgumentError);
  const std::vector<int> y = {0};
  EXPECT_THROW(train_static_labels(net, data, SoftLabelMatrix::one_hot(y, 3), tiny_loop(1)), ContractError);
}
