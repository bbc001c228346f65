#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace dynlab;
using dynlab::testing::tiny_blobs;
using dynlab::testing::tiny_loop;

TEST(Temper, DirectFormulaAtTwo) {
  const SoftLabelMatrix p(Tensor::matrix({{0.7, 0.2, 0.1}}));
  const auto tempered = temper(DistillSource::from_labels(p), 2.0);
  const auto out = tempered.row(0);
  const double a = std::sqrt(0.7 + kTemperEpsilon), b = std::sqrt(0.2 + kTemperEpsilon),
               c = std::sqrt(0.1 + kTemperEpsilon);
  const double z = a + b + c;
  EXPECT_NEAR(out[0], a / z, 1e-15);
  EXPECT_NEAR(out[1], b / z, 1e-15);
  EXPECT_NEAR(out[2], c / z, 1e-15);
}

TEST(Temper, OneIsIdentityForLabels) {
  Rng rng(1);
  const auto p = dynlab::testing::random_labels(rng, 4, 5);
  EXPECT_EQ(temper(DistillSource::from_labels(p), 1.0).tensor(), p.tensor());
}

TEST(Temper, HugeTemperatureIsUniform) {
  const SoftLabelMatrix p(Tensor::matrix({{0.7, 0.2, 0.1}}));
  const auto flat = temper(DistillSource::from_labels(p), 1e6);
  for (double v : flat.row(0)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-4);
  DistillSource logits{DistillKind::teacher_logits, Tensor::matrix({{5.0, -3.0, 0.0}}), std::nullopt};
  const auto flat_logits = temper(logits, 1e6);
  for (double v : flat_logits.row(0)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-4);
}

TEST(Temper, LogitsMatchScaledSoftmax) {
  DistillSource s{DistillKind::teacher_logits, Tensor::matrix({{2.0, 1.0, 0.0}}), std::nullopt};
  const auto tempered = temper(s, 4.0);
  const auto out = tempered.row(0);
  const double z = std::exp(0.5) + std::exp(0.25) + 1.0;
  EXPECT_NEAR(out[0], std::exp(0.5) / z, 1e-15);
  EXPECT_THROW(temper(s, 0.0), ArgumentError);
  EXPECT_THROW(temper(s, -1.0), ArgumentError);
}

TEST(Temper, LowerTemperatureSharpens) {
  const SoftLabelMatrix p(Tensor::matrix({{0.5, 0.3, 0.2}}));
  const auto src = DistillSource::from_labels(p);
  EXPECT_GT(temper(src, 0.5).row(0)[0], 0.5);
  EXPECT_LT(temper(src, 3.0).row(0)[0], 0.5);
}

TEST(SourceTargets, Defaults) {
  DistillSource s{DistillKind::teacher_logits, Tensor::matrix({{0.0, 0.0}}), std::nullopt};
  EXPECT_EQ(source_targets(s).row(0)[0], 0.5);
  const SoftLabelMatrix p(Tensor::matrix({{0.9, 0.1}}));
  EXPECT_EQ(source_targets(DistillSource::from_labels(p)).tensor(), p.tensor());
}

TEST(TemperatureGrid, FortyEntries) {
  const auto g = default_temperature_grid();
  ASSERT_EQ(g.size(), 40u);
  EXPECT_EQ(g.front(), 0.25);
  EXPECT_EQ(g.back(), 10.0);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
}

TEST(SearchTemperature, SingletonGridReturnsIt) {
  const auto data = tiny_blobs(2, 30);
  const auto labels = SoftLabelMatrix::one_hot(data.targets, 3);
  auto make = [] {
    Rng rng(3);
    return make_mlp(2, {4}, 3, rng);
  };
  const auto s = search_temperature(DistillSource::from_labels(labels), data, {2.5}, make, tiny_loop(10));
  EXPECT_EQ(s.best, 2.5);
  ASSERT_EQ(s.curve.size(), 1u);
  EXPECT_THROW(search_temperature(DistillSource::from_labels(labels), data, {}, make, tiny_loop(1)),
               ArgumentError);
  EXPECT_THROW(search_temperature(DistillSource::from_labels(labels), data, {1.0, 0.0}, make, tiny_loop(1)),
               ArgumentError);
}

TEST(SearchTemperature, CurveAscendingAndBestIsArgmax) {
  const auto data = tiny_blobs(4, 30, 0.3);
  Rng rng(5);
  const auto labels = dynlab::testing::random_labels(rng, data.size(), 3);
  auto make = [] {
    Rng r(6);
    return make_mlp(2, {4}, 3, r);
  };
  const auto s = search_temperature(DistillSource::from_labels(labels), data, {4.0, 0.5, 1.0}, make,
                                    tiny_loop(15));
  ASSERT_EQ(s.curve.size(), 3u);
  EXPECT_EQ(s.curve[0].temperature, 0.5);
  EXPECT_EQ(s.curve[2].temperature, 4.0);
  double best = -1.0, best_t = 0.0;
  for (const auto& p : s.curve) {
    if (p.validation_acc > best) best = p.validation_acc, best_t = p.temperature;
  }
  EXPECT_EQ(s.best, best_t);
}

TEST(TrainStudent, CoverageChecked) {
  const auto data = tiny_blobs();
  Rng rng(7);
  const auto short_labels = dynlab::testing::random_labels(rng, 3, 3);
  EXPECT_THROW(train_student(make_mlp(2, {4}, 3, rng), data, DistillSource::from_labels(short_labels),
                             tiny_loop(1)),
               ContractError);
  EXPECT_THROW(transfer_labels(short_labels, make_mlp(2, {4}, 3, rng), data, tiny_loop(1)), ContractError);
}

TEST(TransferLabels, EqualsTrainStudent) {
  const auto data = tiny_blobs(8, 30);
  Rng rng(8);
  const auto labels = dynlab::testing::random_labels(rng, data.size(), 3);
  Rng r1(9), r2(9);
  const auto a = transfer_labels(labels, make_mlp(2, {5, 4}, 3, r1), data, tiny_loop(15));
  const auto b = train_student(make_mlp(2, {5, 4}, 3, r2), data, DistillSource::from_labels(labels), tiny_loop(15));
  EXPECT_EQ(a.log.train_losses(), b.log.train_losses());
  EXPECT_EQ(a.log.method, "transfer");
  EXPECT_EQ(b.log.method, "distill_labels");
}

TEST(TrainStudent, TeacherAtTemperatureOneMatchesSoftmaxTargets) {
  const auto data = tiny_blobs(10, 30);
  Rng rng(10);
  const auto teacher = make_mlp(2, {6}, 3, rng);
  const auto src = DistillSource::from_teacher(teacher, data, 1.0);
  const auto direct = SoftLabelMatrix(softmax_rows(forward(teacher, data.features)));
  Rng r1(11), r2(11);
  const auto a = train_student(make_mlp(2, {4}, 3, r1), data, src, tiny_loop(10));
  const auto b = train_static_labels(make_mlp(2, {4}, 3, r2), data, direct, tiny_loop(10));
  EXPECT_EQ(a.log.train_losses(), b.log.train_losses());
}
