#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace dynlab;
using dynlab::testing::central_diff;

namespace {
void expect_row(const SoftLabelMatrix& m, std::size_t i, const std::vector<double>& want, double tol) {
  const auto r = m.row(i);
  ASSERT_EQ(r.size(), want.size());
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(r[k], want[k], tol) << "k=" << k;
}
}  // namespace

TEST(RealizeClass, ZeroAlphaIsOneHot) {
  const std::vector<int> y = {2};
  expect_row(realize_class(ClassAlphas{std::vector<double>(5, 0.0)}, y), 0, {0, 0, 1, 0, 0}, 0.0);
}

TEST(RealizeClass, DirectFormula) {
  const std::vector<int> y = {0};
  expect_row(realize_class(ClassAlphas{std::vector<double>(5, 0.2)}, y), 0, {0.8, 0.05, 0.05, 0.05, 0.05},
             1e-15);
}

TEST(RealizeClass, AlphaOneBoundary) {
  const std::vector<int> y = {1};
  expect_row(realize_class(ClassAlphas{std::vector<double>(3, 1.0)}, y), 0, {0.5, 0, 0.5}, 0.0);
}

TEST(RealizeClass, UsesAlphaOfAnnotatedClass) {
  const std::vector<int> y = {0, 1};
  const auto m = realize_class(ClassAlphas{{0.0, 0.4}}, y);
  expect_row(m, 0, {1, 0}, 0.0);
  expect_row(m, 1, {0.4, 0.6}, 1e-15);
  const std::vector<int> bad = {2};
  EXPECT_THROW(realize_class(ClassAlphas{{0.0, 0.4}}, bad), IndexError);
}

TEST(RealizeInstance, EqualLogitsUniform) {
  InstanceLogits bank{Tensor({2, 4}, 3.0)};
  const std::vector<std::size_t> ids = {1};
  expect_row(realize_instance(bank, ids), 0, {0.25, 0.25, 0.25, 0.25}, 1e-15);
}

TEST(RealizeInstance, ShiftInvariant) {
  Rng rng(1);
  InstanceLogits a{rng_normal(rng, {3, 5})};
  InstanceLogits b = a;
  for (std::size_t k = 0; k < 5; ++k) b.z(1, k) += 7.5;
  const std::vector<std::size_t> ids = {1};
  const auto ra = realize_instance(a, ids), rb = realize_instance(b, ids);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(ra.row(0)[k], rb.row(0)[k], 1e-12);
}

TEST(InitInstance, TargetMassSolved) {
  const std::vector<int> y = {0};
  const std::vector<std::size_t> ids = {0};
  expect_row(realize_instance(init_instance(1, 3, y, 0.7), ids), 0, {0.7, 0.15, 0.15}, 1e-9);
  expect_row(realize_instance(init_instance(1, 4, y, 0.5), ids), 0, {0.5, 1.0 / 6, 1.0 / 6, 1.0 / 6}, 1e-9);
}

TEST(InitInstance, RejectsInitAtOrBelowUniform) {
  const std::vector<int> y = {0};
  EXPECT_THROW(init_instance(1, 2, y, 0.5), ArgumentError);
  EXPECT_THROW(init_instance(1, 3, y, 1.0), ArgumentError);
  EXPECT_THROW(init_instance(2, 3, y, 0.7), DimensionError);
}

TEST(InitClass, GridValue) {
  const auto bank = init_class(10, 0.9);
  for (double a : bank.alphas) EXPECT_NEAR(a, 0.1, 1e-15);
  const std::vector<int> y = {4};
  const auto m = realize_class(bank, y);
  const auto row = m.row(0);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(row[k], k == 4 ? 0.9 : 0.1 / 9.0, 1e-15);
}

TEST(InitClass, OneIsOneHotLimit) {
  const auto bank = init_class(4, 1.0);
  const std::vector<int> y = {3};
  expect_row(realize_class(bank, y), 0, {0, 0, 0, 1}, 0.0);
  EXPECT_THROW(init_class(4, 0.25), ArgumentError);
}

TEST(ApplyMetaUpdate, ZeroGradientNoChange) {
  const LabelBank bank = ClassAlphas{{0.1, 0.2}, 3.0};
  const std::vector<double> g = {0.0, 0.0};
  EXPECT_EQ(std::get<ClassAlphas>(apply_meta_update(bank, g)).alphas, (std::vector<double>{0.1, 0.2}));
}

TEST(ApplyMetaUpdate, ClampAtZero) {
  const std::vector<double> g = {0.2, 0.0};
  const auto out = apply_meta_update(ClassAlphas{{0.05, 0.5}, 1.0}, g);
  EXPECT_EQ(std::get<ClassAlphas>(out).alphas[0], 0.0);
}

TEST(ApplyMetaUpdate, PlainStep) {
  const std::vector<double> g = {-0.5};
  const auto out = apply_meta_update(ClassAlphas{{0.3}, 0.1}, g);
  EXPECT_NEAR(std::get<ClassAlphas>(out).alphas[0], 0.35, 1e-15);
}

TEST(ApplyMetaUpdate, InstanceUnprojectedAndLengthChecked) {
  InstanceLogits bank{Tensor({1, 2}, 0.0), 2.0};
  const std::vector<double> g = {1.0, -1.0};
  const auto out = std::get<InstanceLogits>(apply_meta_update(bank, g));
  EXPECT_EQ(out.z(0, 0), -2.0);
  EXPECT_EQ(out.z(0, 1), 2.0);
  const std::vector<double> bad = {1.0};
  EXPECT_THROW(apply_meta_update(bank, bad), DimensionError);
}

TEST(ChainToParams, ConstantRowGivesZeroClassGradient) {
  const ClassAlphas bank{{0.1, 0.2, 0.3}};
  const auto m = Tensor::matrix({{0.7, 0.7, 0.7}, {-2, -2, -2}});
  const std::vector<int> y = {0, 2};
  for (double g : chain_to_params(bank, m, {}, y)) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(ChainToParams, ConstantRowGivesZeroInstanceGradient) {
  Rng rng(2);
  const InstanceLogits bank{rng_normal(rng, {4, 3})};
  const auto m = Tensor::matrix({{1.5, 1.5, 1.5}});
  const std::vector<std::size_t> ids = {2};
  for (double g : chain_to_params(bank, m, ids, {})) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(ChainToParams, ClassModeMatchesFiniteDifferences) {
  Rng rng(3);
  const std::vector<int> y = {0, 2, 2, 1};
  const auto m = rng_normal(rng, {4, 3});
  const std::vector<double> alphas = {0.2, 0.4, 0.3};
  const auto g = chain_to_params(ClassAlphas{alphas}, m, {}, y);
  const auto fd = central_diff(
      [&](const std::vector<double>& a) {
        const auto p = realize_class(ClassAlphas{a}, y);
        return dot(p.tensor().values(), m.values());
      },
      alphas, 1e-6);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g[k], fd[k], 1e-8);
}

TEST(ChainToParams, InstanceModeMatchesFiniteDifferences) {
  Rng rng(4);
  const InstanceLogits bank{rng_normal(rng, {5, 3})};
  const std::vector<std::size_t> ids = {4, 1, 3};
  const auto m = rng_normal(rng, {3, 3});
  const auto g = chain_to_params(bank, m, ids, {});
  const auto fd = central_diff(
      [&](const std::vector<double>& z) {
        const auto p = realize_instance(InstanceLogits{Tensor({5, 3}, z)}, ids);
        return dot(p.tensor().values(), m.values());
      },
      bank.z.values(), 1e-6);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(g[j], fd[j], 1e-8);
}

TEST(ChainToParams, LinearInMeta) {
  Rng rng(5);
  const ClassAlphas cb{{0.1, 0.2, 0.3}};
  const InstanceLogits ib{rng_normal(rng, {3, 3})};
  const std::vector<int> y = {0, 1, 2};
  const std::vector<std::size_t> ids = {0, 1, 2};
  const auto a = rng_normal(rng, {3, 3}), b = rng_normal(rng, {3, 3});
  const auto comb = add(scale(a, 3.0), scale(b, -2.0));
  for (const LabelBank& bank : {LabelBank(cb), LabelBank(ib)}) {
    const auto ga = chain_to_params(bank, a, ids, y), gb = chain_to_params(bank, b, ids, y);
    const auto gc = chain_to_params(bank, comb, ids, y);
    for (std::size_t j = 0; j < gc.size(); ++j) EXPECT_NEAR(gc[j], 3 * ga[j] - 2 * gb[j], 1e-12);
  }
}

TEST(Realize, ClassTargetMassIdentityExact) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + rng.below(9);
    std::vector<double> alphas(c);
    for (auto& a : alphas) a = rng.uniform();
    const std::vector<int> y = {static_cast<int>(rng.below(c))};
    const auto m = realize_class(ClassAlphas{alphas}, y);
    const auto row = m.row(0);
    const auto yi = static_cast<std::size_t>(y[0]);
    const std::size_t off = yi == 0 ? 1 : 0;
    EXPECT_NEAR(row[yi] + static_cast<double>(c - 1) * row[off], 1.0, 1e-15);
  }
}
