#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace dynlab;

namespace {
constexpr int kTrials = 25;

void expect_simplex(const SoftLabelMatrix& m, double tol = 1e-12) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, tol);
  }
}

Network random_net(Rng& rng, std::size_t in, std::size_t c) {
  std::vector<std::size_t> hidden;
  const auto depth = rng.below(3);
  for (std::size_t d = 0; d < depth; ++d) hidden.push_back(2 + rng.below(6));
  return make_mlp(in, hidden, c, rng);
}
}  // namespace

TEST(Property, RealizedLabelsLieOnSimplex) {
  Rng rng(100);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 1 + rng.below(8), c = 2 + rng.below(8);
    const auto y = dynlab::testing::random_targets(rng, n, c);
    std::vector<double> alphas(c);
    for (auto& a : alphas) a = rng.uniform();
    expect_simplex(realize_class(ClassAlphas{alphas}, y), 1e-15);
    InstanceLogits bank{scale(rng_normal(rng, {n, c}), 30.0)};
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    expect_simplex(realize_instance(bank, ids));
  }
}

TEST(Property, ClassAlphasStayClampedUnderAnyUpdate) {
  Rng rng(101);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t c = 2 + rng.below(6);
    LabelBank bank = ClassAlphas{std::vector<double>(c, rng.uniform()), 10.0 * rng.uniform()};
    for (int step = 0; step < 10; ++step) {
      const auto g = rng_normal(rng, {c});
      bank = apply_meta_update(std::move(bank), scale(g, 5.0).values());
      for (double a : std::get<ClassAlphas>(bank).alphas) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
      }
    }
  }
}

TEST(Property, MetaGradientPathsAgreeOnRandomInstances) {
  Rng rng(102);
  for (int t = 0; t < 10; ++t) {
    const std::size_t in = 2 + rng.below(4), c = 2 + rng.below(3), n = 1 + rng.below(4), m = 1 + rng.below(4);
    const auto net = random_net(rng, in, c);
    const auto x = rng_normal(rng, {n, in}), mx = rng_normal(rng, {m, in});
    const auto labels = dynlab::testing::random_labels(rng, n, c);
    const auto my = dynlab::testing::random_targets(rng, m, c);
    const double lr = 0.05 + rng.uniform();
    const auto cf = meta_gradient(net, x, labels, mx, my, lr, GradPath::closed_form);
    const auto lb = meta_gradient(net, x, labels, mx, my, lr, GradPath::lookahead_backprop);
    const auto fd = meta_gradient(net, x, labels, mx, my, lr, GradPath::finite_difference);
    EXPECT_LE(max_relative_error(cf.per_class.values(), lb.per_class.values()), 1e-5) << "trial " << t;
    EXPECT_LE(max_relative_error(cf.per_class.values(), fd.per_class.values()), 1e-5) << "trial " << t;
  }
}

TEST(Property, NetworkGradientMatchesFiniteDifferences) {
  Rng rng(103);
  for (int t = 0; t < 8; ++t) {
    const std::size_t in = 2 + rng.below(4), c = 2 + rng.below(4), n = 1 + rng.below(5);
    auto net = random_net(rng, in, c);
    // Nonzero biases keep every ReLU away from its kink.
    net.set_params(scale(rng_normal(rng, {net.param_count()}), 0.5).values());
    const auto x = rng_normal(rng, {n, in});
    const auto labels = dynlab::testing::random_labels(rng, n, c);
    const auto cache = forward_cached(net, x);
    const auto g = backward(net, cache, ce_objective(cache.logits(), labels).dlogits);
    const auto fd = dynlab::testing::central_diff(
        [&](const std::vector<double>& p) {
          Network copy = net;
          copy.set_params(p);
          return loss_ce_soft(forward(copy, x), labels);
        },
        std::vector<double>(net.params().begin(), net.params().end()), 1e-5);
    EXPECT_LE(max_relative_error(g, fd, 1e-8), 1e-5) << "trial " << t;
  }
}

TEST(Property, JvpIsLinear) {
  Rng rng(104);
  for (int t = 0; t < kTrials; ++t) {
    const auto net = random_net(rng, 3, 3);
    const auto x = rng_normal(rng, {2, 3});
    const auto a = rng_normal(rng, {net.param_count()}), b = rng_normal(rng, {net.param_count()});
    const double alpha = rng.normal(), beta = rng.normal();
    const auto comb = add(scale(a, alpha), scale(b, beta));
    const auto ja = logits_jvp(net, x, a.values()), jb = logits_jvp(net, x, b.values());
    const auto jc = logits_jvp(net, x, comb.values());
    for (std::size_t j = 0; j < jc.size(); ++j) EXPECT_NEAR(jc[j], alpha * ja[j] + beta * jb[j], 1e-10);
  }
}

TEST(Property, NoiseInjectionOnlyFlipsTrainToOtherClasses) {
  Rng rng(105);
  for (int t = 0; t < 10; ++t) {
    auto data = dynlab::testing::tiny_blobs(200 + static_cast<std::uint64_t>(t), 30);
    const double p = rng.uniform();
    const auto noisy = inject_noise(data, p, rng);
    std::size_t flipped = 0;
    const auto train = data.indices(Split::train);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (noisy.targets[i] != data.targets[i]) {
        EXPECT_EQ(data.splits[i], Split::train);
        ++flipped;
      }
    }
    EXPECT_NEAR(noisy.realized_flip_fraction, static_cast<double>(flipped) / static_cast<double>(train.size()),
                1e-15);
  }
}

TEST(Property, SplitsPartitionAndAreStratified) {
  Rng rng(106);
  for (int t = 0; t < 10; ++t) {
    const std::size_t c = 2 + rng.below(5), per = 5 + rng.below(30);
    const auto b = split(gen_blobs(rng, per, c, 2, 3.0), 0.05 + 0.5 * rng.uniform(), rng);
    const auto tr = b.indices(Split::train), me = b.indices(Split::meta);
    EXPECT_EQ(tr.size() + me.size(), b.size());
    std::vector<std::size_t> held(c, 0);
    for (auto i : me) ++held[static_cast<std::size_t>(b.targets[i])];
    for (std::size_t k = 1; k < c; ++k) EXPECT_EQ(held[k], held[0]);
  }
}

TEST(Property, CheckpointAndExportRoundTrips) {
  Rng rng(107);
  for (int t = 0; t < 10; ++t) {
    const auto net = random_net(rng, 1 + rng.below(5), 2 + rng.below(5));
    const auto back = decode_checkpoint(encode_checkpoint(net));
    EXPECT_TRUE(std::equal(back.params().begin(), back.params().end(), net.params().begin()));
    const auto labels = dynlab::testing::random_labels(rng, 1 + rng.below(6), 2 + rng.below(6));
    const auto parsed = parse_label_export(render_label_export({"instance", 3, {}, labels}, "#"));
    EXPECT_EQ(parsed.rows.tensor(), labels.tensor());
  }
}

TEST(Property, ConfigHashInvariantToLineOrder) {
  std::vector<std::string> lines = {"[optim]", "lr = 0.05", "steps = 40", "momentum = 0.5"};
  const auto text = [&] {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s + "[data]\nclasses = 5\n";
  };
  const auto base = ExperimentConfig::parse(text()).hash;
  std::sort(lines.begin() + 1, lines.end());
  do {
    EXPECT_EQ(ExperimentConfig::parse(text()).hash, base);
  } while (std::next_permutation(lines.begin() + 1, lines.end()));
}

TEST(Property, TemperedTargetsOnSimplex) {
  Rng rng(108);
  for (int t = 0; t < kTrials; ++t) {
    const auto labels = dynlab::testing::random_labels(rng, 3, 2 + rng.below(6));
    const double temp = 0.05 + 20.0 * rng.uniform();
    expect_simplex(temper(DistillSource::from_labels(labels), temp));
    DistillSource logits{DistillKind::teacher_logits, scale(rng_normal(rng, {3, 4}), 10.0), std::nullopt};
    expect_simplex(temper(logits, temp));
  }
}

TEST(Property, CorrectionMetricsBounded) {
  Rng rng(109);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 5 + rng.below(20), c = 2 + rng.below(9);
    const auto truth = dynlab::testing::random_targets(rng, n, c);
    const auto noisy = dynlab::testing::random_targets(rng, n, c);
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = noisy[i] != truth[i];
    const auto rep = correction_report(dynlab::testing::random_labels(rng, n, c), noisy,
                                       std::span<const int>(truth), mask);
    for (double v : rep.topk_acc) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(rep.topk(c), 1.0);
  }
}

TEST(Property, MetaRunIsBitReproducible) {
  const auto data = dynlab::testing::tiny_blobs(110, 30, 0.3);
  MetaConfig cfg;
  cfg.loop = dynlab::testing::tiny_loop(15, 4);
  for (const LabelBank& bank : {LabelBank(init_class(3, 0.8, 20.0)),
                                LabelBank(init_instance(data.size(), 3, data.targets, 0.8, 20.0))}) {
    Rng r1(1), r2(1);
    const auto a = run_meta_training(cfg, data, make_mlp(2, {5}, 3, r1), bank);
    const auto b = run_meta_training(cfg, data, make_mlp(2, {5}, 3, r2), bank);
    EXPECT_EQ(trajectory_csv(a.log, "#"), trajectory_csv(b.log, "#"));
    EXPECT_EQ(realize_all(a.bank, data).tensor(), realize_all(b.bank, data).tensor());
  }
}
