#pragma once

// Dataset bundles, synthetic generators, stratified splits, label noise and
// k-fold plans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/rng.hpp"
#include "dynlab/soft_labels.hpp"
#include "dynlab/tensor.hpp"

namespace dynlab {

enum class Split : std::uint8_t { train = 0, meta = 1, validation = 2, test = 3 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::meta: return "meta";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

struct ImageGeometry {
  std::size_t channels = 1, height = 1, width = 1;
  friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

struct DatasetBundle {
  Tensor features;  // [N x d]; images are flattened channel-major
  std::vector<int> targets;
  std::optional<std::vector<int>> true_targets;
  std::vector<Split> splits;
  std::size_t classes = 0;
  std::optional<ImageGeometry> geometry;
  // Per-channel standardization constants (empty until standardize()).
  std::vector<double> channel_mean, channel_std;
  // Fraction of train targets that differ from true_targets after noise.
  double realized_flip_fraction = 0.0;

  std::size_t size() const { return targets.size(); }
  std::size_t dim() const { return features.cols(); }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == s) ids.push_back(i);
    }
    return ids;
  }

  // Held-out instances: the meta set doubles as the validation set.
  std::vector<std::size_t> heldout() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == Split::meta || splits[i] == Split::validation) ids.push_back(i);
    }
    return ids;
  }

  Tensor gather(std::span<const std::size_t> ids) const { return gather_rows(features, ids); }

  std::vector<int> gather_targets(std::span<const std::size_t> ids) const {
    std::vector<int> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(targets.at(i));
    return out;
  }

  const std::vector<int>& clean_targets() const {
    return true_targets ? *true_targets : targets;
  }

  void validate() const {
    if (targets.empty()) throw ArgumentError("dataset bundle is empty");
    if (features.rows() != targets.size() || splits.size() != targets.size()) {
      throw DimensionError("dataset bundle: features, targets and splits disagree in length");
    }
    if (true_targets && true_targets->size() != targets.size()) {
      throw DimensionError("dataset bundle: true_targets length mismatch");
    }
    for (int y : targets) {
      if (y < 0 || static_cast<std::size_t>(y) >= classes) throw IndexError("target out of range");
    }
  }
};

// Concatenate two bundles with the same feature width and class count. The
// second bundle's instances keep their own split tags.
inline DatasetBundle concat(const DatasetBundle& a, const DatasetBundle& b) {
  if (a.dim() != b.dim() || a.classes != b.classes) {
    throw DimensionError("concat: bundles differ in width or class count");
  }
  DatasetBundle out = a;
  std::vector<double> data(a.features.values());
  data.insert(data.end(), b.features.values().begin(), b.features.values().end());
  out.features = Tensor({a.size() + b.size(), a.dim()}, std::move(data));
  out.targets.insert(out.targets.end(), b.targets.begin(), b.targets.end());
  out.splits.insert(out.splits.end(), b.splits.begin(), b.splits.end());
  if (a.true_targets || b.true_targets) {
    std::vector<int> t = a.clean_targets();
    const auto& tb = b.clean_targets();
    t.insert(t.end(), tb.begin(), tb.end());
    out.true_targets = std::move(t);
  }
  return out;
}

inline DatasetBundle retag(DatasetBundle bundle, Split s) {
  std::fill(bundle.splits.begin(), bundle.splits.end(), s);
  return bundle;
}

// Isotropic unit-variance Gaussian blobs. Class centres sit on a circle in
// the first two coordinates, spaced so adjacent centres are `separation`
// apart. Instances are interleaved by class and all tagged train.
inline DatasetBundle gen_blobs(Rng& rng, std::size_t n_per_class, std::size_t c, std::size_t d,
                               double separation) {
  if (c < 2) throw ArgumentError("gen_blobs: need at least two classes");
  if (n_per_class == 0) throw ArgumentError("gen_blobs: n_per_class must be positive");
  if (d < 2) throw ArgumentError("gen_blobs: need at least two dimensions");
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(c)));
  DatasetBundle b;
  b.classes = c;
  b.features = Tensor({n_per_class * c, d});
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t r = b.targets.size();
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(c);
      for (std::size_t j = 0; j < d; ++j) b.features(r, j) = rng.normal();
      b.features(r, 0) += radius * std::cos(angle);
      b.features(r, 1) += radius * std::sin(angle);
      b.targets.push_back(static_cast<int>(k));
    }
  }
  b.splits.assign(b.targets.size(), Split::train);
  return b;
}

inline std::vector<std::vector<double>> blob_centres(std::size_t c, std::size_t d,
                                                     double separation) {
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(c)));
  std::vector<std::vector<double>> centres(c, std::vector<double>(d, 0.0));
  for (std::size_t k = 0; k < c; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(c);
    centres[k][0] = radius * std::cos(angle);
    centres[k][1] = radius * std::sin(angle);
  }
  return centres;
}

// Two interleaved spiral arms (classes 0 and 1), n points per arm.
inline DatasetBundle gen_spirals(Rng& rng, std::size_t n, double turns, double noise = 0.05) {
  if (n == 0) throw ArgumentError("gen_spirals: n must be positive");
  if (!(turns > 0.0)) throw ArgumentError("gen_spirals: turns must be positive");
  DatasetBundle b;
  b.classes = 2;
  b.features = Tensor({2 * n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t r = b.targets.size();
      const double t = std::sqrt(rng.uniform());
      const double angle = t * turns * 2.0 * std::numbers::pi + std::numbers::pi * static_cast<double>(k);
      b.features(r, 0) = t * std::cos(angle) + noise * rng.normal();
      b.features(r, 1) = t * std::sin(angle) + noise * rng.normal();
      b.targets.push_back(static_cast<int>(k));
    }
  }
  b.splits.assign(b.targets.size(), Split::train);
  return b;
}

// Stratified hold-out: from the instances currently tagged train, move
// round(frac * n_k) of each class k to `heldout_tag`.
inline DatasetBundle split(DatasetBundle bundle, double holdout_frac, Rng& rng,
                           Split heldout_tag = Split::meta) {
  if (!(holdout_frac > 0.0 && holdout_frac < 1.0)) {
    throw ArgumentError("split: holdout fraction must lie in (0, 1)");
  }
  bundle.validate();
  std::vector<std::vector<std::size_t>> per_class(bundle.classes);
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    if (bundle.splits[i] == Split::train) {
      per_class[static_cast<std::size_t>(bundle.targets[i])].push_back(i);
    }
  }
  for (std::size_t k = 0; k < bundle.classes; ++k) {
    auto& ids = per_class[k];
    if (ids.size() < 2) {
      throw ArgumentError("split: class " + std::to_string(k) +
                          " has fewer than 2 instances, cannot stratify");
    }
    const auto take = static_cast<std::size_t>(std::llround(holdout_frac * static_cast<double>(ids.size())));
    const auto order = rng_permutation(rng, ids.size());
    for (std::size_t j = 0; j < take; ++j) bundle.splits[ids[order[j]]] = heldout_tag;
  }
  return bundle;
}

// Each train target is replaced, with probability p, by a class drawn
// uniformly from all c classes (the draw may repeat the original).
inline DatasetBundle inject_noise(DatasetBundle bundle, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("inject_noise: p must lie in [0, 1]");
  bundle.validate();
  if (!bundle.true_targets) bundle.true_targets = bundle.targets;
  std::size_t train = 0, flipped = 0;
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    if (bundle.splits[i] != Split::train) continue;
    ++train;
    if (rng.uniform() < p) {
      bundle.targets[i] = static_cast<int>(rng.below(bundle.classes));
    }
    if (bundle.targets[i] != (*bundle.true_targets)[i]) ++flipped;
  }
  bundle.realized_flip_fraction =
      train ? static_cast<double>(flipped) / static_cast<double>(train) : 0.0;
  return bundle;
}

// Per-channel standardization with constants from the train split.
inline DatasetBundle standardize(DatasetBundle bundle) {
  bundle.validate();
  const ImageGeometry g = bundle.geometry.value_or(ImageGeometry{1, 1, bundle.dim()});
  const std::size_t plane = g.height * g.width;
  if (g.channels * plane != bundle.dim()) throw DimensionError("standardize: geometry mismatch");
  bundle.channel_mean.assign(g.channels, 0.0);
  bundle.channel_std.assign(g.channels, 0.0);
  const auto train = bundle.indices(Split::train);
  if (train.empty()) throw ArgumentError("standardize: no train instances");
  const double count = static_cast<double>(train.size() * plane);
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    double s = 0.0, ss = 0.0;
    for (auto i : train) {
      auto row = bundle.features.row(i);
      for (std::size_t j = 0; j < plane; ++j) {
        const double v = row[ch * plane + j];
        s += v;
        ss += v * v;
      }
    }
    const double mean = s / count;
    const double var = std::max(ss / count - mean * mean, 0.0);
    bundle.channel_mean[ch] = mean;
    bundle.channel_std[ch] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    auto row = bundle.features.row(i);
    for (std::size_t ch = 0; ch < g.channels; ++ch) {
      for (std::size_t j = 0; j < plane; ++j) {
        auto& v = row[ch * plane + j];
        v = (v - bundle.channel_mean[ch]) / bundle.channel_std[ch];
      }
    }
  }
  return bundle;
}

// Stratified subset of at most `per_class` instances per class (first in a
// seeded shuffle), preserving original order.
inline DatasetBundle subset_per_class(const DatasetBundle& bundle, std::size_t per_class, Rng& rng) {
  bundle.validate();
  std::vector<std::size_t> count(bundle.classes, 0);
  std::vector<bool> keep(bundle.size(), false);
  for (auto i : rng_permutation(rng, bundle.size())) {
    auto& n = count[static_cast<std::size_t>(bundle.targets[i])];
    if (n < per_class) {
      keep[i] = true;
      ++n;
    }
  }
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) ids.push_back(i);
  }
  DatasetBundle out = bundle;
  out.features = bundle.gather(ids);
  out.targets = bundle.gather_targets(ids);
  out.splits.clear();
  for (auto i : ids) out.splits.push_back(bundle.splits[i]);
  if (bundle.true_targets) {
    std::vector<int> t;
    for (auto i : ids) t.push_back((*bundle.true_targets)[i]);
    out.true_targets = std::move(t);
  }
  return out;
}

// Folds over the train split --------------------------------------------------

struct FoldPlan {
  std::size_t k = 5;
  std::vector<int> assignment;  // per instance: fold index, or -1 if not train

  std::vector<std::size_t> members(std::size_t fold) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] == static_cast<int>(fold)) ids.push_back(i);
    }
    return ids;
  }
};

inline FoldPlan make_folds(const DatasetBundle& bundle, std::size_t k, Rng& rng) {
  if (k < 2) throw ArgumentError("make_folds: k must be at least 2");
  const auto train = bundle.indices(Split::train);
  if (train.size() < k) throw ArgumentError("make_folds: fewer train instances than folds");
  FoldPlan plan{k, std::vector<int>(bundle.size(), -1)};
  const auto order = rng_permutation(rng, train.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    plan.assignment[train[order[j]]] = static_cast<int>(j % k);
  }
  return plan;
}

// The bundle seen by one fold: the fold's members become the meta set, the
// rest of the train split stays train, and the original held-out data is
// kept aside as validation.
inline DatasetBundle fold_bundle(DatasetBundle bundle, const FoldPlan& plan, std::size_t fold) {
  if (fold >= plan.k) throw IndexError("fold_bundle: fold out of range");
  if (plan.assignment.size() != bundle.size()) throw DimensionError("fold_bundle: plan/bundle mismatch");
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    if (bundle.splits[i] == Split::meta) bundle.splits[i] = Split::validation;
    if (plan.assignment[i] == static_cast<int>(fold)) bundle.splits[i] = Split::meta;
  }
  return bundle;
}

// Mean of realized label rows across folds, renormalized per row. With masks,
// row i averages only over folds whose mask marks i; rows no fold covers take
// the plain mean over all folds.
inline SoftLabelMatrix average_fold_labels(const std::vector<SoftLabelMatrix>& folds,
                                           const std::vector<std::vector<bool>>& masks = {}) {
  if (folds.empty()) throw ArgumentError("average_fold_labels: no folds");
  const std::size_t n = folds.front().size(), c = folds.front().classes();
  for (const auto& f : folds) {
    if (f.size() != n || f.classes() != c) throw DimensionError("average_fold_labels: shape mismatch");
  }
  if (!masks.empty()) {
    if (masks.size() != folds.size()) throw DimensionError("average_fold_labels: one mask per fold");
    for (const auto& m : masks) {
      if (m.size() != n) throw DimensionError("average_fold_labels: mask length mismatch");
    }
  }
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.row(i);
    std::size_t used = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (!masks.empty() && !masks[f][i]) continue;
      auto src = folds[f].row(i);
      for (std::size_t k = 0; k < c; ++k) row[k] += src[k];
      ++used;
    }
    if (used == 0) {
      for (const auto& f : folds) {
        auto src = f.row(i);
        for (std::size_t k = 0; k < c; ++k) row[k] += src[k];
      }
    }
    double total = 0.0;
    for (double v : row) total += v;
    for (auto& v : row) v /= total;
  }
  return SoftLabelMatrix(std::move(out));
}

}  // namespace dynlab
