#pragma once

// Label-correction metrics and the entropy curriculum for noisy annotations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/loss.hpp"
#include "dynlab/soft_labels.hpp"

namespace dynlab {

struct CorrectionReport {
  std::size_t step = 0;
  double frac_corrected = 0.0;  // noisy instances whose label argmax is the true class
  double top1_noise = 0.0;      // instances whose label argmax is not the true class
  std::vector<double> topk_acc;  // topk_acc[k-1]: true class within the top k entries
  double mean_entropy_noisy = 0.0;
  double mean_entropy_clean = 0.0;
  std::size_t noisy_count = 0;

  double topk(std::size_t k) const {
    if (k == 0 || topk_acc.empty()) throw ArgumentError("topk: k must be positive");
    return topk_acc[std::min(k, topk_acc.size()) - 1];
  }
};

// Zero-based rank of class t in row p. Ties go to the lower class index.
inline std::size_t class_rank(std::span<const double> p, std::size_t t) {
  std::size_t rank = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > p[t] || (p[k] == p[t] && k < t)) ++rank;
  }
  return rank;
}

// Metrics over N label rows. `targets` are the (possibly corrupted)
// annotations, `true_targets` the clean classes and `noisy_mask` marks the
// instances whose annotation was corrupted.
inline CorrectionReport correction_report(const SoftLabelMatrix& labels, std::span<const int> targets,
                                          std::optional<std::span<const int>> true_targets,
                                          const std::vector<bool>& noisy_mask,
                                          std::size_t step = 0) {
  if (!true_targets) throw ContractError("correction_report: true targets are required");
  const std::size_t n = labels.size(), c = labels.classes();
  if (targets.size() != n || true_targets->size() != n || noisy_mask.size() != n) {
    throw DimensionError("correction_report: all arrays must have one entry per label row");
  }
  CorrectionReport rep;
  rep.step = step;
  rep.topk_acc.assign(c, 0.0);
  std::size_t noisy = 0, corrected = 0, wrong = 0, clean = 0;
  double h_noisy = 0.0, h_clean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = labels.row(i);
    const auto truth = static_cast<std::size_t>((*true_targets)[i]);
    if (truth >= c) throw IndexError("correction_report: true target out of range");
    const std::size_t rank = class_rank(row, truth);
    for (std::size_t k = rank; k < c; ++k) rep.topk_acc[k] += 1.0;
    if (rank != 0) ++wrong;
    const double h = entropy(row);
    if (noisy_mask[i]) {
      ++noisy;
      if (rank == 0) ++corrected;
      h_noisy += h;
    } else {
      ++clean;
      h_clean += h;
    }
  }
  const double dn = static_cast<double>(n);
  for (auto& v : rep.topk_acc) v /= dn;
  rep.top1_noise = static_cast<double>(wrong) / dn;
  rep.noisy_count = noisy;
  rep.frac_corrected = noisy ? static_cast<double>(corrected) / static_cast<double>(noisy) : 0.0;
  rep.mean_entropy_noisy = noisy ? h_noisy / static_cast<double>(noisy) : 0.0;
  rep.mean_entropy_clean = clean ? h_clean / static_cast<double>(clean) : 0.0;
  return rep;
}

// w_i = 1 - H(p_i) / log c: one for a one-hot row, zero for a uniform row.
inline std::vector<double> entropy_weights(const SoftLabelMatrix& labels) {
  const std::size_t c = labels.classes();
  if (c < 2) throw ArgumentError("entropy_weights: need at least two classes");
  const double hmax = std::log(static_cast<double>(c));
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::clamp(1.0 - entropy(labels.row(i)) / hmax, 0.0, 1.0);
  }
  return w;
}

}  // namespace dynlab
