#pragma once

// Cross-entropy against soft label rows, with the two extensions the trainers
// need: optional per-instance weights and an entropy (confidence) penalty.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/network.hpp"
#include "dynlab/soft_labels.hpp"
#include "dynlab/tensor.hpp"

namespace dynlab {

struct BatchObjective {
  double loss = 0.0;
  Tensor dlogits;  // d loss / d logits
};

// Objective over raw label rows. Rows are NOT validated here; this is the
// entry point used by finite-difference oracles that perturb rows off the
// simplex. Per instance:
//   L_i = -sum_k p_ik log s_ik  -  beta * H(s_i)
// combined as sum_i w_i L_i / sum_i w_i (plain mean when weights are empty).
inline BatchObjective ce_objective_rows(const Tensor& logits, const Tensor& label_rows,
                                        std::span<const double> weights = {},
                                        double beta = 0.0) {
  logits.require_rank(2);
  if (label_rows.shape() != logits.shape()) {
    throw DimensionError("cross entropy: labels " + label_rows.shape_string() +
                         " do not match logits " + logits.shape_string());
  }
  const std::size_t n = logits.rows(), c = logits.cols();
  if (!weights.empty() && weights.size() != n) {
    throw DimensionError("cross entropy: weight count does not match batch");
  }
  double weight_sum = 0.0;
  if (weights.empty()) {
    weight_sum = static_cast<double>(n);
  } else {
    for (double w : weights) weight_sum += w;
  }
  const bool uniform = weights.empty() || weight_sum <= 0.0;
  if (uniform) weight_sum = static_cast<double>(n);

  BatchObjective obj{0.0, Tensor(logits.shape())};
  std::vector<double> logp(c), s(c);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    auto p = label_rows.row(i);
    const double lse = log_sum_exp(z);
    double li = 0.0, entropy = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      logp[k] = z[k] - lse;
      s[k] = std::exp(logp[k]);
      li -= p[k] * logp[k];
      entropy -= s[k] * logp[k];
    }
    li -= beta * entropy;
    const double wi = (uniform ? 1.0 : weights[i]) / weight_sum;
    obj.loss += wi * li;
    auto d = obj.dlogits.row(i);
    double psum = 0.0;
    for (std::size_t k = 0; k < c; ++k) psum += p[k];
    for (std::size_t k = 0; k < c; ++k) {
      // d/dz_k of -sum_j p_j log s_j is s_k * sum_j p_j - p_k
      double dk = s[k] * psum - p[k];
      if (beta != 0.0) dk += beta * s[k] * (logp[k] + entropy);
      d[k] = wi * dk;
    }
  }
  return obj;
}

inline BatchObjective ce_objective(const Tensor& logits, const SoftLabelMatrix& labels,
                                   std::span<const double> weights = {}, double beta = 0.0) {
  return ce_objective_rows(logits, labels.tensor(), weights, beta);
}

// Mean over the batch of -sum_k p_k log softmax(logits)_k.
inline double loss_ce_soft(const Tensor& logits, const SoftLabelMatrix& labels) {
  return ce_objective(logits, labels).loss;
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

// Exact reverse-mode gradient of the mean batch cross entropy.
inline std::vector<double> grad_params(const Network& net, const Tensor& x,
                                       const SoftLabelMatrix& labels) {
  const auto cache = forward_cached(net, x);
  return backward(net, cache, ce_objective(cache.logits(), labels).dlogits);
}

inline double accuracy(const Tensor& logits, std::span<const int> targets) {
  if (targets.size() != logits.rows()) throw DimensionError("accuracy: target count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (static_cast<int>(argmax(logits.row(i))) == targets[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

}  // namespace dynlab
