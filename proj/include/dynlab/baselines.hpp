#pragma once

// Fixed-label reference trainers. All of them run through run_loop, the same
// scaffold the meta loop uses, so paired runs with one seed see identical
// train batches.

#include <cstddef>
#include <span>
#include <string>

#include "dynlab/dataset.hpp"
#include "dynlab/labelbank.hpp"
#include "dynlab/training.hpp"

namespace dynlab {

using TrainResult = LoopResult;

inline TrainResult train_onehot(Network net, const DatasetBundle& data, const LoopConfig& cfg) {
  LoopHooks hooks;
  hooks.method = "onehot";
  const std::size_t c = data.classes;
  hooks.labels = [c](std::span<const std::size_t>, std::span<const int> targets) {
    return SoftLabelMatrix::one_hot(targets, c);
  };
  return run_loop(std::move(net), data, cfg, hooks);
}

// Rows 1 - eps on the target and eps / (c - 1) elsewhere, throughout training.
inline TrainResult train_label_smoothing(Network net, const DatasetBundle& data,
                                         const LoopConfig& cfg, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ArgumentError("label smoothing: eps must lie in [0, 1)");
  const ClassAlphas fixed{std::vector<double>(data.classes, eps), 0.0};
  LoopHooks hooks;
  hooks.method = "label_smoothing";
  hooks.labels = [fixed](std::span<const std::size_t>, std::span<const int> targets) {
    return realize_class(fixed, targets);
  };
  return run_loop(std::move(net), data, cfg, hooks);
}

// One-hot CE minus beta times the entropy of the model's prediction.
inline TrainResult train_confidence_penalty(Network net, const DatasetBundle& data,
                                            const LoopConfig& cfg, double beta) {
  if (!(beta >= 0.0)) throw ArgumentError("confidence penalty: beta must be >= 0");
  LoopHooks hooks;
  hooks.method = "confidence_penalty";
  const std::size_t c = data.classes;
  hooks.labels = [c](std::span<const std::size_t>, std::span<const int> targets) {
    return SoftLabelMatrix::one_hot(targets, c);
  };
  hooks.confidence_beta = beta;
  return run_loop(std::move(net), data, cfg, hooks);
}

// CE against fixed rows, one per dataset instance (rows for non-train
// instances are ignored).
inline TrainResult train_static_labels(Network net, const DatasetBundle& data,
                                       const SoftLabelMatrix& labels, const LoopConfig& cfg,
                                       const std::string& method = "static_labels") {
  if (labels.size() != data.size()) {
    throw ContractError("static labels cover " + std::to_string(labels.size()) +
                        " instances, dataset has " + std::to_string(data.size()));
  }
  if (labels.classes() != data.classes) throw DimensionError("static labels: class count mismatch");
  LoopHooks hooks;
  hooks.method = method;
  hooks.labels = [&labels](std::span<const std::size_t> ids, std::span<const int>) {
    return labels.gather(ids);
  };
  return run_loop(std::move(net), data, cfg, hooks);
}

}  // namespace dynlab
