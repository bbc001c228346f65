#pragma once

// Distillation from teacher predictions or from converged learned labels,
// with temperature scaling, temperature search and cross-architecture label
// transfer. The student loss is plain CE against the tempered targets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "dynlab/baselines.hpp"
#include "dynlab/dataset.hpp"
#include "dynlab/errors.hpp"
#include "dynlab/network.hpp"
#include "dynlab/soft_labels.hpp"
#include "dynlab/training.hpp"

namespace dynlab {

enum class DistillKind { teacher_logits, converged_labels };

struct DistillSource {
  DistillKind kind = DistillKind::converged_labels;
  Tensor payload;                      // [N x c] logits or probability rows
  std::optional<double> temperature;   // absent: no scaling

  static DistillSource from_teacher(const Network& teacher, const DatasetBundle& data,
                                    std::optional<double> t = std::nullopt) {
    return {DistillKind::teacher_logits, forward(teacher, data.features), t};
  }
  static DistillSource from_labels(const SoftLabelMatrix& labels,
                                   std::optional<double> t = std::nullopt) {
    return {DistillKind::converged_labels, labels.tensor(), t};
  }
};

inline constexpr double kTemperEpsilon = 1e-12;

// teacher_logits: softmax(z / T). converged_labels: softmax(log(p + eps) / T),
// which is the identity at T = 1.
inline SoftLabelMatrix temper(const DistillSource& source, double t) {
  if (!(t > 0.0)) throw ArgumentError("temper: temperature must be positive");
  const Tensor& src = source.payload;
  src.require_rank(2);
  if (source.kind == DistillKind::converged_labels) {
    if (t == 1.0) return SoftLabelMatrix(src);
    Tensor scaled(src.shape());
    for (std::size_t j = 0; j < src.size(); ++j) scaled[j] = std::log(src[j] + kTemperEpsilon) / t;
    return SoftLabelMatrix(softmax_rows(scaled));
  }
  return SoftLabelMatrix(softmax_rows(scale(src, 1.0 / t)));
}

// Targets implied by the source's own temperature setting.
inline SoftLabelMatrix source_targets(const DistillSource& source) {
  if (source.temperature) return temper(source, *source.temperature);
  if (source.kind == DistillKind::teacher_logits) return SoftLabelMatrix(softmax_rows(source.payload));
  return SoftLabelMatrix(source.payload);
}

inline TrainResult train_student(Network student, const DatasetBundle& data,
                                 const DistillSource& source, const LoopConfig& cfg) {
  if (source.payload.rows() != data.size()) {
    throw ContractError("distillation source covers " + std::to_string(source.payload.rows()) +
                        " instances, dataset has " + std::to_string(data.size()));
  }
  const auto targets = source_targets(source);
  return train_static_labels(std::move(student), data, targets, cfg,
                             source.kind == DistillKind::teacher_logits ? "distill_teacher"
                                                                        : "distill_labels");
}

// 0.25, 0.5, ..., 10.
inline std::vector<double> default_temperature_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 40; ++i) grid.push_back(0.25 * i);
  return grid;
}

struct TemperaturePoint {
  double temperature = 0.0;
  double validation_acc = 0.0;
  double test_acc = 0.0;
};

struct TemperatureSearch {
  double best = 0.0;
  std::vector<TemperaturePoint> curve;  // ascending temperature
};

// Trains a fresh student per candidate (same seed each time) and picks the
// temperature with the best held-out accuracy; ties go to the smaller T.
inline TemperatureSearch search_temperature(const DistillSource& source, const DatasetBundle& data,
                                            std::vector<double> grid,
                                            const std::function<Network()>& make_student,
                                            const LoopConfig& cfg) {
  if (grid.empty()) throw ArgumentError("search_temperature: empty grid");
  for (double t : grid) {
    if (!(t > 0.0)) throw ArgumentError("search_temperature: temperatures must be positive");
  }
  std::sort(grid.begin(), grid.end());
  TemperatureSearch out;
  double best_acc = -1.0;
  const auto held = data.heldout();
  const auto test = data.indices(Split::test);
  for (double t : grid) {
    DistillSource s = source;
    s.temperature = t;
    const auto trained = train_student(make_student(), data, s, cfg);
    TemperaturePoint pt{t, evaluate_accuracy(trained.net, data, held),
                        evaluate_accuracy(trained.net, data, test)};
    if (pt.validation_acc > best_acc) {
      best_acc = pt.validation_acc;
      out.best = t;
    }
    out.curve.push_back(pt);
  }
  return out;
}

// Train another architecture on labels learned elsewhere.
inline TrainResult transfer_labels(const SoftLabelMatrix& labels, Network arch_b,
                                   const DatasetBundle& data, const LoopConfig& cfg,
                                   std::optional<double> temperature = std::nullopt) {
  if (labels.size() != data.size()) {
    throw ContractError("transfer_labels: label matrix has " + std::to_string(labels.size()) +
                        " rows, dataset has " + std::to_string(data.size()));
  }
  auto result = train_student(std::move(arch_b), data, DistillSource::from_labels(labels, temperature), cfg);
  result.log.method = "transfer";
  return result;
}

}  // namespace dynlab
