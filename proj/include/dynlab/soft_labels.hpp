#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/tensor.hpp"

namespace dynlab {

// Row tolerance for "is a probability distribution".
inline constexpr double kRowSumTolerance = 1e-9;

inline bool is_distribution(std::span<const double> row, double tol = kRowSumTolerance) {
  double total = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

// Per-instance probability rows p_i over c classes. Every row is validated on
// construction, so holding one means holding valid training targets.
class SoftLabelMatrix {
 public:
  SoftLabelMatrix() = default;

  explicit SoftLabelMatrix(Tensor rows) : rows_(std::move(rows)) {
    rows_.require_rank(2);
    for (std::size_t i = 0; i < rows_.rows(); ++i) {
      if (!is_distribution(rows_.row(i))) {
        throw ContractError("label row " + std::to_string(i) + " is not a probability distribution");
      }
    }
  }

  static SoftLabelMatrix one_hot(std::span<const int> targets, std::size_t classes) {
    if (targets.empty()) throw ArgumentError("one_hot: no targets");
    Tensor rows({targets.size(), classes});
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= classes) {
        throw IndexError("one_hot: target out of range");
      }
      rows(i, static_cast<std::size_t>(targets[i])) = 1.0;
    }
    return SoftLabelMatrix(std::move(rows));
  }

  std::size_t size() const { return rows_.empty() ? 0 : rows_.rows(); }
  std::size_t classes() const { return rows_.empty() ? 0 : rows_.cols(); }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }
  const Tensor& tensor() const noexcept { return rows_; }

  SoftLabelMatrix gather(std::span<const std::size_t> ids) const {
    return SoftLabelMatrix(gather_rows(rows_, ids));
  }

 private:
  Tensor rows_;
};

}  // namespace dynlab
