#pragma once

// Dense row-major float64 tensors and the handful of kernels the rest of the
// library needs. No broadcasting beyond scalar-with-tensor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dynlab/errors.hpp"

namespace dynlab {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    check_shape();
    data_.assign(extent_product(shape_), fill);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (extent_product(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string());
    }
  }

  // Rank-2 literal: Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(std::size_t r) {
    require_rank(2);
    return {data_.data() + r * shape_[1], shape_[1]};
  }
  std::span<const double> row(std::size_t r) const {
    require_rank(2);
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

  void require_rank(std::size_t r) const {
    if (shape_.size() != r) {
      throw DimensionError("expected rank-" + std::to_string(r) + " tensor, got " +
                           shape_string());
    }
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t extent_product(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  void check_shape() const {
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string());
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  a.require_rank(2);
  b.require_rank(2);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    auto orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

namespace detail {
template <class Op>
Tensor zip(const Tensor& a, const Tensor& b, Op op, const char* name) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(name) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(a[i], b[i]);
  return out;
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, std::plus<>(), "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, std::minus<>(), "sub");
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, std::multiplies<>(), "mul");
}
inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-10) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Numerically stable softmax of one row, written into `out`.
inline void softmax_into(std::span<const double> z, std::span<double> out) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp(z[k] - zmax);
    total += out[k];
  }
  for (auto& v : out) v /= total;
}

inline double log_sum_exp(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - zmax);
  return zmax + std::log(total);
}

inline Tensor softmax(const Tensor& z) {
  z.require_rank(1);
  Tensor out(z.shape());
  softmax_into(z.data(), out.data());
  return out;
}

inline Tensor softmax_rows(const Tensor& z) {
  z.require_rank(2);
  Tensor out(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) softmax_into(z.row(r), out.row(r));
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  // first maximum wins, so ties resolve to the lowest index
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Rows of `src` selected by `ids`, in order.
inline Tensor gather_rows(const Tensor& src, std::span<const std::size_t> ids) {
  src.require_rank(2);
  if (ids.empty()) throw ArgumentError("gather_rows: empty index list");
  Tensor out({ids.size(), src.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= src.rows()) throw IndexError("gather_rows: row index out of range");
    std::copy_n(src.row(ids[i]).begin(), src.cols(), out.row(i).begin());
  }
  return out;
}

}  // namespace dynlab
