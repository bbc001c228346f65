#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dynlab/errors.hpp"

namespace dynlab {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  // (first epoch, lr multiplier) pairs, ascending by epoch. Piecewise constant.
  std::vector<std::pair<std::size_t, double>> schedule;
};

class SgdState {
 public:
  SgdState() = default;
  SgdState(SgdConfig config, std::size_t param_count)
      : config_(std::move(config)), velocity_(param_count, 0.0) {
    if (!(config_.lr > 0.0)) throw ArgumentError("sgd: lr must be positive");
    if (config_.momentum < 0.0 || config_.momentum >= 1.0) {
      throw ArgumentError("sgd: momentum must be in [0, 1)");
    }
    if (config_.weight_decay < 0.0) throw ArgumentError("sgd: weight_decay must be >= 0");
  }

  const SgdConfig& config() const noexcept { return config_; }
  std::span<const double> velocity() const noexcept { return velocity_; }

  double lr_at(std::size_t epoch) const {
    double mult = 1.0;
    for (const auto& [start, m] : config_.schedule) {
      if (epoch >= start) mult = m;
    }
    return config_.lr * mult;
  }

  // v <- momentum * v + (g + wd * theta);  theta <- theta - lr(epoch) * v
  std::vector<double> step(std::span<const double> params, std::span<const double> grad,
                           std::size_t epoch = 0) {
    if (params.size() != grad.size() || params.size() != velocity_.size()) {
      throw DimensionError("sgd_step: parameter, gradient and velocity lengths differ");
    }
    const double lr = lr_at(epoch);
    std::vector<double> out(params.begin(), params.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double g = grad[i] + config_.weight_decay * params[i];
      velocity_[i] = config_.momentum * velocity_[i] + g;
      out[i] -= lr * velocity_[i];
    }
    return out;
  }

 private:
  SgdConfig config_;
  std::vector<double> velocity_;
};

inline std::vector<double> sgd_step(SgdState& state, std::span<const double> params,
                                    std::span<const double> grad, std::size_t epoch = 0) {
  return state.step(params, grad, epoch);
}

}  // namespace dynlab
