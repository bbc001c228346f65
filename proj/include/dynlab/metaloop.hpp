#pragma once

// Learning soft labels by one-step lookahead meta-gradients.
//
// Per step: sample a train batch and a meta batch, realize the current
// labels, simulate one plain SGD step on the model as a function of those
// labels, differentiate the meta-set loss at the simulated parameters with
// respect to the label entries, update the label bank, then take the real
// model step with the labels realized from the updated bank.
//
// The per-entry meta-gradient M[i][k] = dL_meta(theta*) / dp_ik is available
// through three independent routes (GradPath):
//
//   closed_form         CE is affine in p, so d theta*/dp_ik = -(lr/n) grad l_ik
//                       and <g_meta, grad l_ik> = (s_i - e_k)^T (J_i g_meta).
//                       One reverse pass on the meta batch plus one forward-mode
//                       JVP over the train batch gives every entry.
//   lookahead_backprop  Differentiates the lookahead map entry by entry with
//                       reverse-mode: one backward pass per (i, k).
//   finite_difference   Central differences on each p_ik, recomputing theta*
//                       and the meta loss from scratch.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dynlab/dataset.hpp"
#include "dynlab/errors.hpp"
#include "dynlab/labelbank.hpp"
#include "dynlab/loss.hpp"
#include "dynlab/network.hpp"
#include "dynlab/training.hpp"

namespace dynlab {

enum class GradPath { closed_form, lookahead_backprop, finite_difference };

inline const char* grad_path_name(GradPath p) {
  switch (p) {
    case GradPath::closed_form: return "closed_form";
    case GradPath::lookahead_backprop: return "lookahead_backprop";
    case GradPath::finite_difference: return "finite_difference";
  }
  return "?";
}

inline GradPath parse_grad_path(const std::string& s) {
  if (s == "closed_form") return GradPath::closed_form;
  if (s == "lookahead_backprop") return GradPath::lookahead_backprop;
  if (s == "finite_difference") return GradPath::finite_difference;
  throw ConfigError("unknown grad path '" + s + "'");
}

struct MetaConfig {
  LoopConfig loop;
  GradPath grad_path = GradPath::closed_form;
  double fd_epsilon = 1e-6;
};

// Mean cross entropy at `net` against trusted one-hot meta targets.
inline double meta_loss(const Network& net, const Tensor& meta_x, std::span<const int> meta_y) {
  const auto logits = forward(net, meta_x);
  return loss_ce_soft(logits, SoftLabelMatrix::one_hot(meta_y, logits.cols()));
}

namespace detail {

inline std::vector<double> lookahead_rows(const Network& net, const Tensor& x,
                                          const Tensor& label_rows, double lr) {
  const auto cache = forward_cached(net, x);
  const auto grad = backward(net, cache, ce_objective_rows(cache.logits(), label_rows).dlogits);
  std::vector<double> out(net.params().begin(), net.params().end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] -= lr * grad[j];
  return out;
}

inline Network with_params(const Network& net, std::vector<double> params) {
  Network copy = net;
  copy.set_params(std::move(params));
  return copy;
}

// Gradient of the meta loss at the given parameters, and the loss itself.
inline std::pair<std::vector<double>, double> meta_grad_at(const Network& at, const Tensor& meta_x,
                                                           std::span<const int> meta_y) {
  const auto cache = forward_cached(at, meta_x);
  const auto obj = ce_objective(cache.logits(), SoftLabelMatrix::one_hot(meta_y, cache.logits().cols()));
  return {backward(at, cache, obj.dlogits), obj.loss};
}

}  // namespace detail

// theta* = theta - (lr / n) sum_i dL_i/dtheta. Plain SGD whatever the outer
// optimizer uses.
inline std::vector<double> lookahead_params(const Network& net, const Tensor& x,
                                            const SoftLabelMatrix& labels, double lr) {
  return detail::lookahead_rows(net, x, labels.tensor(), lr);
}

struct MetaGradient {
  Tensor per_class;          // [n x c], dL_meta / dp_ik
  double meta_loss = kNaN;   // L_meta(theta*)
};

// (-lr / n) (s_i . u_i - u_ik) with u = J g_meta, for a fixed meta gradient g_meta.
inline Tensor meta_gradient_given(const Network& net, const Tensor& train_x,
                                  std::span<const double> g_meta, double lr) {
  const std::size_t n = train_x.rows(), c = net.output_dim();
  const double scale = -lr / static_cast<double>(n);
  const Tensor s = softmax_rows(forward(net, train_x));
  const Tensor u = logits_jvp(net, train_x, g_meta);
  Tensor m({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const double su = dot(s.row(i), u.row(i));
    for (std::size_t k = 0; k < c; ++k) m(i, k) = scale * (su - u(i, k));
  }
  return m;
}

inline MetaGradient meta_gradient(const Network& net, const Tensor& train_x,
                                  const SoftLabelMatrix& labels, const Tensor& meta_x,
                                  std::span<const int> meta_y, double lr,
                                  GradPath path = GradPath::closed_form, double fd_epsilon = 1e-6) {
  if (meta_y.empty()) throw ArgumentError("meta_gradient: empty meta batch");
  check_batch(net, train_x);
  check_batch(net, meta_x);
  if (meta_x.rows() != meta_y.size()) throw DimensionError("meta_gradient: meta targets mismatch");
  const std::size_t n = train_x.rows(), c = net.output_dim();
  if (labels.size() != n || labels.classes() != c) {
    throw DimensionError("meta_gradient: labels must be [batch x classes]");
  }
  const double scale = -lr / static_cast<double>(n);
  MetaGradient out{Tensor({n, c}), kNaN};

  if (path == GradPath::finite_difference) {
    out.meta_loss = meta_loss(detail::with_params(net, lookahead_params(net, train_x, labels, lr)),
                              meta_x, meta_y);
    Tensor rows = labels.tensor();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double orig = rows(i, k);
        rows(i, k) = orig + fd_epsilon;
        const double up = meta_loss(
            detail::with_params(net, detail::lookahead_rows(net, train_x, rows, lr)), meta_x, meta_y);
        rows(i, k) = orig - fd_epsilon;
        const double down = meta_loss(
            detail::with_params(net, detail::lookahead_rows(net, train_x, rows, lr)), meta_x, meta_y);
        rows(i, k) = orig;
        out.per_class(i, k) = (up - down) / (2.0 * fd_epsilon);
      }
    }
    return out;
  }

  const auto train_cache = forward_cached(net, train_x);
  const auto obj = ce_objective(train_cache.logits(), labels);
  const auto grad = backward(net, train_cache, obj.dlogits);
  std::vector<double> star(net.params().begin(), net.params().end());
  for (std::size_t j = 0; j < star.size(); ++j) star[j] -= lr * grad[j];
  const auto [g_meta, lmeta] = detail::meta_grad_at(detail::with_params(net, std::move(star)), meta_x, meta_y);
  out.meta_loss = lmeta;
  const Tensor s = softmax_rows(train_cache.logits());

  if (path == GradPath::closed_form) {
    out.per_class = meta_gradient_given(net, train_x, g_meta, lr);
    return out;
  }

  // lookahead_backprop
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id[1] = {i};
    const auto cache_i = forward_cached(net, gather_rows(train_x, id));
    for (std::size_t k = 0; k < c; ++k) {
      Tensor d({1, c});
      for (std::size_t j = 0; j < c; ++j) d(0, j) = s(i, j) - (j == k ? 1.0 : 0.0);
      out.per_class(i, k) = scale * dot(g_meta, backward(net, cache_i, d));
    }
  }
  return out;
}

// Train/meta instance sets for one run. Must be disjoint and both nonempty.
struct MetaSplits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> meta;

  static MetaSplits from(const DatasetBundle& data) {
    return {data.indices(Split::train), data.indices(Split::meta)};
  }
};

inline void check_meta_splits(const MetaSplits& s, std::size_t n) {
  if (s.train.empty()) throw ConfigError("meta training: train set is empty");
  if (s.meta.empty()) throw ConfigError("meta training: meta set is empty");
  std::vector<char> seen(n, 0);
  for (auto i : s.train) {
    if (i >= n) throw IndexError("meta training: train id out of range");
    seen[i] = 1;
  }
  for (auto i : s.meta) {
    if (i >= n) throw IndexError("meta training: meta id out of range");
    if (seen[i]) {
      throw ConfigError("meta training: train and meta sets overlap; optimizing labels and model "
                        "on the same data is degenerate");
    }
  }
}

struct MetaResult {
  Network net;
  LabelBank bank;
  TrajectoryLog log;
};

// Optional per-step observer: (step, bank after the label update, net after the model step).
using MetaObserver = std::function<void(std::size_t, const LabelBank&, const Network&)>;

inline MetaResult run_meta_training(const MetaConfig& cfg, const DatasetBundle& data, Network net,
                                    LabelBank bank, const MetaObserver& observer = {},
                                    std::optional<MetaSplits> splits = std::nullopt) {
  data.validate();
  const MetaSplits sp = splits ? *splits : MetaSplits::from(data);
  check_meta_splits(sp, data.size());
  if (cfg.loop.batch_train == 0 || cfg.loop.batch_meta == 0) throw ConfigError("batch sizes must be >= 1");
  if (bank_classes(bank) != data.classes) throw DimensionError("label bank class count mismatch");
  if (const auto* ib = std::get_if<InstanceLogits>(&bank); ib && ib->z.rows() != data.size()) {
    throw DimensionError("instance label bank must have one row per dataset instance");
  }

  BatchSampler meta_sampler(sp.meta, cfg.loop.batch_meta, Rng(cfg.loop.seed).fork(2));
  const bool is_class = std::holds_alternative<ClassAlphas>(bank);

  LoopHooks hooks;
  hooks.method = is_class ? "meta_class" : "meta_instance";
  hooks.labels = [&bank](std::span<const std::size_t> ids, std::span<const int> targets) {
    return realize(bank, ids, targets);
  };
  hooks.adapt = [&](std::size_t, std::span<const std::size_t> ids, std::span<const int> targets,
                    const Network& current, double lr) {
    const auto meta_ids = meta_sampler.next();
    const Tensor mx = data.gather(meta_ids);
    const auto my = data.gather_targets(meta_ids);
    const auto labels = realize(bank, ids, targets);
    const auto mg = meta_gradient(current, data.gather(ids), labels, mx, my, lr, cfg.grad_path,
                                  cfg.fd_epsilon);
    const auto grads = chain_to_params(bank, mg.per_class, ids, targets);
    bank = apply_meta_update(std::move(bank), grads);
    return mg.meta_loss;
  };
  hooks.snapshot = [&bank](std::size_t step) { return export_bank(bank, step); };
  if (observer) {
    hooks.on_step = [&](std::size_t step, const Network& current) { observer(step, bank, current); };
  }

  auto loop = run_loop(std::move(net), data, cfg.loop, hooks, sp.train);
  return {std::move(loop.net), std::move(bank), std::move(loop.log)};
}

// Realized rows for every dataset instance (instance mode), or per annotated
// class (class mode). Rows for instances the bank never trained stay at init.
inline SoftLabelMatrix realize_all(const LabelBank& bank, const DatasetBundle& data) {
  std::vector<std::size_t> ids(data.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return realize(bank, ids, data.targets);
}

}  // namespace dynlab
