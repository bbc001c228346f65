#pragma once

// Training scaffold shared by the meta-learning loop and every baseline, so
// compared methods see the same batches and differ only in label policy.
//
// Determinism: the train sampler draws from stream 1 of the run seed and the
// meta sampler from stream 2. A run that never samples meta batches therefore
// sees exactly the same train batches as one that does.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dynlab/dataset.hpp"
#include "dynlab/labelbank.hpp"
#include "dynlab/loss.hpp"
#include "dynlab/network.hpp"
#include "dynlab/noisytools.hpp"
#include "dynlab/rng.hpp"
#include "dynlab/sgd.hpp"

namespace dynlab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LoopConfig {
  std::size_t batch_train = 128;
  std::size_t batch_meta = 256;
  std::size_t steps = 1000;
  SgdConfig sgd;
  std::uint64_t seed = 0;
  std::size_t log_every = 0;  // 0: evaluate only after the final step
  std::size_t snapshot_every = 0;
  bool entropy_curriculum = false;
};

// Uniform minibatches without replacement within an epoch; the pool is
// reshuffled whenever fewer than `batch` unused indices remain.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, std::size_t batch, Rng rng)
      : pool_(std::move(pool)), batch_(batch), rng_(std::move(rng)) {
    if (pool_.empty()) throw ArgumentError("BatchSampler: empty pool");
    if (batch_ == 0) throw ArgumentError("BatchSampler: batch size must be positive");
    batch_ = std::min(batch_, pool_.size());
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (cursor_ + batch_ > order_.size()) {
      ++epoch_;
      reshuffle();
    }
    std::vector<std::size_t> ids(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
    cursor_ += batch_;
    return ids;
  }

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  void reshuffle() {
    const auto perm = rng_permutation(rng_, pool_.size());
    order_.resize(pool_.size());
    for (std::size_t i = 0; i < perm.size(); ++i) order_[i] = pool_[perm[i]];
    cursor_ = 0;
  }

  std::vector<std::size_t> pool_;
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double meta_loss = kNaN;
  bool evaluated = false;
  double train_acc = kNaN;
  double meta_acc = kNaN;
  double test_acc = kNaN;
  std::vector<double> target_mass;  // per class: mean label mass on the annotated class
  std::optional<CorrectionReport> correction;
};

struct TrajectoryLog {
  std::string method;
  std::size_t classes = 0;
  std::vector<StepRecord> records;
  std::vector<LabelExport> snapshots;

  std::vector<double> train_losses() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.train_loss);
    return out;
  }
  const StepRecord* last_evaluated() const {
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
      if (it->evaluated) return &*it;
    }
    return nullptr;
  }
};

// Stable CSV columns; one row per evaluated step.
inline std::string trajectory_csv_header(std::size_t classes) {
  std::string h =
      "method,step,epoch,lr,train_loss,meta_loss,train_acc,meta_acc,test_acc,frac_corrected,"
      "top1_noise,top1_acc,top5_acc,entropy_noisy,entropy_clean";
  for (std::size_t k = 0; k < classes; ++k) h += ",mass_" + std::to_string(k);
  return h;
}

inline std::string trajectory_csv_row(const std::string& method, const StepRecord& r,
                                      std::size_t classes) {
  std::ostringstream os;
  auto num = [&](double v) { os << ',' << format_double(v); };
  os << method << ',' << r.step << ',' << r.epoch;
  num(r.lr);
  num(r.train_loss);
  num(r.meta_loss);
  num(r.train_acc);
  num(r.meta_acc);
  num(r.test_acc);
  if (r.correction) {
    num(r.correction->frac_corrected);
    num(r.correction->top1_noise);
    num(r.correction->topk(1));
    num(r.correction->topk(5));
    num(r.correction->mean_entropy_noisy);
    num(r.correction->mean_entropy_clean);
  } else {
    for (int i = 0; i < 6; ++i) num(kNaN);
  }
  for (std::size_t k = 0; k < classes; ++k) num(k < r.target_mass.size() ? r.target_mass[k] : kNaN);
  return os.str();
}

inline std::string trajectory_csv(const TrajectoryLog& log, const std::string& header_line) {
  std::ostringstream os;
  os << header_line << '\n' << trajectory_csv_header(log.classes) << '\n';
  for (const auto& r : log.records) {
    if (r.evaluated) os << trajectory_csv_row(log.method, r, log.classes) << '\n';
  }
  return os.str();
}

// Accuracy against clean targets on the given instances; NaN when empty.
inline double evaluate_accuracy(const Network& net, const DatasetBundle& data,
                                std::span<const std::size_t> ids, bool clean = true) {
  if (ids.empty()) return kNaN;
  const auto logits = forward(net, data.gather(ids));
  std::vector<int> y;
  y.reserve(ids.size());
  const auto& src = clean ? data.clean_targets() : data.targets;
  for (auto i : ids) y.push_back(src[i]);
  return accuracy(logits, y);
}

// Hooks that specialize the scaffold into a particular method.
struct LoopHooks {
  std::string method;
  // Training targets for the given instances.
  std::function<SoftLabelMatrix(std::span<const std::size_t>, std::span<const int>)> labels;
  // Runs before the model step and may change what `labels` returns.
  // Receives (step, train ids, their targets, current net, current model lr);
  // returns the meta loss or NaN.
  std::function<double(std::size_t, std::span<const std::size_t>, std::span<const int>,
                       const Network&, double)>
      adapt;
  std::function<LabelExport(std::size_t)> snapshot;
  std::function<void(std::size_t, const Network&)> on_step;
  double confidence_beta = 0.0;
};

struct LoopResult {
  Network net;
  TrajectoryLog log;
};

namespace detail {

inline StepRecord& evaluate_into(StepRecord& rec, const Network& net, const DatasetBundle& data,
                                 const LoopHooks& hooks, std::span<const std::size_t> train_ids) {
  rec.evaluated = true;
  rec.train_acc = evaluate_accuracy(net, data, train_ids, false);
  const auto held = data.heldout();
  rec.meta_acc = evaluate_accuracy(net, data, held);
  const auto test = data.indices(Split::test);
  rec.test_acc = evaluate_accuracy(net, data, test);

  const auto targets = data.gather_targets(train_ids);
  const auto labels = hooks.labels(train_ids, targets);
  std::vector<double> mass(data.classes, 0.0), count(data.classes, 0.0);
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    const auto y = static_cast<std::size_t>(targets[i]);
    mass[y] += labels.row(i)[y];
    count[y] += 1.0;
  }
  for (std::size_t k = 0; k < mass.size(); ++k) mass[k] = count[k] > 0 ? mass[k] / count[k] : kNaN;
  rec.target_mass = std::move(mass);

  if (data.true_targets) {
    std::vector<int> truth;
    for (auto i : train_ids) truth.push_back((*data.true_targets)[i]);
    std::vector<bool> noisy(train_ids.size());
    for (std::size_t i = 0; i < train_ids.size(); ++i) noisy[i] = targets[i] != truth[i];
    rec.correction =
        correction_report(labels, targets, std::span<const int>(truth), noisy, rec.step);
  }
  return rec;
}

}  // namespace detail

inline LoopResult run_loop(Network net, const DatasetBundle& data, const LoopConfig& cfg,
                           const LoopHooks& hooks,
                           std::optional<std::vector<std::size_t>> train_pool = std::nullopt) {
  data.validate();
  if (cfg.batch_train == 0 || cfg.batch_meta == 0) throw ConfigError("batch sizes must be >= 1");
  const auto train_ids = train_pool ? *train_pool : data.indices(Split::train);
  if (train_ids.empty()) throw ConfigError("dataset has no train instances");
  const Rng root(cfg.seed);
  BatchSampler sampler(train_ids, cfg.batch_train, root.fork(1));
  SgdState sgd(cfg.sgd, net.param_count());

  LoopResult result;
  result.log.method = hooks.method;
  result.log.classes = data.classes;
  result.log.records.reserve(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto ids = sampler.next();
    const std::size_t epoch = sampler.epoch();
    const double lr = sgd.lr_at(epoch);
    const auto targets = data.gather_targets(ids);
    const Tensor x = data.gather(ids);

    StepRecord rec;
    rec.step = t;
    rec.epoch = epoch;
    rec.lr = lr;
    if (hooks.adapt) rec.meta_loss = hooks.adapt(t, ids, targets, net, lr);

    const auto labels = hooks.labels(ids, targets);
    const auto cache = forward_cached(net, x);
    std::vector<double> weights;
    if (cfg.entropy_curriculum) weights = entropy_weights(labels);
    const auto obj = ce_objective(cache.logits(), labels, weights, hooks.confidence_beta);
    rec.train_loss = obj.loss;
    const auto grad = backward(net, cache, obj.dlogits);
    net.set_params(sgd.step(net.params(), grad, epoch));

    const bool last = t + 1 == cfg.steps;
    if (last || (cfg.log_every > 0 && (t + 1) % cfg.log_every == 0)) {
      detail::evaluate_into(rec, net, data, hooks, train_ids);
    }
    if (hooks.snapshot && cfg.snapshot_every > 0 && (t + 1) % cfg.snapshot_every == 0) {
      result.log.snapshots.push_back(hooks.snapshot(t + 1));
    }
    if (hooks.on_step) hooks.on_step(t, net);
    result.log.records.push_back(std::move(rec));
  }
  result.net = std::move(net);
  return result;
}

}  // namespace dynlab
