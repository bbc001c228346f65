#pragma once

// Learnable label parameters.
//
// Class mode keeps one smoothing scalar alpha_k per class. An instance with
// annotated class y gets 1 - alpha_y on y and alpha_y / (c - 1) on every other
// class. Instance mode keeps a free logit row z_i per training instance and
// realizes it as softmax(z_i).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/soft_labels.hpp"
#include "dynlab/tensor.hpp"

namespace dynlab {

struct ClassAlphas {
  std::vector<double> alphas;
  double lr = 1.0;
};

struct InstanceLogits {
  Tensor z;  // [N x c]
  double lr = 1.0;
};

using LabelBank = std::variant<ClassAlphas, InstanceLogits>;

inline std::size_t bank_classes(const LabelBank& bank) {
  if (const auto* ca = std::get_if<ClassAlphas>(&bank)) return ca->alphas.size();
  return std::get<InstanceLogits>(bank).z.cols();
}

inline std::size_t bank_param_count(const LabelBank& bank) {
  if (const auto* ca = std::get_if<ClassAlphas>(&bank)) return ca->alphas.size();
  return std::get<InstanceLogits>(bank).z.size();
}

inline double bank_lr(const LabelBank& bank) {
  return std::visit([](const auto& b) { return b.lr; }, bank);
}

namespace detail {
inline void check_target(int y, std::size_t c) {
  if (y < 0 || static_cast<std::size_t>(y) >= c) {
    throw IndexError("target class " + std::to_string(y) + " out of range for " +
                     std::to_string(c) + " classes");
  }
}
}  // namespace detail

inline SoftLabelMatrix realize_class(const ClassAlphas& bank, std::span<const int> targets) {
  const std::size_t c = bank.alphas.size();
  if (c < 2) throw ArgumentError("realize_class: need at least two classes");
  if (targets.empty()) throw ArgumentError("realize_class: no targets");
  Tensor rows({targets.size(), c});
  for (std::size_t i = 0; i < targets.size(); ++i) {
    detail::check_target(targets[i], c);
    const auto y = static_cast<std::size_t>(targets[i]);
    const double a = bank.alphas[y];
    const double off = a / static_cast<double>(c - 1);
    for (std::size_t k = 0; k < c; ++k) rows(i, k) = k == y ? 1.0 - a : off;
  }
  return SoftLabelMatrix(std::move(rows));
}

inline SoftLabelMatrix realize_instance(const InstanceLogits& bank,
                                        std::span<const std::size_t> ids) {
  if (ids.empty()) throw ArgumentError("realize_instance: no instance ids");
  Tensor rows({ids.size(), bank.z.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= bank.z.rows()) throw IndexError("realize_instance: instance id out of range");
    softmax_into(bank.z.row(ids[i]), rows.row(i));
  }
  return SoftLabelMatrix(std::move(rows));
}

// Realize rows for a batch, whatever the mode. `ids` index the bank (instance
// mode), `targets` are the annotated classes of the same instances.
inline SoftLabelMatrix realize(const LabelBank& bank, std::span<const std::size_t> ids,
                               std::span<const int> targets) {
  if (const auto* ca = std::get_if<ClassAlphas>(&bank)) return realize_class(*ca, targets);
  return realize_instance(std::get<InstanceLogits>(bank), ids);
}

namespace detail {
inline void check_init(std::size_t c, double init_target, bool allow_one_hot) {
  if (c < 2) throw ArgumentError("label init: need at least two classes");
  const double lo = 1.0 / static_cast<double>(c);
  const bool ok = init_target > lo && (init_target < 1.0 || (allow_one_hot && init_target == 1.0));
  if (!ok) {
    throw ArgumentError("label init: init_target " + std::to_string(init_target) +
                        " must lie in (1/c, 1)");
  }
}
}  // namespace detail

// init_target == 1 is accepted in class mode (alpha = 0, plain one-hot).
inline ClassAlphas init_class(std::size_t c, double init_target, double lr = 1.0) {
  detail::check_init(c, init_target, true);
  return ClassAlphas{std::vector<double>(c, 1.0 - init_target), lr};
}

// Row i gets logit t on its annotated class and 0 elsewhere, where
// t = log(init_target * (c - 1) / (1 - init_target)) makes softmax put exactly
// init_target on the annotated class.
inline InstanceLogits init_instance(std::size_t n, std::size_t c, std::span<const int> targets,
                                    double init_target, double lr = 1.0) {
  detail::check_init(c, init_target, false);
  if (targets.size() != n) throw DimensionError("init_instance: need one target per instance");
  const double t = std::log(init_target * static_cast<double>(c - 1) / (1.0 - init_target));
  InstanceLogits bank{Tensor({n, c}, 0.0), lr};
  for (std::size_t i = 0; i < n; ++i) {
    detail::check_target(targets[i], c);
    bank.z(i, static_cast<std::size_t>(targets[i])) = t;
  }
  return bank;
}

// Gradient of the meta loss with respect to the bank parameters, given
// per_class_meta[i][k] = dL_meta / dp_ik for the batch rows.
// Class mode sums contributions of all batch instances sharing a class.
inline std::vector<double> chain_to_params(const LabelBank& bank, const Tensor& per_class_meta,
                                           std::span<const std::size_t> ids,
                                           std::span<const int> targets) {
  per_class_meta.require_rank(2);
  const std::size_t n = per_class_meta.rows();
  const std::size_t c = per_class_meta.cols();
  if (c != bank_classes(bank)) throw DimensionError("chain_to_params: class count mismatch");
  if (const auto* ca = std::get_if<ClassAlphas>(&bank)) {
    if (targets.size() != n) throw DimensionError("chain_to_params: need one target per row");
    std::vector<double> g(ca->alphas.size(), 0.0);
    const double spread = 1.0 / static_cast<double>(c - 1);
    for (std::size_t i = 0; i < n; ++i) {
      detail::check_target(targets[i], c);
      const auto y = static_cast<std::size_t>(targets[i]);
      auto m = per_class_meta.row(i);
      double off = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        if (k != y) off += m[k];
      }
      g[y] += -m[y] + spread * off;
    }
    return g;
  }
  const auto& z = std::get<InstanceLogits>(bank).z;
  if (ids.size() != n) throw DimensionError("chain_to_params: need one id per row");
  std::vector<double> g(z.size(), 0.0);
  std::vector<double> s(c);
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] >= z.rows()) throw IndexError("chain_to_params: instance id out of range");
    softmax_into(z.row(ids[i]), s);
    auto m = per_class_meta.row(i);
    // J_softmax^T m = s * (m - <s, m>)
    const double sm = dot(s, m);
    double* gi = g.data() + ids[i] * c;
    for (std::size_t k = 0; k < c; ++k) gi[k] += s[k] * (m[k] - sm);
  }
  return g;
}

// One plain SGD step on the label parameters. Class mode projects back onto
// [0, 1]; instance mode needs no projection.
inline LabelBank apply_meta_update(LabelBank bank, std::span<const double> meta_grads) {
  if (meta_grads.size() != bank_param_count(bank)) {
    throw DimensionError("apply_meta_update: gradient has " + std::to_string(meta_grads.size()) +
                         " entries, bank has " + std::to_string(bank_param_count(bank)));
  }
  if (auto* ca = std::get_if<ClassAlphas>(&bank)) {
    for (std::size_t k = 0; k < ca->alphas.size(); ++k) {
      ca->alphas[k] = std::clamp(ca->alphas[k] - ca->lr * meta_grads[k], 0.0, 1.0);
    }
  } else {
    auto& ib = std::get<InstanceLogits>(bank);
    auto z = ib.z.data();
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= ib.lr * meta_grads[j];
  }
  return bank;
}

// Label export -----------------------------------------------------------------
//
//   # config=<hash> seed=<seed>
//   mode=instance|class
//   N=<rows>
//   c=<classes>
//   step=<step>
//   alphas=a_0,...,a_{c-1}        (class mode only)
//   p_00,p_01,...                 (N rows, 17 significant digits)
//
// Class mode exports one realized row per class (N == c).

struct LabelExport {
  std::string mode;
  std::size_t step = 0;
  std::vector<double> alphas;
  SoftLabelMatrix rows;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

inline std::string render_label_export(const LabelExport& e, const std::string& header_line) {
  std::ostringstream os;
  os << header_line << '\n';
  os << "mode=" << e.mode << '\n';
  os << "N=" << e.rows.size() << '\n';
  os << "c=" << e.rows.classes() << '\n';
  os << "step=" << e.step << '\n';
  if (e.mode == "class") os << "alphas=" << join_doubles(e.alphas) << '\n';
  for (std::size_t i = 0; i < e.rows.size(); ++i) os << join_doubles(e.rows.row(i)) << '\n';
  return os.str();
}

// Snapshot of a bank in export form. Instance mode realizes every row.
inline LabelExport export_bank(const LabelBank& bank, std::size_t step) {
  LabelExport e;
  e.step = step;
  if (const auto* ca = std::get_if<ClassAlphas>(&bank)) {
    e.mode = "class";
    e.alphas = ca->alphas;
    std::vector<int> classes(ca->alphas.size());
    for (std::size_t k = 0; k < classes.size(); ++k) classes[k] = static_cast<int>(k);
    e.rows = realize_class(*ca, classes);
  } else {
    const auto& ib = std::get<InstanceLogits>(bank);
    e.mode = "instance";
    e.rows = SoftLabelMatrix(softmax_rows(ib.z));
  }
  return e;
}

inline std::vector<double> parse_doubles(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ConfigError("bad number '" + tok + "' in label export");
    }
    out.push_back(v);
  }
  return out;
}

inline LabelExport parse_label_export(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  LabelExport e;
  std::size_t n = 0, c = 0;
  auto value_of = [&](const std::string& key) {
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (line.rfind(key + "=", 0) != 0) throw ConfigError("label export: expected '" + key + "='");
      return line.substr(key.size() + 1);
    }
    throw ConfigError("label export: missing '" + key + "'");
  };
  e.mode = value_of("mode");
  if (e.mode != "class" && e.mode != "instance") throw ConfigError("label export: unknown mode");
  n = std::stoul(value_of("N"));
  c = std::stoul(value_of("c"));
  e.step = std::stoul(value_of("step"));
  if (e.mode == "class") e.alphas = parse_doubles(value_of("alphas"));
  std::vector<double> data;
  data.reserve(n * c);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto v = parse_doubles(line);
    if (v.size() != c) throw ConfigError("label export: row " + std::to_string(rows) + " has wrong width");
    data.insert(data.end(), v.begin(), v.end());
    ++rows;
  }
  if (rows != n) throw ConfigError("label export: expected " + std::to_string(n) + " rows");
  e.rows = SoftLabelMatrix(Tensor({n, c}, std::move(data)));
  return e;
}

inline void write_label_export(const std::string& path, const LabelExport& e,
                               const std::string& header_line) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << render_label_export(e, header_line);
}

inline LabelExport read_label_export(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_label_export(ss.str());
}

}  // namespace dynlab
